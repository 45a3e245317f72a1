"""Stage 2: the feature network trained against the semantic dictionaries.

Variants:

``full``
    symmetric batch terms plus asymmetric batch-vs-dictionary terms, all
    with scalable margins taken from the dictionary codes.
``sym``
    asymmetric terms dropped.
``mars``
    every margin replaced by the constant ``mars_margin``.
``cos``
    the four cosine-hinge terms replaced by the logistic pairwise loss on
    inner products.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .data import batch_similarity
from .errors import ConfigError, NumericError
from .linalg import cosine_matrix
from .losses import contrastive_cosine, log_map_pairwise, quantization, squared_error
from .nn import MlpNetwork, OptimizerState, backward, forward, optimizer_step
from .semantic import LossBreakdown, SemanticDictionary, _batches, _epoch_summary

log = logging.getLogger(__name__)

VARIANTS = ("full", "sym", "mars", "cos")


@dataclass
class ImageNetConfig:
    K: int = 16
    hidden: tuple = (256, 128)
    alpha: float = 0.01
    lam: float = 1.0
    gamma: float = 0.01
    mu: float = 1.0
    eta: float = 2.0
    beta: float = 0.05
    epochs: int = 100
    batch_size: int = 64
    lr: float = 3e-5
    momentum: float = 0.9
    variant: str = "full"
    mars_margin: float | None = None
    margin_source: str = "codes"
    unseen_fallback: bool = False
    seed: int = 0

    def validate(self) -> None:
        for name in ("alpha", "lam", "gamma", "mu", "eta", "beta"):
            if getattr(self, name) < 0:
                raise ConfigError(f"image.{name} must be non-negative")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.variant == "mars":
            if self.mars_margin is None or not 0.0 <= self.mars_margin <= 1.0:
                raise ConfigError("variant 'mars' needs mars_margin in [0, 1]")
        elif self.mars_margin is not None:
            raise ConfigError("mars_margin is only valid with variant 'mars'")
        if self.margin_source not in ("codes", "features"):
            raise ConfigError("margin_source must be 'codes' or 'features'")
        if self.K < 1 or self.batch_size < 1 or self.epochs < 0 or self.lr <= 0:
            raise ConfigError("image: K, batch_size must be positive, epochs >= 0, lr > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("image.momentum must lie in [0, 1)")

    @property
    def loss_name(self) -> str:
        return "log_map_pairwise" if self.variant == "cos" else "margin_scalable_cosine"


def scalable_margin(u_a, u_b) -> float:
    """``max(0, cos(u_a, u_b))`` for two dictionary codes."""
    return float(max(0.0, cosine_matrix(u_a, u_b)[0, 0]))


@dataclass
class BatchTargets:
    """Similarities and margins for one batch against itself and the dictionary."""

    S: np.ndarray
    M: np.ndarray
    A: np.ndarray
    M_dict: np.ndarray


def batch_targets(labels, d: SemanticDictionary, cfg: ImageNetConfig) -> BatchTargets:
    labels = np.asarray(labels)
    S = batch_similarity(labels, labels)
    A = batch_similarity(labels, d.keys)
    if cfg.variant == "mars":
        M = np.full(S.shape, cfg.mars_margin)
        M_dict = np.full(A.shape, cfg.mars_margin)
    elif cfg.variant == "cos":
        M = M_dict = None
    else:
        idx = d.index_of(labels, fallback=cfg.unseen_fallback)
        table = np.maximum(0.0, cosine_matrix(*(2 * [d.U if cfg.margin_source == "codes" else d.Q])))
        # identical keys get an exact 1 regardless of round-off
        np.fill_diagonal(table, 1.0)
        M = table[np.ix_(idx, idx)]
        M_dict = table[idx]
    return BatchTargets(S, M, A, M_dict)


def j_ms(G1, G2, S, M, same: bool = False) -> float:
    """Margin-scalable hinge; see :func:`sadh.losses.contrastive_cosine`."""
    return contrastive_cosine(G1, G2, S, M, same=same)[0]


def log_map_pairwise_loss(H, S, H2=None) -> float:
    return log_map_pairwise(H, S, H2)[0]


def j_img_loss(rec, labels, d: SemanticDictionary, cfg: ImageNetConfig,
               targets: BatchTargets | None = None) -> LossBreakdown:
    """Feature-network objective on one batch.

    Components ``(J1..J6)``: hinge on F vs F, H vs H, F vs Q, H vs U,
    squared classification error, quantization error. Terms with a zero
    weight for the active variant are reported as 0.
    """
    t = targets if targets is not None else batch_targets(labels, d, cfg)
    labels = np.asarray(labels, dtype=np.float64)
    asym = cfg.variant != "sym"
    kinks = []
    if cfg.variant == "cos":
        j1, dF1, _ = log_map_pairwise(rec.F, t.S)
        j2, dH1, _ = log_map_pairwise(rec.H, t.S)
        j3, dF2, _ = log_map_pairwise(rec.F, t.A, d.Q)
        j4, dH2, _ = log_map_pairwise(rec.H, t.A, d.U)
    else:
        j1, dF1, _, a1 = contrastive_cosine(rec.F, rec.F, t.S, t.M, same=True)
        j2, dH1, _, a2 = contrastive_cosine(rec.H, rec.H, t.S, t.M, same=True)
        kinks += [a1.ravel(), a2.ravel()]
        if asym:
            j3, dF2, _, a3 = contrastive_cosine(rec.F, d.Q, t.A, t.M_dict)
            j4, dH2, _, a4 = contrastive_cosine(rec.H, d.U, t.A, t.M_dict)
            kinks += [a3.ravel(), a4.ravel()]
    if not asym:
        j3 = j4 = 0.0
        dF2 = dH2 = 0.0
    j5, dL = squared_error(rec.L_hat, labels)
    j6, dQ, B = quantization(rec.H)
    kinks.append((B > 0).ravel())
    gamma, mu = (cfg.gamma, cfg.mu) if asym else (0.0, 0.0)
    total = (cfg.alpha * j1 + cfg.lam * j2 + gamma * j3 + mu * j4
             + cfg.eta * j5 + cfg.beta * j6)
    grads = {
        "F": cfg.alpha * dF1 + gamma * dF2,
        "H": cfg.lam * dH1 + mu * dH2 + cfg.beta * dQ,
        "L_hat": cfg.eta * dL,
    }
    return LossBreakdown(float(total), (j1, j2, j3, j4, j5, j6), grads, np.concatenate(kinks))


def train_image(features, labels, d: SemanticDictionary, cfg: ImageNetConfig,
                history: list | None = None) -> MlpNetwork:
    """Mini-batch momentum SGD on the feature-network objective.

    ``features``/``labels`` are the training rows. History entries follow
    :func:`sadh.semantic.train_semantic`.
    """
    cfg.validate()
    X = np.asarray(features, dtype=np.float64)
    L = np.asarray(labels, dtype=np.float64)
    if d.K != cfg.K:
        raise ConfigError(f"dictionary has K={d.K} but image config K={cfg.K}")
    net = MlpNetwork([X.shape[1], *cfg.hidden], cfg.K, L.shape[1], seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed + 1)
    opt = OptimizerState("sgd_momentum", lr=cfg.lr, momentum=cfg.momentum)
    if history is not None:
        # epoch 0: untrained network over sequential batches of the same size
        history.append(_epoch_summary(0, [
            j_img_loss(forward(net, X[i : i + cfg.batch_size]), L[i : i + cfg.batch_size], d, cfg)
            for i in range(0, len(X), cfg.batch_size)
        ]))
    for epoch in range(1, cfg.epochs + 1):
        parts = []
        for b, idx in enumerate(_batches(rng, len(X), cfg.batch_size)):
            rec = forward(net, X[idx])
            out = j_img_loss(rec, L[idx], d, cfg)
            if not np.isfinite(out.total):
                raise NumericError(f"image network: non-finite loss at epoch {epoch}, batch {b}")
            g = out.grads
            grads = backward(net, rec, g["F"], g["H"], g["L_hat"])
            if not all(np.isfinite(v).all() for v in grads.values()):
                raise NumericError(f"image network: non-finite gradient at epoch {epoch}, batch {b}")
            optimizer_step(opt, net.params, grads)
            parts.append(out)
        if history is not None:
            history.append(_epoch_summary(epoch, parts))
        if epoch == 1 or epoch % 25 == 0 or epoch == cfg.epochs:
            log.debug("image epoch %d loss %.6g", epoch, np.mean([p.total for p in parts]))
    return net
