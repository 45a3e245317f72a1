"""Stage 1: the self-supervised label network and the semantic dictionaries."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import MultiLabelDataset, batch_similarity
from .errors import ConfigError, DataError, DimensionError, MissingEntryError, NumericError
from .linalg import sign_binarize
from .losses import contrastive_cosine, quantization, squared_error
from .nn import MlpNetwork, OptimizerState, backward, forward, optimizer_step

log = logging.getLogger(__name__)


@dataclass
class SemanticNetConfig:
    K: int = 16
    hidden: tuple = (256, 128)
    alpha: float = 2.0
    lam: float = 0.5
    eta: float = 0.5
    beta: float = 0.1
    margin: float = 0.0
    epochs: int = 100
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0

    def validate(self) -> None:
        for name in ("alpha", "lam", "eta", "beta"):
            if getattr(self, name) < 0:
                raise ConfigError(f"semantic.{name} must be non-negative")
        if not 0.0 <= self.margin <= 1.0:
            raise ConfigError("semantic.margin must lie in [0, 1]")
        if self.K < 1 or self.batch_size < 1 or self.epochs < 0 or self.lr <= 0:
            raise ConfigError("semantic: K, batch_size must be positive, epochs >= 0, lr > 0")


@dataclass
class LossBreakdown:
    total: float
    components: tuple
    grads: dict = field(repr=False, default=None)
    kinks: np.ndarray = field(repr=False, default=None)


def j_lab_loss(rec, labels, cfg: SemanticNetConfig) -> LossBreakdown:
    """Label-network objective on one batch.

    ``alpha*J1 + lam*J2 + eta*J3 + beta*J4``: cosine margin hinges on the
    features (J1) and hash outputs (J2) over the full batch x batch grid,
    squared classification error (J3) and quantization error (J4).
    Gradients w.r.t. F, H and L_hat are returned in ``grads``.
    """
    labels = np.asarray(labels, dtype=np.float64)
    S = batch_similarity(labels, labels)
    j1, dF, _, act1 = contrastive_cosine(rec.F, rec.F, S, cfg.margin, same=True)
    j2, dH, _, act2 = contrastive_cosine(rec.H, rec.H, S, cfg.margin, same=True)
    j3, dL = squared_error(rec.L_hat, labels)
    j4, dQ, B = quantization(rec.H)
    total = cfg.alpha * j1 + cfg.lam * j2 + cfg.eta * j3 + cfg.beta * j4
    grads = {
        "F": cfg.alpha * dF,
        "H": cfg.lam * dH + cfg.beta * dQ,
        "L_hat": cfg.eta * dL,
    }
    kinks = np.concatenate([act1.ravel(), act2.ravel(), (B > 0).ravel()])
    return LossBreakdown(float(total), (j1, j2, j3, j4), grads, kinks)


def _batches(rng: np.random.Generator, n: int, batch_size: int):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start : start + batch_size]


def train_semantic(labels, cfg: SemanticNetConfig, history: list | None = None) -> MlpNetwork:
    """Mini-batch Adam on the label-network objective.

    ``labels`` is the (n, C) training label matrix, or a dataset. Per-epoch
    mean batch losses (total and the four components) are appended to
    ``history`` when given. Epoch 0 in the history is the untrained network.
    """
    if isinstance(labels, MultiLabelDataset):
        labels = labels.labels
    cfg.validate()
    L = np.asarray(labels, dtype=np.float64)
    n, C = L.shape
    net = MlpNetwork([C, *cfg.hidden], cfg.K, C, seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed + 1)
    opt = OptimizerState("adam", lr=cfg.lr)
    if history is not None:
        history.append(_epoch_summary(0, [
            j_lab_loss(forward(net, L[i : i + cfg.batch_size]), L[i : i + cfg.batch_size], cfg)
            for i in range(0, n, cfg.batch_size)
        ]))
    for epoch in range(1, cfg.epochs + 1):
        parts = []
        for b, idx in enumerate(_batches(rng, n, cfg.batch_size)):
            rec = forward(net, L[idx])
            out = j_lab_loss(rec, L[idx], cfg)
            if not np.isfinite(out.total):
                raise NumericError(f"semantic network: non-finite loss at epoch {epoch}, batch {b}")
            g = out.grads
            grads = backward(net, rec, g["F"], g["H"], g["L_hat"])
            optimizer_step(opt, net.params, grads)
            parts.append(out)
        if history is not None:
            history.append(_epoch_summary(epoch, parts))
        if epoch == 1 or epoch % 25 == 0 or epoch == cfg.epochs:
            log.debug("semantic epoch %d loss %.6g", epoch, np.mean([p.total for p in parts]))
    return net


def _epoch_summary(epoch: int, parts) -> dict:
    comps = np.mean([p.components for p in parts], axis=0)
    return {
        "epoch": epoch,
        "total": float(np.mean([p.total for p in parts])),
        "components": [float(c) for c in comps],
    }


# --- dictionaries ------------------------------------------------------------

class SemanticDictionary:
    """Code and feature dictionaries keyed by distinct label vectors.

    ``keys`` (C_dict x C, int8), ``U`` (C_dict x K, +/-1 floats) and ``Q``
    (C_dict x feature_dim) are row-aligned. Arrays are read-only.
    """

    def __init__(self, keys, U, Q):
        keys = np.asarray(keys, dtype=np.int8)
        U = np.asarray(U, dtype=np.float64)
        Q = np.asarray(Q, dtype=np.float64)
        if not (len(keys) == len(U) == len(Q)):
            raise DimensionError("dictionary arrays have different row counts")
        if not np.isin(U, (-1.0, 1.0)).all():
            raise DataError("dictionary codes must be +/-1")
        for arr in (keys, U, Q):
            arr.setflags(write=False)
        self.keys, self.U, self.Q = keys, U, Q
        self._index = {k.tobytes(): i for i, k in enumerate(keys)}
        if len(self._index) != len(keys):
            raise DataError("dictionary keys are not distinct")

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def K(self) -> int:
        return self.U.shape[1]

    def index_of(self, labels, fallback: bool = False) -> np.ndarray:
        """Row index of each label vector in ``labels``.

        Unknown label vectors raise :class:`MissingEntryError` unless
        ``fallback`` is set, in which case they map to the key at the
        smallest label Hamming distance (lowest index on ties).
        """
        labels = np.atleast_2d(np.asarray(labels)).astype(np.int8)
        if labels.shape[1] != self.keys.shape[1]:
            raise DimensionError(f"labels have {labels.shape[1]} classes, dictionary {self.keys.shape[1]}")
        out = np.empty(len(labels), dtype=np.int64)
        for r, lab in enumerate(labels):
            i = self._index.get(lab.tobytes())
            if i is None:
                if not fallback:
                    raise MissingEntryError(f"label vector {lab.tolist()} has no dictionary entry")
                i = int(np.argmin(np.count_nonzero(self.keys != lab, axis=1)))
            out[r] = i
        return out

    def __eq__(self, other):
        if not isinstance(other, SemanticDictionary):
            return NotImplemented
        return all(
            np.array_equal(a, b)
            for a, b in ((self.keys, other.keys), (self.U, other.U), (self.Q, other.Q))
        )


def build_dictionaries(net: MlpNetwork, train_labels) -> SemanticDictionary:
    labels = np.atleast_2d(np.asarray(train_labels)).astype(np.int8)
    if labels.shape[1] != net.input_dim:
        raise DimensionError(f"labels have {labels.shape[1]} classes, network expects {net.input_dim}")
    # first-occurrence order keeps the dictionary stable under reshuffles of equal content
    _, first = np.unique(labels, axis=0, return_index=True)
    keys = labels[np.sort(first)]
    rec = forward(net, keys.astype(np.float64))
    return SemanticDictionary(keys, sign_binarize(rec.H), rec.F)


def save_dictionary(d: SemanticDictionary, path) -> Path:
    path = Path(path)
    C, K, Fd = d.keys.shape[1], d.K, d.Q.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"l{j}" for j in range(C)] + [f"u{j}" for j in range(K)] + [f"q{j}" for j in range(Fd)])
        for key, u, q in zip(d.keys, d.U, d.Q):
            w.writerow([str(int(x)) for x in key] + [str(int(x)) for x in u] + [repr(float(x)) for x in q])
    return path


def load_dictionary(path) -> SemanticDictionary:
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    C = sum(h.startswith("l") for h in header)
    K = sum(h.startswith("u") for h in header)
    try:
        arr = [[float(x) for x in r] for r in body]
    except ValueError as exc:
        raise DataError(f"malformed dictionary file {path}: {exc}") from None
    arr = np.array(arr, dtype=np.float64).reshape(len(body), len(header))
    return SemanticDictionary(arr[:, :C], arr[:, C : C + K], arr[:, C + K :])
