"""Finite-difference checks of the two training objectives on small networks."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .data import generate_synthetic
from .image import ImageNetConfig, batch_targets, j_img_loss
from .nn import GradCheckReport, MlpNetwork, backward, finite_difference_check, forward
from .semantic import SemanticDictionary, SemanticNetConfig, build_dictionaries, j_lab_loss


def _relu_pattern(rec) -> np.ndarray:
    if not rec.pre:
        return np.empty(0, dtype=bool)
    return np.concatenate([(z > 0).ravel() for z in rec.pre])


def semantic_objective(labels, cfg: SemanticNetConfig):
    """``loss_fn(net)`` for :func:`finite_difference_check` on the label objective."""
    L = np.asarray(labels, dtype=np.float64)

    def loss_fn(net):
        rec = forward(net, L)
        out = j_lab_loss(rec, L, cfg)
        g = backward(net, rec, out.grads["F"], out.grads["H"], out.grads["L_hat"])
        return out.total, g, np.concatenate([out.kinks, _relu_pattern(rec)])

    return loss_fn


def image_objective(X, labels, d: SemanticDictionary, cfg: ImageNetConfig):
    X = np.asarray(X, dtype=np.float64)
    L = np.asarray(labels, dtype=np.float64)
    targets = batch_targets(L, d, cfg)

    def loss_fn(net):
        rec = forward(net, X)
        out = j_img_loss(rec, L, d, cfg, targets)
        g = backward(net, rec, out.grads["F"], out.grads["H"], out.grads["L_hat"])
        return out.total, g, np.concatenate([out.kinks, _relu_pattern(rec)])

    return loss_fn


def check_all(batch: int = 8, trunk=(32, 16), K: int = 8, n_classes: int = 4,
              eps: float = 1e-6, tolerance: float = 1e-4, seed: int = 0,
              margin: float = 0.2) -> dict[str, GradCheckReport]:
    """Check the label objective and every feature-network variant.

    Uses a multi-label toy batch so both hinge branches are populated, and
    a non-zero label-network margin so the J1/J2 hinges are active.
    """
    ds = generate_synthetic(batch, n_classes, trunk[0], 0.3, 0.3, seed)
    rng = np.random.default_rng(seed)
    idx = rng.permutation(len(ds))[:batch]
    X, L = ds.features[idx], ds.labels[idx]
    reports = {}

    scfg = SemanticNetConfig(K=K, hidden=tuple(trunk[1:]), margin=margin, seed=seed)
    sem = MlpNetwork([n_classes, *trunk[1:]], K, n_classes, seed=seed)
    reports["semantic"] = finite_difference_check(
        sem, semantic_objective(L, scfg), eps=eps, tolerance=tolerance)

    d = build_dictionaries(sem, ds.labels)
    base = ImageNetConfig(K=K, hidden=tuple(trunk[1:]), seed=seed)
    for variant, mm in (("full", None), ("sym", None), ("mars", 0.5), ("cos", None)):
        cfg = replace(base, variant=variant, mars_margin=mm)
        net = MlpNetwork(list(trunk), K, n_classes, seed=seed + 1)
        reports[f"image:{variant}"] = finite_difference_check(
            net, image_objective(X, L, d, cfg), eps=eps, tolerance=tolerance)
    return reports
