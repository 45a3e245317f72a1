"""Loss building blocks with closed-form gradients.

Each function returns the loss value and gradients with respect to its
real-valued inputs. Hinges use subgradient 0 exactly at the kink.
"""

from __future__ import annotations

import numpy as np

from .linalg import row_norms, sign_binarize


def _cos_backward(A, An, na, Bn, C, dC):
    """Gradient of sum(dC * C) w.r.t. A where ``C = An @ Bn.T``."""
    return (dC @ Bn - (dC * C).sum(axis=1, keepdims=True) * An) / na[:, None]


def contrastive_cosine(G1, G2, S, M, same: bool = False):
    """Margin hinge on pairwise cosines.

    ``sum_ij 0.5 * [S_ij * max(M_ij - c_ij, 0) + (1 - S_ij) * max(M_ij + c_ij, 0)]``
    with ``c_ij = cos(G1_i, G2_j)``. ``M`` may be a scalar or an (n1, n2)
    array. Pass ``same=True`` when ``G1`` and ``G2`` are the same array; the
    returned ``dG1`` then already contains both slots' contributions.

    Returns ``(loss, dG1, dG2, active)`` where ``active`` is a boolean
    (n1, n2) array of hinges with positive argument.
    """
    G1 = np.asarray(G1, dtype=np.float64)
    G2 = np.asarray(G2, dtype=np.float64)
    n1 = row_norms(G1, "G1 row")
    n2 = n1 if same else row_norms(G2, "G2 row")
    A = G1 / n1[:, None]
    B = A if same else G2 / n2[:, None]
    C_raw = A @ B.T
    if same:
        # cos(x, x) is exactly 1; round-off would otherwise flicker at M = 1
        np.fill_diagonal(C_raw, 1.0)
    C = np.clip(C_raw, -1.0, 1.0)
    M = np.broadcast_to(np.asarray(M, dtype=np.float64), C.shape)
    sim_arg = M - C
    dis_arg = M + C
    sim_on = (S == 1) & (sim_arg > 0)
    dis_on = (S == 0) & (dis_arg > 0)
    loss = 0.5 * (np.where(sim_on, sim_arg, 0.0).sum() + np.where(dis_on, dis_arg, 0.0).sum())
    dC = 0.5 * (dis_on.astype(np.float64) - sim_on.astype(np.float64))
    # clipped entries have zero derivative
    dC = np.where(C_raw == C, dC, 0.0)
    dG1 = _cos_backward(G1, A, n1, B, C, dC)
    dG2 = _cos_backward(G2, B, n2, A, C.T, dC.T)
    if same:
        return float(loss), dG1 + dG2, None, sim_on | dis_on
    return float(loss), dG1, dG2, sim_on | dis_on


def squared_error(pred, target):
    """``||pred - target||^2`` summed over all entries, and its gradient."""
    diff = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return float((diff * diff).sum()), 2.0 * diff


def quantization(H):
    """``||H - sign(H)||^2`` with the codes held fixed; returns (loss, dH, signs)."""
    B = sign_binarize(H)
    loss, dH = squared_error(H, B)
    return loss, dH, B


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def log_map_pairwise(G1, S, G2=None, scale: float = 0.5):
    """Negative log-likelihood of pairwise similarity under a logistic model.

    ``-sum_ij (S_ij * t_ij - log(1 + exp(t_ij)))`` with
    ``t_ij = scale * <G1_i, G2_j>``. ``G2=None`` means ``G2 = G1``, in which
    case ``dG1`` carries both slots' contributions and ``dG2`` is ``None``.
    """
    G1 = np.asarray(G1, dtype=np.float64)
    same = G2 is None
    G2 = G1 if same else np.asarray(G2, dtype=np.float64)
    t = scale * (G1 @ G2.T)
    loss = float((_softplus(t) - S * t).sum())
    W = scale * (_sigmoid(t) - S)
    dG1 = W @ G2
    dG2 = W.T @ G1
    if same:
        return loss, dG1 + dG2, None
    return loss, dG1, dG2
