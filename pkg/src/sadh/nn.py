"""Fully-connected two-head networks with hand-written backprop.

A network is a ReLU trunk ``in -> h1 -> ... -> hk`` whose last activation is
the semantic feature ``F``, plus two linear heads reading ``F``: the hash
head (width ``K``, output ``H``) and the classification head (width
``n_classes``, output ``L_hat``). The heads share nothing but the trunk.

Everything is batched: inputs are (n, d) arrays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import DimensionError, NumericError, SadhError

CHECKPOINT_VERSION = 1


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class MlpNetwork:
    """Trunk + hash head + classification head.

    ``trunk`` lists layer widths starting with the input width, so
    ``trunk=[32, 256, 128]`` has two ReLU layers and ``F`` has width 128.
    ``trunk=[d]`` has no hidden layer and ``F`` is the input itself.
    """

    def __init__(self, trunk, K: int, n_classes: int, seed: int = 0):
        trunk = [int(w) for w in trunk]
        if not trunk or min(trunk) < 1 or K < 1 or n_classes < 1:
            raise DimensionError(f"bad architecture trunk={trunk}, K={K}, classes={n_classes}")
        self.trunk = tuple(trunk)
        self.K = int(K)
        self.n_classes = int(n_classes)
        rng = np.random.default_rng(seed)
        self.params: dict[str, np.ndarray] = {}
        for i, (a, b) in enumerate(zip(trunk[:-1], trunk[1:])):
            self.params[f"trunk{i}.W"] = _glorot(rng, a, b)
            self.params[f"trunk{i}.b"] = np.zeros(b)
        feat = trunk[-1]
        self.params["hash.W"] = _glorot(rng, feat, self.K)
        self.params["hash.b"] = np.zeros(self.K)
        self.params["cls.W"] = _glorot(rng, feat, self.n_classes)
        self.params["cls.b"] = np.zeros(self.n_classes)

    @property
    def n_trunk_layers(self) -> int:
        return len(self.trunk) - 1

    @property
    def input_dim(self) -> int:
        return self.trunk[0]

    @property
    def feature_dim(self) -> int:
        return self.trunk[-1]

    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy(self) -> "MlpNetwork":
        new = object.__new__(MlpNetwork)
        new.trunk, new.K, new.n_classes = self.trunk, self.K, self.n_classes
        new.params = {k: v.copy() for k, v in self.params.items()}
        return new

    def header(self) -> dict:
        return {
            "version": CHECKPOINT_VERSION,
            "trunk": list(self.trunk),
            "K": self.K,
            "n_classes": self.n_classes,
            "activation": {"trunk": "relu", "hash": "linear", "cls": "linear"},
            "param_order": [[k, list(v.shape)] for k, v in self.params.items()],
        }

    def flat_params(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params.values()])

    def set_flat_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.n_params():
            raise DimensionError(f"expected {self.n_params()} parameters, got {flat.size}")
        pos = 0
        for k, v in self.params.items():
            self.params[k] = flat[pos : pos + v.size].reshape(v.shape).copy()
            pos += v.size

    def __eq__(self, other):
        if not isinstance(other, MlpNetwork):
            return NotImplemented
        return self.header() == other.header() and all(
            np.array_equal(self.params[k], other.params[k]) for k in self.params
        )


@dataclass
class ForwardRecord:
    x: np.ndarray
    pre: list = field(default_factory=list)
    acts: list = field(default_factory=list)
    F: np.ndarray = None
    H: np.ndarray = None
    L_hat: np.ndarray = None


def forward(net: MlpNetwork, x) -> ForwardRecord:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != net.input_dim:
        raise DimensionError(f"input width {x.shape[1]} != network input {net.input_dim}")
    rec = ForwardRecord(x=x)
    a = x
    for i in range(net.n_trunk_layers):
        z = a @ net.params[f"trunk{i}.W"] + net.params[f"trunk{i}.b"]
        a = np.maximum(z, 0.0)
        rec.pre.append(z)
        rec.acts.append(a)
    rec.F = a
    rec.H = a @ net.params["hash.W"] + net.params["hash.b"]
    rec.L_hat = a @ net.params["cls.W"] + net.params["cls.b"]
    return rec


def backward(net: MlpNetwork, rec: ForwardRecord, dF=None, dH=None, dL_hat=None) -> dict:
    """Parameter gradients given upstream gradients on ``F``, ``H`` and ``L_hat``.

    Any upstream gradient may be ``None`` (treated as zero).
    """
    n = rec.x.shape[0]

    def upstream(g, width, name):
        if g is None:
            return np.zeros((n, width))
        g = np.atleast_2d(np.asarray(g, dtype=np.float64))
        if g.shape != (n, width):
            raise DimensionError(f"d{name} has shape {g.shape}, expected {(n, width)}")
        return g

    dF = upstream(dF, net.feature_dim, "F")
    dH = upstream(dH, net.K, "H")
    dL_hat = upstream(dL_hat, net.n_classes, "L_hat")
    F = rec.F
    grads = {
        "hash.W": F.T @ dH,
        "hash.b": dH.sum(axis=0),
        "cls.W": F.T @ dL_hat,
        "cls.b": dL_hat.sum(axis=0),
    }
    da = dF + dH @ net.params["hash.W"].T + dL_hat @ net.params["cls.W"].T
    for i in reversed(range(net.n_trunk_layers)):
        dz = da * (rec.pre[i] > 0.0)
        a_in = rec.acts[i - 1] if i > 0 else rec.x
        grads[f"trunk{i}.W"] = a_in.T @ dz
        grads[f"trunk{i}.b"] = dz.sum(axis=0)
        if i > 0:
            da = dz @ net.params[f"trunk{i}.W"].T
    return {k: grads[k] for k in net.params}


# --- optimizers --------------------------------------------------------------

@dataclass
class OptimizerState:
    kind: str
    lr: float
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("adam", "sgd_momentum"):
            raise SadhError(f"unknown optimizer {self.kind!r}")


def adam_step(state: OptimizerState, params: dict, grads: dict) -> None:
    """Bias-corrected Adam, updating ``params`` in place."""
    state.step += 1
    t = state.step
    for k, g in grads.items():
        m = state.m.setdefault(k, np.zeros_like(g))
        v = state.v.setdefault(k, np.zeros_like(g))
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * g * g
        m_hat = m / (1 - state.beta1**t)
        v_hat = v / (1 - state.beta2**t)
        params[k] -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def sgd_momentum_step(state: OptimizerState, params: dict, grads: dict) -> None:
    """Classical momentum: ``v <- mu*v + g``, ``p <- p - lr*v``."""
    state.step += 1
    for k, g in grads.items():
        v = state.m.setdefault(k, np.zeros_like(g))
        v *= state.momentum
        v += g
        params[k] -= state.lr * v


def optimizer_step(state: OptimizerState, params: dict, grads: dict) -> None:
    if state.kind == "adam":
        adam_step(state, params, grads)
    else:
        sgd_momentum_step(state, params, grads)


# --- checkpoints -------------------------------------------------------------

def save_checkpoint(net: MlpNetwork, path) -> Path:
    path = Path(path)
    header = json.dumps(net.header(), sort_keys=True)
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(header), params=net.flat_params())
    return path


def load_checkpoint(path) -> MlpNetwork:
    with np.load(Path(path)) as z:
        header = json.loads(str(z["header"]))
        flat = z["params"].astype(np.float64)
    if header.get("version") != CHECKPOINT_VERSION:
        raise SadhError(f"unsupported checkpoint version {header.get('version')}")
    net = MlpNetwork(header["trunk"], header["K"], header["n_classes"])
    expected = [[k, list(v.shape)] for k, v in net.params.items()]
    if header["param_order"] != expected:
        raise SadhError("checkpoint parameter layout does not match its architecture")
    net.set_flat_params(flat)
    return net


# --- finite differences ------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str | None
    n_checked: int
    n_skipped: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance

    def __str__(self):
        verdict = "PASS" if self.passed else "FAIL"
        return (
            f"{verdict}: max relative error {self.max_rel_error:.3e} at {self.worst_param} "
            f"(tol {self.tolerance:.0e}, {self.n_checked} checked, {self.n_skipped} skipped at kinks)"
        )


def finite_difference_check(
    net: MlpNetwork,
    loss_fn: Callable[[MlpNetwork], tuple],
    eps: float = 1e-6,
    tolerance: float = 1e-4,
    max_params: int | None = None,
    seed: int = 0,
    floor: float = 1e-6,
    analytic: dict | None = None,
) -> GradCheckReport:
    """Compare analytic gradients with central differences.

    ``loss_fn(net)`` returns ``(loss, grads, kinks)`` where ``kinks`` is a
    boolean array describing the active pattern of every piecewise-linear
    switch in the loss (ReLU masks, hinge activity, code signs). Entries
    whose +/-eps perturbation changes that pattern sit within eps of a kink
    and are skipped. The relative error of one entry is
    ``|a - n| / max(|a|, |n|, floor)``. With more than ``max_params`` entries
    a seeded random subsample is checked. ``analytic`` overrides the
    gradients returned by ``loss_fn`` (used for fault injection).
    """
    loss0, grads0, kinks0 = loss_fn(net)
    if not np.isfinite(loss0):
        raise NumericError(f"loss is not finite at the check point: {loss0}")
    grads = analytic if analytic is not None else grads0
    index = [(k, j) for k, p in net.params.items() for j in range(p.size)]
    if max_params is not None and len(index) > max_params:
        rng = np.random.default_rng(seed)
        pick = np.sort(rng.choice(len(index), size=max_params, replace=False))
        index = [index[i] for i in pick]

    worst, worst_name, checked, skipped = 0.0, None, 0, 0
    for k, j in index:
        p = net.params[k].reshape(-1)
        orig = p[j]
        p[j] = orig + eps
        lp, _, kp = loss_fn(net)
        p[j] = orig - eps
        lm, _, km = loss_fn(net)
        p[j] = orig
        if not (np.isfinite(lp) and np.isfinite(lm)):
            raise NumericError(f"non-finite loss while perturbing {k}[{j}]")
        if not (np.array_equal(kp, kinks0) and np.array_equal(km, kinks0)):
            skipped += 1
            continue
        num = (lp - lm) / (2 * eps)
        ana = float(grads[k].reshape(-1)[j])
        rel = abs(ana - num) / max(abs(ana), abs(num), floor)
        checked += 1
        if rel > worst or worst_name is None:
            worst, worst_name = rel, f"{k}[{j}]"
    return GradCheckReport(worst, worst_name, checked, skipped, tolerance)
