import numpy as np
import pytest

from sadh.errors import DimensionError
from sadh.nn import (
    MlpNetwork,
    OptimizerState,
    adam_step,
    backward,
    finite_difference_check,
    forward,
    load_checkpoint,
    optimizer_step,
    save_checkpoint,
    sgd_momentum_step,
)


def _relu_kinks(rec):
    return np.concatenate([(z > 0).ravel() for z in rec.pre]) if rec.pre else np.empty(0, bool)


def test_zero_params_give_zero_outputs():
    net = MlpNetwork([5, 4, 3], K=6, n_classes=2, seed=0)
    for k in net.params:
        net.params[k][:] = 0
    rec = forward(net, np.ones((3, 5)))
    assert not rec.H.any() and not rec.L_hat.any()


def test_identity_single_layer():
    net = MlpNetwork([4], K=4, n_classes=2, seed=0)
    net.params["hash.W"][:] = np.eye(4)
    x = np.random.default_rng(0).normal(size=(3, 4))
    rec = forward(net, x)
    np.testing.assert_array_equal(rec.H, x)
    np.testing.assert_array_equal(rec.F, x)


def test_forward_deterministic():
    x = np.random.default_rng(1).normal(size=(5, 6))
    a = forward(MlpNetwork([6, 8, 4], 5, 3, seed=3), x)
    b = forward(MlpNetwork([6, 8, 4], 5, 3, seed=3), x)
    np.testing.assert_array_equal(a.H, b.H)
    np.testing.assert_array_equal(a.L_hat, b.L_hat)


def test_glorot_limits():
    net = MlpNetwork([30, 20], 10, 4, seed=0)
    assert np.abs(net.params["trunk0.W"]).max() <= np.sqrt(6 / 50)
    assert not net.params["trunk0.b"].any()


def test_input_width_checked():
    with pytest.raises(DimensionError):
        forward(MlpNetwork([3, 2], 2, 2), np.ones((1, 4)))


def test_zero_upstream_gives_zero_grads():
    net = MlpNetwork([5, 7, 4], 6, 3, seed=0)
    rec = forward(net, np.random.default_rng(0).normal(size=(4, 5)))
    for g in backward(net, rec).values():
        assert not g.any()


def test_linear_weight_gradient_is_outer_product():
    net = MlpNetwork([3], K=2, n_classes=2, seed=0)
    x = np.array([[1.0, -2.0, 0.5]])
    g = np.array([[0.3, -1.1]])
    grads = backward(net, forward(net, x), dH=g)
    np.testing.assert_allclose(grads["hash.W"], np.outer(x[0], g[0]), rtol=0, atol=0)
    np.testing.assert_array_equal(grads["hash.b"], g[0])


def test_head_isolation():
    x = np.random.default_rng(2).normal(size=(4, 5))
    net = MlpNetwork([5, 6], 3, 2, seed=1)
    base = forward(net, x)
    p = net.copy()
    p.params["cls.W"] += 1.0
    p.params["cls.b"] -= 2.0
    np.testing.assert_array_equal(forward(p, x).H, base.H)
    p = net.copy()
    p.params["hash.W"] += 1.0
    p.params["hash.b"] -= 2.0
    np.testing.assert_array_equal(forward(p, x).L_hat, base.L_hat)


def test_smooth_loss_matches_fd_tightly():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(6, 5))
    tH, tL = rng.normal(size=(6, 4)), rng.normal(size=(6, 3))
    wF = rng.normal(size=(6, 7))

    def loss_fn(net):
        rec = forward(net, x)
        loss = ((rec.H - tH) ** 2).sum() + np.sin(rec.L_hat - tL).sum() + (wF * rec.F).sum()
        g = backward(net, rec, dF=wF, dH=2 * (rec.H - tH), dL_hat=np.cos(rec.L_hat - tL))
        return loss, g, _relu_kinks(rec)

    rep = finite_difference_check(MlpNetwork([5, 8, 7], 4, 3, seed=4), loss_fn, tolerance=1e-6)
    assert rep.passed, str(rep)
    assert rep.n_checked > 0.9 * (rep.n_checked + rep.n_skipped)


def test_quadratic_on_linear_net():
    x = np.random.default_rng(5).normal(size=(4, 3))

    def loss_fn(net):
        rec = forward(net, x)
        return (rec.H**2).sum(), backward(net, rec, dH=2 * rec.H), np.empty(0, bool)

    rep = finite_difference_check(MlpNetwork([3], 5, 2, seed=0), loss_fn, tolerance=1e-7)
    assert rep.passed and rep.n_skipped == 0


def test_fault_injection_names_parameter():
    x = np.random.default_rng(5).normal(size=(4, 3))

    def loss_fn(net):
        rec = forward(net, x)
        return (rec.H**2).sum(), backward(net, rec, dH=2 * rec.H), np.empty(0, bool)

    net = MlpNetwork([3], 5, 2, seed=0)
    _, grads, _ = loss_fn(net)
    bad = {k: v.copy() for k, v in grads.items()}
    bad["hash.W"].reshape(-1)[7] *= 2
    rep = finite_difference_check(net, loss_fn, analytic=bad, tolerance=1e-4)
    assert not rep.passed
    assert rep.worst_param == "hash.W[7]"
    assert "FAIL" in str(rep) and "hash.W[7]" in str(rep)


def test_adam_zero_grad_no_change():
    p = {"w": np.array([1.0, -2.0])}
    adam_step(OptimizerState("adam", lr=0.1), p, {"w": np.zeros(2)})
    np.testing.assert_array_equal(p["w"], [1.0, -2.0])


def test_adam_first_step_moves_by_lr():
    p = {"w": np.array([0.5])}
    adam_step(OptimizerState("adam", lr=1e-3), p, {"w": np.array([1.0])})
    assert p["w"][0] == pytest.approx(0.5 - 1e-3, abs=1e-10)


def test_momentum_second_update():
    lr, g = 0.01, np.array([0.7, -1.5])
    p = {"w": np.zeros(2)}
    st = OptimizerState("sgd_momentum", lr=lr, momentum=0.9)
    sgd_momentum_step(st, p, {"w": g})
    before = p["w"].copy()
    sgd_momentum_step(st, p, {"w": g})
    np.testing.assert_allclose(before - p["w"], lr * 1.9 * g, rtol=1e-14)


def test_momentum_zero_grad_no_change():
    p = {"w": np.array([3.0])}
    optimizer_step(OptimizerState("sgd_momentum", lr=1.0), p, {"w": np.zeros(1)})
    assert p["w"][0] == 3.0


def test_checkpoint_round_trip(tmp_path):
    net = MlpNetwork([5, 7, 3], 6, 4, seed=9)
    path = save_checkpoint(net, tmp_path / "n.npz")
    back = load_checkpoint(path)
    assert back == net
    x = np.random.default_rng(0).normal(size=(3, 5))
    np.testing.assert_array_equal(forward(back, x).H, forward(net, x).H)
