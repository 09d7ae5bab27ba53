from types import SimpleNamespace

import numpy as np
import pytest

from svpcnet.nn import (
    FICNN,
    PICNN,
    PROJECTION_EPS,
    Adamax,
    Architecture,
    TrainConfig,
    TrainHistory,
    adamax_step,
    batch_loss_and_grad,
    init_params,
    loss,
    loss_grad,
    train,
)
from svpcnet.nn.train import EmptyPartitionError, _Arrays
from svpcnet.energies import ksd_phi, ksd_phi_pc
from svpcnet.ssv import minors


def test_loss_zero_case():
    parts = loss(np.array([1.0, 2.0]), np.array([1.0, 2.0]), np.array([3.0, 3.0]),
                 np.array([[1.0, 1, 1], [2, 2, 2]]), 1.5, 1.0)
    assert parts == (0.0, 0.0, 0.0, 0.0)


def test_loss_single_sample():
    parts = loss(np.array([2.0]), np.array([1.0]), np.array([1.5]), lam_ineq=1.5)
    assert parts.mse == 1.0 and parts.ineq == 0.25 and parts.total == 1.375


def test_symmetry_term():
    parts = loss(np.array([1.0]), np.array([1.0]), np.array([5.0]), np.array([[1.0, 1.0, 3.0]]), lam_sym=1.0)
    assert parts.sym == pytest.approx(4 / 3, abs=1e-15)


def test_loss_decomposition(rng):
    p, t, phi = rng.normal(size=(3, 50))
    orb = rng.normal(size=(50, 3))
    parts = loss(p, t, phi, orb, 1.5, 0.7)
    assert abs(parts.total - (parts.mse + 1.5 * parts.ineq + 0.7 * parts.sym)) <= 1e-12


def test_loss_gradient_finite_differences(rng):
    p, t, phi = rng.normal(size=(3, 8))
    orb = rng.normal(size=(8, 3))
    dp, do = loss_grad(p, t, phi, orb, 1.5, 1.0)
    h = 1e-6
    for i in range(8):
        e = np.zeros(8)
        e[i] = h
        fd = (loss(p + e, t, phi, orb, 1.5, 1.0).total - loss(p - e, t, phi, orb, 1.5, 1.0).total) / (2 * h)
        assert fd == pytest.approx(dp[i], abs=1e-7)
        E = np.zeros((8, 3))
        E[i, 1] = h
        fd = (loss(p, t, phi, orb + E, 1.5, 1.0).total - loss(p, t, phi, orb - E, 1.5, 1.0).total) / (2 * h)
        assert fd == pytest.approx(do[i, 1], abs=1e-7)


def test_zero_loss_zero_gradient():
    dp, do = loss_grad(np.ones(3), np.ones(3), 2 * np.ones(3), np.ones((3, 3)), 1.5, 1.0)
    assert not dp.any() and not do.any()


def test_ineq_gradient_is_linear_in_weight(rng):
    p = rng.normal(size=10)
    t = p.copy()  # freeze the mse part at zero
    phi = p - 0.5
    g1, _ = loss_grad(p, t, phi, lam_ineq=1.0)
    g2, _ = loss_grad(p, t, phi, lam_ineq=2.0)
    np.testing.assert_allclose(g2, 2 * g1)


# --- optimiser -------------------------------------------------------------------


def _grads_like(params, value):
    return {k: np.full_like(v, value) for k, v in params.tensors.items()}


def test_adamax_zero_gradient_is_a_no_op():
    p = init_params(Architecture(FICNN, 3, hidden=(3,)), 0)
    q = Adamax().step(p, _grads_like(p, 0.0))
    assert all(np.array_equal(p[k], q[k]) for k in p.tensors)


def test_adamax_constant_gradient_steps_by_lr():
    p = init_params(Architecture(FICNN, 3, hidden=(3,)), 0)
    opt = Adamax(lr=1e-3)
    for _ in range(200):
        prev, p = p, opt.step(p, _grads_like(p, 0.37))
    np.testing.assert_allclose(prev["Wm0"] - p["Wm0"], 1e-3, rtol=1e-6)


def test_adamax_first_step_matches_formula():
    p = init_params(Architecture(FICNN, 3, hidden=(3,)), 0)
    g = _grads_like(p, -2.0)
    q = Adamax(lr=0.01).step(p, g)
    # m = 0.1 g, u = |g|, step = lr / (1 - 0.9) * m / (u + eps)
    expected = p["b0"] - 0.01 / 0.1 * (0.1 * -2.0) / (2.0 + 1e-8)
    np.testing.assert_allclose(q["b0"], expected, rtol=1e-15)


def test_adamax_is_deterministic():
    p = init_params(Architecture(FICNN, 3, hidden=(3,)), 0)
    g = {k: np.sin(np.arange(v.size)).reshape(v.shape) for k, v in p.tensors.items()}
    s1, q1 = adamax_step(Adamax(), p, g)
    s2, q2 = adamax_step(Adamax(), p, g)
    assert all(np.array_equal(q1[k], q2[k]) for k in p.tensors)
    assert s1.t == s2.t == 1


# --- training loop -------------------------------------------------------------------


def _ksd_partition(nu):
    return SimpleNamespace(mhat=minors(nu), zeta=np.zeros((len(nu), 0)), target=ksd_phi_pc(nu), phi=ksd_phi(nu))


@pytest.fixture
def tiny_ksd(rng):
    nu = rng.uniform(-1, 1, size=(300, 2))
    return SimpleNamespace(train=_ksd_partition(nu[:200]), validation=_ksd_partition(nu[200:]))


def test_training_reduces_loss_and_keeps_convexity(tiny_ksd):
    arch = Architecture(FICNN, 3, hidden=(6, 6))
    params, hist = train(tiny_ksd, arch, TrainConfig(lr=1e-2, batch_size=32, max_epochs=40))
    assert hist.records[-1]["val_total"] < 0.5 * hist.records[0]["val_total"]
    for key in arch.constrained_keys():
        assert np.all(params[key] >= PROJECTION_EPS)
    rec = hist.records[-1]
    assert abs(rec["train_total"] - (rec["train_mse"] + 1.5 * rec["train_ineq"] + rec["train_sym"])) <= 1e-12


def test_training_is_deterministic(tiny_ksd):
    arch = Architecture(FICNN, 3, hidden=(4, 4))
    cfg = TrainConfig(lr=1e-2, batch_size=50, max_epochs=5, seed=3)
    p1, h1 = train(tiny_ksd, arch, cfg)
    p2, h2 = train(tiny_ksd, arch, cfg)
    assert h1.records == h2.records
    assert np.array_equal(p1.flat(), p2.flat())


def test_penalties_off_still_reported(tiny_ksd):
    arch = Architecture(FICNN, 3, hidden=(4,))
    _, h = train(tiny_ksd, arch, TrainConfig(lam_ineq=0.0, lam_sym=0.0, max_epochs=3))
    for r in h.records:
        assert r["train_total"] == r["train_mse"]
        assert "train_ineq" in r and "val_sym" in r


def test_early_stop_on_plateau():
    # zero inputs and targets: output and every gradient vanish, so the
    # validation loss is flat from the first epoch on
    flat = SimpleNamespace(mhat=np.zeros((20, 3)), zeta=np.zeros((20, 0)), target=np.zeros(20), phi=np.ones(20))
    arch = Architecture(FICNN, 3, hidden=(4,))
    cfg = TrainConfig(patience=4, max_epochs=100)
    _, h = train(SimpleNamespace(train=flat, validation=flat), arch, cfg)
    assert h.stopped_early and h.best_epoch == 1 and h.epochs == 1 + cfg.patience


def test_empty_partition_is_rejected(tiny_ksd):
    empty = _ksd_partition(np.zeros((0, 2)))
    with pytest.raises(EmptyPartitionError):
        train(SimpleNamespace(train=tiny_ksd.train, validation=empty), Architecture(FICNN, 3), TrainConfig())


def test_picnn_training_step_gradients(rng):
    arch = Architecture(PICNN, 3, 2, hidden=(5, 4), param_hidden=(3, 3))
    p = init_params(arch, 1)
    nu = rng.uniform(-1, 1, size=(9, 2))
    part = SimpleNamespace(mhat=minors(nu), zeta=rng.uniform(1, 2, size=(9, 2)),
                           target=rng.normal(size=9), phi=rng.normal(size=9) + 0.5)
    b = _Arrays.from_partition(part, arch)
    parts, g = batch_loss_and_grad(p, b, 1.5, 1.0)
    h = 1e-6
    for key in ("Wz1", "Wmu0", "bz1", "Wt0"):
        idx = (0,) * p[key].ndim
        plus, minus = p.copy(), p.copy()
        plus.tensors[key][idx] += h
        minus.tensors[key][idx] -= h
        fd = (batch_loss_and_grad(plus, b, 1.5, 1.0)[0].total - batch_loss_and_grad(minus, b, 1.5, 1.0)[0].total) / (2 * h)
        assert fd == pytest.approx(g[key][idx], rel=1e-5, abs=1e-8)


def test_config_validation_and_history_csv(tmp_path):
    with pytest.raises(ValueError):
        TrainConfig(lr=0)
    with pytest.raises(ValueError):
        TrainConfig(patience=0)
    h = TrainHistory([{"epoch": 1, "val_total": 0.5}], 1, 0.5)
    h.write_csv(tmp_path / "h.csv")
    assert (tmp_path / "h.csv").read_text() == "epoch,val_total\n1,0.5\n"
    assert TrainHistory.from_dict(h.to_dict()) == h
