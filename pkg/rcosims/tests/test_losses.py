import numpy as np
import pytest

from ..errors import ShapeError
from ..losses import (
    DistillConfig, softened_softmax, cross_entropy, kl_divergence,
    softened_kl, ce_loss, kd_loss, rco_step_loss, mimic_loss)
from .utils import numeric_grad, random_entries


def _logits(seed, n=6, k=4, scale=3.0):
    return np.random.RandomState(seed=seed).normal(size=(n, k)) * scale


@pytest.mark.parametrize('tau', [0.5, 1.0, 5.0])
def test_softened_softmax_rows(tau):
    p = softened_softmax(_logits(0), tau)
    assert np.allclose(p.sum(axis=1), 1)
    assert np.all(p > 0)


def test_softened_softmax_flattens_with_temperature():
    z = _logits(1)
    sharp = softened_softmax(z, 1.0)
    soft = softened_softmax(z, 20.0)
    assert np.all(soft.max(axis=1) < sharp.max(axis=1))


def test_softened_softmax_is_stable():
    p = softened_softmax(np.array([[1000.0, 0.0, -1000.0]]), 1.0)
    assert np.all(np.isfinite(p))
    assert np.isclose(p[0, 0], 1)


@pytest.mark.parametrize('tau', [0.0, -1.0])
def test_softened_softmax_bad_tau(tau):
    with pytest.raises(ValueError):
        softened_softmax(_logits(0), tau)


def test_cross_entropy_value():
    probs = np.array([[0.5, 0.5], [0.25, 0.75]])
    ce = cross_entropy(probs, np.array([0, 1]))
    assert np.isclose(ce, -(np.log(0.5) + np.log(0.75)) / 2)
    with pytest.raises(ValueError):
        cross_entropy(probs, np.array([0, 2]))
    with pytest.raises(ShapeError):
        cross_entropy(probs, np.array([0]))


def test_kl_divergence():
    p = softened_softmax(_logits(2), 1)
    q = softened_softmax(_logits(3), 1)
    assert kl_divergence(p, p) == 0
    assert kl_divergence(p, q) > 0
    with pytest.raises(ShapeError):
        kl_divergence(p, q[:, :2])


def test_softened_kl_of_identical_logits():
    z = _logits(4)
    assert softened_kl(z, z, 5.0) == 0


def test_ce_loss_gradient():
    z = _logits(5)
    labels = np.array([0, 1, 2, 3, 0, 1])
    loss, g = ce_loss(z, labels)
    assert np.isclose(loss, cross_entropy(softened_softmax(z, 1), labels))
    inds = random_entries(np.random.RandomState(seed=1), z.shape, 8)
    num = numeric_grad(lambda: ce_loss(z, labels)[0], z, inds)
    assert np.allclose(num, [g[i] for i in inds], rtol=1e-5, atol=1e-8)


@pytest.mark.parametrize('kl_grad_scale', [True, False])
@pytest.mark.parametrize('tau', [1.0, 4.0])
def test_kd_loss_gradient(tau, kl_grad_scale):
    cfg = DistillConfig(
        temperature=tau, balance=0.7, kl_grad_scale=kl_grad_scale)
    zs = _logits(6)
    zt = _logits(7)
    labels = np.array([3, 2, 1, 0, 3, 2])
    loss, g = kd_loss(zs, zt, labels, cfg)

    scale = tau ** 2 if kl_grad_scale else 1.0
    expected = (
        ce_loss(zs, labels)[0] + 0.7 * scale * softened_kl(zt, zs, tau))
    assert np.isclose(loss, expected)

    inds = random_entries(np.random.RandomState(seed=2), zs.shape, 8)
    num = numeric_grad(lambda: kd_loss(zs, zt, labels, cfg)[0], zs, inds)
    assert np.allclose(num, [g[i] for i in inds], rtol=1e-5, atol=1e-8)


def test_kd_loss_zero_balance_is_ce():
    cfg = DistillConfig(temperature=5.0, balance=0.0)
    zs = _logits(8).astype(np.float32)
    labels = np.array([0, 1, 2, 3, 0, 1])
    loss, g = kd_loss(zs, _logits(9).astype(np.float32), labels, cfg)
    ce, gce = ce_loss(zs, labels)
    assert loss == ce
    assert np.array_equal(g, gce)


def test_kd_loss_matching_teacher_only_adds_zero_kl():
    cfg = DistillConfig()
    zs = _logits(10)
    labels = np.array([0, 1, 2, 3, 0, 1])
    loss, _ = kd_loss(zs, zs.copy(), labels, cfg)
    assert np.isclose(loss, ce_loss(zs, labels)[0])


def test_rco_step_loss_is_kd_loss():
    cfg = DistillConfig(temperature=3.0, balance=0.5)
    zs = _logits(11)
    zt = _logits(12)
    labels = np.array([0, 1, 2, 3, 0, 1])
    a = rco_step_loss(zs, zt, labels, cfg)
    b = kd_loss(zs, zt, labels, cfg)
    assert a[0] == b[0]
    assert np.array_equal(a[1], b[1])


def test_kd_loss_float32():
    cfg = DistillConfig()
    zs = _logits(13).astype(np.float32)
    zt = _logits(14).astype(np.float32)
    _, g = kd_loss(zs, zt, np.zeros(6, dtype=np.int64), cfg)
    assert g.dtype == np.float32


def test_distill_config_validation():
    with pytest.raises(ValueError):
        DistillConfig(temperature=0)
    with pytest.raises(ValueError):
        DistillConfig(balance=-1)
    assert DistillConfig(temperature=4.0).kl_scale == 16.0
    assert DistillConfig(temperature=4.0, kl_grad_scale=False).kl_scale == 1


def test_mimic_loss():
    rng = np.random.RandomState(seed=3)
    fs = rng.normal(size=(5, 2, 3))
    ft = rng.normal(size=(5, 2, 3))
    loss, g = mimic_loss(fs, ft)
    assert np.isclose(loss, np.sum((fs - ft) ** 2) / 5)
    assert g.shape == fs.shape
    inds = random_entries(rng, fs.shape, 6)
    num = numeric_grad(lambda: mimic_loss(fs, ft)[0], fs, inds)
    assert np.allclose(num, [g[i] for i in inds], rtol=1e-5, atol=1e-8)
    assert mimic_loss(fs, fs)[0] == 0
    with pytest.raises(ShapeError):
        mimic_loss(fs, ft[:, :1])


def test_softened_softmax_huge_temperature_is_uniform():
    p = softened_softmax(_logits(5, n=20, k=7), 1e6)
    assert np.allclose(p, 1 / 7, rtol=0, atol=1e-5)


def test_closed_forms():
    p = softened_softmax(np.array([[1.0, 0.0]]), 1.0)
    assert np.isclose(p[0, 0], 0.73106, rtol=0, atol=1e-5)

    uniform = np.full((4, 10), 0.1)
    ce = cross_entropy(uniform, np.array([0, 3, 7, 9]))
    assert np.isclose(ce, np.log(10), rtol=0, atol=1e-12)

    kl = kl_divergence(np.array([[1.0, 0.0]]), np.array([[0.5, 0.5]]))
    assert np.isclose(kl, np.log(2), rtol=0, atol=1e-12)


def test_kl_divergence_is_nonnegative():
    rng = np.random.RandomState(seed=17)
    for _ in range(1000):
        k = rng.randint(2, 12)
        tau = rng.uniform(0.5, 10)
        zp = rng.normal(size=(1, k)) * rng.uniform(0.1, 10)
        zq = rng.normal(size=(1, k)) * rng.uniform(0.1, 10)
        kl = kl_divergence(
            softened_softmax(zp, tau), softened_softmax(zq, tau))
        assert kl >= -1e-7


def test_mimic_loss_is_symmetric():
    rng = np.random.RandomState(seed=8)
    for shape in [(3, 5), (4, 2, 3, 3)]:
        a = rng.normal(size=shape)
        b = rng.normal(size=shape)
        assert np.isclose(
            mimic_loss(a, b)[0], mimic_loss(b, a)[0], rtol=1e-12, atol=0)
