import numpy as np
import pytest

from ..errors import ShapeError
from ..nn import (
    LayerSpec, NetworkSpec, spec_from_dict, spec_to_dict, spec_digest,
    init_params, param_count, forward, backward, flatten_params,
    unflatten_params, check_params, params_equal, layer_output_shapes)
from .utils import (
    TEACHER_SPEC, numeric_grad, random_entries, random_spec_dict)

CONV_SPEC = {
    'input_shape': [2, 4, 4],
    'layers': [
        {'kind': 'conv2d-3x3', 'fan_in': 2, 'fan_out': 3},
        {'kind': 'relu'},
        {'kind': 'avgpool2x2'},
        {'kind': 'flatten'},
        {'kind': 'dense', 'fan_in': 12, 'fan_out': 5},
    ],
    'num_classes': 5,
    'feature_tap': 2,
}


def _objective(spec, params, x, r, q):
    logits, feats = forward(spec, params, x)
    return float(np.sum(logits * r) + np.sum(feats * q))


def _check_backward(spec_dict, seed):
    spec = spec_from_dict(spec_dict)
    params = init_params(spec, seed, dtype=np.float64)
    rng = np.random.RandomState(seed=seed + 10)
    x = rng.normal(size=(4,) + spec.input_shape)
    logits, feats = forward(spec, params, x)
    r = rng.normal(size=logits.shape)
    q = rng.normal(size=feats.shape)

    grads = backward(spec, params, x, r, feature_grad=q)

    for p, g in zip(params, grads):
        if p is None:
            assert g is None
            continue
        for arr, garr in zip(p, g):
            inds = random_entries(rng, arr.shape, 6)
            num = numeric_grad(
                lambda: _objective(spec, params, x, r, q), arr, inds)
            ana = np.array([garr[i] for i in inds])
            assert np.allclose(num, ana, rtol=1e-5, atol=1e-7)


@pytest.mark.parametrize('spec_dict', [TEACHER_SPEC, CONV_SPEC])
def test_backward_matches_finite_differences(spec_dict):
    _check_backward(spec_dict, 3)


@pytest.mark.parametrize('seed', range(50))
def test_backward_matches_finite_differences_random_networks(seed):
    _check_backward(random_spec_dict(seed), seed)


def test_conv_matches_direct_sum():
    spec = spec_from_dict(CONV_SPEC)
    params = init_params(spec, 1, dtype=np.float64)
    rng = np.random.RandomState(seed=2)
    x = rng.normal(size=(2, 2, 4, 4))
    _, _, cache = forward(spec, params, x, return_cache=True)
    conv_out = cache[1]

    w, b = params[0]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    expected = np.zeros((2, 3, 4, 4))
    for n in range(2):
        for o in range(3):
            for i in range(4):
                for j in range(4):
                    expected[n, o, i, j] = (
                        np.sum(xp[n, :, i:i+3, j:j+3] * w[o]) + b[o])
    assert np.allclose(conv_out, expected)


def test_identity_network():
    spec = NetworkSpec(
        layers=(LayerSpec('dense', 4, 4),), num_classes=4, feature_tap=0,
        input_shape=(4,))
    params = [(np.eye(4, dtype=np.float32), np.zeros(4, dtype=np.float32))]
    x = np.random.RandomState(seed=1).normal(size=(5, 4)).astype(np.float32)
    logits, feats = forward(spec, params, x)
    assert np.array_equal(logits, x)
    assert np.array_equal(feats, x)


def test_zero_params_give_zero_logits():
    spec = spec_from_dict(TEACHER_SPEC)
    params = [
        None if p is None else (np.zeros_like(p[0]), np.zeros_like(p[1]))
        for p in init_params(spec, 0)]
    x = np.ones((3, 1, 4, 4), dtype=np.float32)
    logits, _ = forward(spec, params, x)
    assert np.all(logits == 0)


def test_init_variance_and_bias():
    spec = NetworkSpec(
        layers=(LayerSpec('dense', 1000, 400),), num_classes=400,
        feature_tap=0, input_shape=(1000,))
    params = init_params(spec, 5)
    w, b = params[0]
    assert w.dtype == np.float32
    assert np.all(b == 0)
    assert np.abs(np.var(w) / (2 / 1000) - 1) < 0.02
    assert np.all(np.abs(w) <= np.sqrt(6 / 1000))


def test_init_is_seeded():
    spec = spec_from_dict(CONV_SPEC)
    assert params_equal(init_params(spec, 7), init_params(spec, 7))
    assert not params_equal(init_params(spec, 7), init_params(spec, 8))


def test_param_count():
    spec = spec_from_dict(CONV_SPEC)
    assert param_count(spec) == 2 * 3 * 9 + 3 + 12 * 5 + 5
    assert flatten_params(init_params(spec, 0)).size == param_count(spec)


def test_flatten_unflatten():
    spec = spec_from_dict(CONV_SPEC)
    params = init_params(spec, 0)
    vec = flatten_params(params)
    assert params_equal(unflatten_params(vec, params), params)
    with pytest.raises(ShapeError):
        unflatten_params(vec[:-1], params)


def test_layer_mismatch_names_the_layers():
    d = dict(TEACHER_SPEC)
    d['layers'] = [
        {'kind': 'flatten'},
        {'kind': 'dense', 'fan_in': 16, 'fan_out': 12},
        {'kind': 'dense', 'fan_in': 10, 'fan_out': 3},
    ]
    with pytest.raises(ShapeError) as e:
        spec_from_dict(d)
    assert 'layer 1' in str(e.value)
    assert 'layer 2' in str(e.value)


def test_pool_needs_even_sizes():
    spec = NetworkSpec(
        layers=(LayerSpec('avgpool2x2'), LayerSpec('flatten')),
        num_classes=4, feature_tap=0, input_shape=(1, 3, 4))
    with pytest.raises(ShapeError):
        layer_output_shapes(spec)


def test_wrong_logit_count():
    d = dict(TEACHER_SPEC)
    d['num_classes'] = 4
    with pytest.raises(ShapeError):
        spec_from_dict(d)


def test_forward_rejects_bad_input():
    spec = spec_from_dict(TEACHER_SPEC)
    params = init_params(spec, 0)
    with pytest.raises(ShapeError):
        forward(spec, params, np.zeros((2, 1, 5, 4), dtype=np.float32))


def test_check_params():
    spec = spec_from_dict(TEACHER_SPEC)
    params = init_params(spec, 0)
    check_params(spec, params)
    with pytest.raises(ShapeError):
        check_params(spec, params[:-1])
    bad = list(params)
    bad[1] = (params[1][0][:, :-1], params[1][1])
    with pytest.raises(ShapeError):
        check_params(spec, bad)


def test_spec_dict_and_digest():
    spec = spec_from_dict(CONV_SPEC)
    again = spec_from_dict(spec_to_dict(spec))
    assert again == spec
    assert spec_digest(again) == spec_digest(spec)
    assert len(spec_digest(spec)) == 32
    assert spec_digest(spec) != spec_digest(spec_from_dict(TEACHER_SPEC))


def test_float64_is_preserved():
    spec = spec_from_dict(CONV_SPEC)
    params = init_params(spec, 0, dtype=np.float64)
    x = np.zeros((1, 2, 4, 4), dtype=np.float32)
    logits, feats = forward(spec, params, x)
    assert logits.dtype == np.float64
    assert feats.dtype == np.float64
