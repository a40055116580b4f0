"""A small deterministic CPU network engine.

Networks are described by a `NetworkSpec` (an ordered list of `LayerSpec`s
plus the per-example input shape) and their parameters are held in a plain
list with one entry per layer: `None` for layers without parameters and a
`(weight, bias)` tuple otherwise. Gradients and momentum buffers use the
same structure.

Every operation here preserves the dtype of the parameters, float32 by
default. Running the same code in float64 is what the gradient oracles in
the test suite rely on.
"""
import hashlib
import json
import logging
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ShapeError

LOGGER = logging.getLogger(__name__)

LAYER_KINDS = ('dense', 'conv2d-3x3', 'relu', 'flatten', 'avgpool2x2')
PARAM_KINDS = ('dense', 'conv2d-3x3')


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a network.

    Parameters
    ----------
    kind : str
        One of 'dense', 'conv2d-3x3', 'relu', 'flatten', 'avgpool2x2'.
    fan_in : int, optional
        Input features (dense) or input channels (conv).
    fan_out : int, optional
        Output features (dense) or output channels (conv).
    """
    kind: str
    fan_in: int = 0
    fan_out: int = 0

    def describe(self):
        if self.kind in PARAM_KINDS:
            return '%s %d->%d' % (self.kind, self.fan_in, self.fan_out)
        return self.kind


@dataclass(frozen=True)
class NetworkSpec:
    """A feed-forward network.

    Parameters
    ----------
    layers : tuple of LayerSpec
        The layers in order.
    num_classes : int
        Number of output logits.
    feature_tap : int
        Index of the layer whose output is used as the feature
        representation for hint learning.
    input_shape : tuple of int
        Shape of a single input example, e.g. (1, 28, 28).
    """
    layers: tuple
    num_classes: int
    feature_tap: int
    input_shape: tuple


def spec_from_dict(d):
    """Build a NetworkSpec from its JSON form and validate it."""
    layers = tuple(
        LayerSpec(
            kind=ld['kind'],
            fan_in=int(ld.get('fan_in', 0)),
            fan_out=int(ld.get('fan_out', 0)))
        for ld in d['layers'])
    spec = NetworkSpec(
        layers=layers,
        num_classes=int(d['num_classes']),
        feature_tap=int(d.get('feature_tap', len(layers) - 1)),
        input_shape=tuple(int(s) for s in d['input_shape']))
    validate_spec(spec)
    return spec


def spec_to_dict(spec):
    """JSON form of a NetworkSpec."""
    layers = []
    for layer in spec.layers:
        ld = {'kind': layer.kind}
        if layer.kind in PARAM_KINDS:
            ld['fan_in'] = layer.fan_in
            ld['fan_out'] = layer.fan_out
        layers.append(ld)
    return {
        'layers': layers,
        'num_classes': spec.num_classes,
        'feature_tap': spec.feature_tap,
        'input_shape': list(spec.input_shape),
    }


def spec_digest(spec):
    """SHA-256 of the canonical JSON form of a spec, as 32 raw bytes."""
    blob = json.dumps(
        spec_to_dict(spec), sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(blob.encode('utf-8')).digest()


def layer_output_shapes(spec):
    """Propagate the per-example shape through the network.

    Returns
    -------
    shapes : list of tuples
        The per-example output shape of every layer.

    Raises
    ------
    ShapeError
        If two consecutive layers do not fit together. The message names the
        offending layer pair.
    """
    shapes = []
    shape = tuple(spec.input_shape)
    prev = 'input %s' % (shape,)
    for i, layer in enumerate(spec.layers):
        here = 'layer %d (%s)' % (i, layer.describe())

        def _bad(why):
            return ShapeError(
                'layers do not fit: %s -> %s: %s' % (prev, here, why))

        if layer.kind not in LAYER_KINDS:
            raise ShapeError('layer %d: unknown kind %r' % (i, layer.kind))

        if layer.kind in PARAM_KINDS and (
                layer.fan_in < 1 or layer.fan_out < 1):
            raise ShapeError(
                'layer %d (%s): fan_in and fan_out must be >= 1' % (
                    i, layer.describe()))

        if layer.kind == 'dense':
            if len(shape) != 1 or shape[0] != layer.fan_in:
                raise _bad(
                    'expected input shape (%d,), got %s' % (
                        layer.fan_in, shape))
            shape = (layer.fan_out,)
        elif layer.kind == 'conv2d-3x3':
            if len(shape) != 3 or shape[0] != layer.fan_in:
                raise _bad(
                    'expected (%d, H, W) input, got %s' % (
                        layer.fan_in, shape))
            shape = (layer.fan_out, shape[1], shape[2])
        elif layer.kind == 'avgpool2x2':
            if len(shape) != 3 or shape[1] % 2 != 0 or shape[2] % 2 != 0:
                raise _bad('expected (C, H, W) with even H, W, got %s' % (
                    shape,))
            shape = (shape[0], shape[1] // 2, shape[2] // 2)
        elif layer.kind == 'flatten':
            shape = (int(np.prod(shape)),)

        shapes.append(shape)
        prev = here

    return shapes


def validate_spec(spec):
    """Check a network spec, raising ShapeError or ValueError on problems."""
    if len(spec.layers) == 0:
        raise ValueError('a network needs at least one layer')
    if spec.num_classes < 1:
        raise ValueError('num_classes must be >= 1')
    if not 0 <= spec.feature_tap < len(spec.layers):
        raise ValueError(
            'feature_tap %d out of range [0, %d)' % (
                spec.feature_tap, len(spec.layers)))

    shapes = layer_output_shapes(spec)
    if shapes[-1] != (spec.num_classes,):
        raise ShapeError(
            'last layer outputs %s, expected (%d,) logits' % (
                shapes[-1], spec.num_classes))
    return shapes


def param_count(spec):
    """Analytic number of trainable parameters."""
    n = 0
    for layer in spec.layers:
        if layer.kind == 'dense':
            n += layer.fan_in * layer.fan_out + layer.fan_out
        elif layer.kind == 'conv2d-3x3':
            n += layer.fan_in * layer.fan_out * 9 + layer.fan_out
    return n


def _weight_shape(layer):
    if layer.kind == 'dense':
        return (layer.fan_out, layer.fan_in), layer.fan_in
    return (layer.fan_out, layer.fan_in, 3, 3), layer.fan_in * 9


def init_params(spec, seed, dtype=np.float32):
    """Draw initial parameters.

    Weights are uniform on [-a, a] with a = sqrt(6 / fan_in), so that their
    variance is 2 / fan_in (fan_in counts the 3x3 window for convolutions).
    Biases are zero.

    Parameters
    ----------
    spec : NetworkSpec
        The network.
    seed : int
        Seed for a `np.random.RandomState` (MT19937).
    dtype : numpy dtype, optional
        The parameter dtype. Default float32.

    Returns
    -------
    params : list
        One entry per layer, `None` or a `(weight, bias)` tuple.
    """
    validate_spec(spec)
    rng = np.random.RandomState(seed=seed)
    params = []
    for layer in spec.layers:
        if layer.kind not in PARAM_KINDS:
            params.append(None)
            continue
        shape, fan_in = _weight_shape(layer)
        a = np.sqrt(6.0 / fan_in)
        w = rng.uniform(low=-a, high=a, size=shape).astype(dtype)
        b = np.zeros(layer.fan_out, dtype=dtype)
        params.append((w, b))
    return params


def params_dtype(params):
    for p in params:
        if p is not None:
            return p[0].dtype
    return np.dtype(np.float32)


def zeros_like_params(params):
    """A parameter-shaped structure of zeros (gradients, velocities)."""
    return [
        None if p is None else (np.zeros_like(p[0]), np.zeros_like(p[1]))
        for p in params]


def params_equal(a, b):
    """True if two parameter sets are bit-identical."""
    if len(a) != len(b):
        return False
    for pa, pb in zip(a, b):
        if (pa is None) != (pb is None):
            return False
        if pa is None:
            continue
        for xa, xb in zip(pa, pb):
            if xa.shape != xb.shape or xa.dtype != xb.dtype:
                return False
            if xa.tobytes() != xb.tobytes():
                return False
    return True


def flatten_params(params):
    """Concatenate all tensors (weights then bias, layer by layer)."""
    parts = []
    for p in params:
        if p is not None:
            parts.append(p[0].ravel())
            parts.append(p[1].ravel())
    if len(parts) == 0:
        return np.zeros(0, dtype=np.float32)
    return np.concatenate(parts)


def unflatten_params(vec, template):
    """Inverse of `flatten_params`, shaped like `template`."""
    out = []
    loc = 0
    for p in template:
        if p is None:
            out.append(None)
            continue
        w_size = p[0].size
        b_size = p[1].size
        w = vec[loc:loc+w_size].reshape(p[0].shape).astype(p[0].dtype)
        loc += w_size
        b = vec[loc:loc+b_size].reshape(p[1].shape).astype(p[1].dtype)
        loc += b_size
        out.append((w, b))
    if loc != vec.size:
        raise ShapeError(
            'flat vector has %d entries, parameters need %d' % (vec.size, loc))
    return out


def check_params(spec, params):
    """Raise ShapeError unless `params` matches `spec` exactly."""
    if len(params) != len(spec.layers):
        raise ShapeError(
            'expected parameters for %d layers, got %d' % (
                len(spec.layers), len(params)))
    for i, (layer, p) in enumerate(zip(spec.layers, params)):
        if layer.kind not in PARAM_KINDS:
            if p is not None:
                raise ShapeError('layer %d (%s) takes no parameters' % (
                    i, layer.describe()))
            continue
        shape, _ = _weight_shape(layer)
        if p is None or p[0].shape != shape or p[1].shape != (layer.fan_out,):
            got = None if p is None else (p[0].shape, p[1].shape)
            raise ShapeError(
                'layer %d (%s): expected weight %s and bias (%d,), got %s' % (
                    i, layer.describe(), shape, layer.fan_out, got))


def forward(spec, params, batch, return_cache=False):
    """Run the network on a batch.

    Parameters
    ----------
    spec : NetworkSpec
        The network.
    params : list
        The parameters.
    batch : np.ndarray, shape (n,) + spec.input_shape
        The inputs. They are cast to the parameter dtype.
    return_cache : bool, optional
        If True, also return the per-layer inputs for `backward`.

    Returns
    -------
    logits : np.ndarray, shape (n, num_classes)
        The network outputs.
    features : np.ndarray
        Output of the `feature_tap` layer.
    cache : list of np.ndarray
        Only if `return_cache` is True.
    """
    dtype = params_dtype(params)
    batch = np.asarray(batch)
    if batch.ndim == 0 or tuple(batch.shape[1:]) != tuple(spec.input_shape):
        raise ShapeError(
            'expected input shape (n, %s), got %s' % (
                ', '.join(str(s) for s in spec.input_shape), batch.shape))
    a = np.ascontiguousarray(batch, dtype=dtype)
    n = a.shape[0]

    cache = []
    features = None
    for i, (layer, p) in enumerate(zip(spec.layers, params)):
        cache.append(a)
        if layer.kind == 'dense':
            a = a @ p[0].T + p[1]
        elif layer.kind == 'conv2d-3x3':
            out = np.empty(
                (n, layer.fan_out, a.shape[2], a.shape[3]), dtype=dtype)
            kernels.conv3x3_forward(a, p[0], p[1], out)
            a = out
        elif layer.kind == 'relu':
            a = np.maximum(a, 0).astype(dtype, copy=False)
        elif layer.kind == 'flatten':
            a = a.reshape(n, -1)
        elif layer.kind == 'avgpool2x2':
            out = np.empty(
                (n, a.shape[1], a.shape[2] // 2, a.shape[3] // 2), dtype=dtype)
            kernels.avgpool2x2_forward(a, out)
            a = out
        if i == spec.feature_tap:
            features = a

    if return_cache:
        return a, features, cache
    return a, features


def backward(
        spec, params, batch, logit_grad, feature_grad=None, cache=None):
    """Back-propagate a gradient on the logits (and optionally the features).

    Parameters
    ----------
    spec : NetworkSpec
        The network.
    params : list
        The parameters.
    batch : np.ndarray
        The inputs used for the forward pass.
    logit_grad : np.ndarray, shape (n, num_classes)
        Gradient of the scalar objective with respect to the logits.
    feature_grad : np.ndarray, optional
        Gradient of the objective with respect to the feature tap output.
    cache : list, optional
        The cache returned by `forward(..., return_cache=True)` on the same
        inputs. Recomputed if not given.

    Returns
    -------
    grads : list
        Parameter-shaped gradients.
    """
    if cache is None:
        _, _, cache = forward(spec, params, batch, return_cache=True)

    dtype = params_dtype(params)
    n = cache[0].shape[0]
    g = np.asarray(logit_grad, dtype=dtype)
    if g.shape != (n, spec.num_classes):
        raise ShapeError(
            'expected logit gradient shape %s, got %s' % (
                (n, spec.num_classes), g.shape))

    if feature_grad is not None:
        feature_grad = np.asarray(feature_grad, dtype=dtype)
        if spec.feature_tap + 1 < len(cache):
            fshape = cache[spec.feature_tap + 1].shape
        else:
            fshape = g.shape
        if feature_grad.shape != fshape:
            raise ShapeError(
                'expected feature gradient shape %s, got %s' % (
                    fshape, feature_grad.shape))

    grads = [None] * len(spec.layers)
    for i in range(len(spec.layers) - 1, -1, -1):
        layer = spec.layers[i]
        p = params[i]
        a_in = cache[i]
        if i == spec.feature_tap and feature_grad is not None:
            g = g + feature_grad

        need_input_grad = i > 0
        if layer.kind == 'dense':
            grads[i] = (g.T @ a_in, g.sum(axis=0))
            if need_input_grad:
                g = g @ p[0]
        elif layer.kind == 'conv2d-3x3':
            gx = np.zeros_like(a_in)
            gw = np.zeros_like(p[0])
            gb = np.zeros_like(p[1])
            kernels.conv3x3_backward(
                a_in, p[0], np.ascontiguousarray(g), gx, gw, gb)
            grads[i] = (gw, gb)
            g = gx
        elif layer.kind == 'relu':
            g = g * (a_in > 0)
        elif layer.kind == 'flatten':
            g = g.reshape(a_in.shape)
        elif layer.kind == 'avgpool2x2':
            gx = np.zeros_like(a_in)
            kernels.avgpool2x2_backward(np.ascontiguousarray(g), gx)
            g = gx

    return grads
