"""Loop kernels for the convolution and pooling layers.

All kernels write into caller-allocated arrays and accumulate in the dtype
of those arrays, so float32 inputs stay float32 end to end. fastmath is
left off to keep results bit reproducible.
"""
from numba import njit


@njit
def conv3x3_forward(x, w, b, out):
    """Same-padded, unit-stride 3x3 convolution.

    Parameters
    ----------
    x : np.ndarray, shape (n, c_in, ny, nx)
        The input feature maps.
    w : np.ndarray, shape (c_out, c_in, 3, 3)
        The filters.
    b : np.ndarray, shape (c_out,)
        The biases.
    out : np.ndarray, shape (n, c_out, ny, nx)
        Output array, overwritten.
    """
    n_batch, n_in, ny, nx = x.shape
    n_out = w.shape[0]

    for n in range(n_batch):
        for o in range(n_out):
            for row in range(ny):
                for col in range(nx):
                    acc = b[o]
                    for c in range(n_in):
                        for dr in range(3):
                            r = row + dr - 1
                            if r < 0 or r > ny-1:
                                continue
                            for dc in range(3):
                                cc = col + dc - 1
                                if cc < 0 or cc > nx-1:
                                    continue
                                acc += w[o, c, dr, dc] * x[n, c, r, cc]
                    out[n, o, row, col] = acc


@njit
def conv3x3_backward(x, w, gout, gx, gw, gb):
    """Backward pass of `conv3x3_forward`.

    Parameters
    ----------
    x : np.ndarray, shape (n, c_in, ny, nx)
        The input of the forward pass.
    w : np.ndarray, shape (c_out, c_in, 3, 3)
        The filters.
    gout : np.ndarray, shape (n, c_out, ny, nx)
        Gradient with respect to the layer output.
    gx : np.ndarray, shape (n, c_in, ny, nx)
        Gradient with respect to the input. Must be zeroed by the caller.
    gw : np.ndarray, shape (c_out, c_in, 3, 3)
        Gradient with respect to the filters. Must be zeroed by the caller.
    gb : np.ndarray, shape (c_out,)
        Gradient with respect to the biases. Must be zeroed by the caller.
    """
    n_batch, n_in, ny, nx = x.shape
    n_out = w.shape[0]

    for n in range(n_batch):
        for o in range(n_out):
            for row in range(ny):
                for col in range(nx):
                    g = gout[n, o, row, col]
                    if g == 0:
                        continue
                    gb[o] += g
                    for c in range(n_in):
                        for dr in range(3):
                            r = row + dr - 1
                            if r < 0 or r > ny-1:
                                continue
                            for dc in range(3):
                                cc = col + dc - 1
                                if cc < 0 or cc > nx-1:
                                    continue
                                gw[o, c, dr, dc] += g * x[n, c, r, cc]
                                gx[n, c, r, cc] += g * w[o, c, dr, dc]


@njit
def avgpool2x2_forward(x, out):
    """Non-overlapping 2x2 average pooling. Spatial dims must be even."""
    n_batch, n_chan, ny, nx = out.shape
    for n in range(n_batch):
        for c in range(n_chan):
            for row in range(ny):
                for col in range(nx):
                    r = 2 * row
                    cc = 2 * col
                    s = (
                        x[n, c, r, cc] + x[n, c, r, cc+1] +
                        x[n, c, r+1, cc] + x[n, c, r+1, cc+1])
                    out[n, c, row, col] = s / 4


@njit
def avgpool2x2_backward(gout, gx):
    """Backward pass of `avgpool2x2_forward`; `gx` is overwritten."""
    n_batch, n_chan, ny, nx = gout.shape
    for n in range(n_batch):
        for c in range(n_chan):
            for row in range(ny):
                for col in range(nx):
                    g = gout[n, c, row, col] / 4
                    r = 2 * row
                    cc = 2 * col
                    gx[n, c, r, cc] = g
                    gx[n, c, r, cc+1] = g
                    gx[n, c, r+1, cc] = g
                    gx[n, c, r+1, cc+1] = g
