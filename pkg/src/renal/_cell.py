"""Compiled forward/backward kernels for the gated recurrent cell.

Parameters live in one flat vector laid out as
``Wz Uz bz Wr Ur br Wc Uc bc decay V c`` (matrices row-major); see
:func:`layout`. The cell is

    hd = h * exp(-softplus(decay) * dt)      (event sequences only)
    z  = sigmoid(Wz x + Uz hd + bz)
    r  = sigmoid(Wr x + Ur hd + br)
    c  = tanh(Wc x + Uc (r * hd) + bc)
    h' = (1 - z) * hd + z * c

and the decoder is ``y = V h' + c``.
"""

import math

import numpy as np
from numba import njit

PARAM_NAMES = ("Wz", "Uz", "bz", "Wr", "Ur", "br", "Wc", "Uc", "bc", "decay", "V", "c")


def layout(hidden, width, out):
    """Name -> (offset, shape) for the flat parameter vector."""
    shapes = {
        "Wz": (hidden, width), "Uz": (hidden, hidden), "bz": (hidden,),
        "Wr": (hidden, width), "Ur": (hidden, hidden), "br": (hidden,),
        "Wc": (hidden, width), "Uc": (hidden, hidden), "bc": (hidden,),
        "decay": (hidden,), "V": (out, hidden), "c": (out,),
    }
    spec, off = {}, 0
    for name in PARAM_NAMES:
        size = int(np.prod(shapes[name]))
        spec[name] = (off, shapes[name])
        off += size
    return spec, off


@njit(cache=True)
def _sigmoid(a):
    if a >= 0.0:
        return 1.0 / (1.0 + math.exp(-a))
    e = math.exp(a)
    return e / (1.0 + e)


@njit(cache=True)
def _softplus(a):
    if a > 30.0:
        return a
    return math.log1p(math.exp(a))


@njit(cache=True)
def _offsets(H, D, O):
    off = np.empty(13, dtype=np.int64)
    sizes = (H * D, H * H, H, H * D, H * H, H, H * D, H * H, H, H, O * H, O)
    o = 0
    for i in range(12):
        off[i] = o
        o += sizes[i]
    off[12] = o
    return off


@njit(cache=True)
def encode_row(xraw, dt, event, mean, scale, out):
    d = xraw.shape[0]
    for j in range(d):
        out[j] = (xraw[j] - mean[j]) / scale[j]
    if event:
        out[d] = (math.log(dt) - mean[d]) / scale[d]


@njit(cache=True)
def encode(values, dts, event, mean, scale):
    n, d = values.shape
    width = d + 1 if event else d
    X = np.empty((n, width))
    for i in range(n):
        encode_row(values[i], dts[i], event, mean, scale, X[i])
    return X


@njit(cache=True)
def cell_forward(theta, H, D, O, event, x, h, dt, hd, z, r, c, hnew):
    """One cell update; fills the gate buffers and ``hnew``. Returns the decay factor."""
    off = _offsets(H, D, O)
    g = 1.0
    for i in range(H):
        if event:
            g = math.exp(-_softplus(theta[off[9] + i]) * dt)
            hd[i] = h[i] * g
        else:
            hd[i] = h[i]
    for i in range(H):
        az = theta[off[2] + i]
        ar = theta[off[5] + i]
        for j in range(D):
            az += theta[off[0] + i * D + j] * x[j]
            ar += theta[off[3] + i * D + j] * x[j]
        for j in range(H):
            az += theta[off[1] + i * H + j] * hd[j]
            ar += theta[off[4] + i * H + j] * hd[j]
        z[i] = _sigmoid(az)
        r[i] = _sigmoid(ar)
    for i in range(H):
        ac = theta[off[8] + i]
        for j in range(D):
            ac += theta[off[6] + i * D + j] * x[j]
        for j in range(H):
            ac += theta[off[7] + i * H + j] * (r[j] * hd[j])
        c[i] = math.tanh(ac)
    for i in range(H):
        hnew[i] = (1.0 - z[i]) * hd[i] + z[i] * c[i]
    return g


@njit(cache=True)
def decode(theta, H, D, O, h, y):
    off = _offsets(H, D, O)
    for k in range(O):
        acc = theta[off[11] + k]
        for i in range(H):
            acc += theta[off[10] + k * H + i] * h[i]
        y[k] = acc


@njit(cache=True)
def run(theta, H, D, O, event, X, DT, h0):
    """States after each input row; ``X`` is already encoded."""
    n = X.shape[0]
    out = np.empty((n, H))
    hd = np.empty(H)
    z = np.empty(H)
    r = np.empty(H)
    c = np.empty(H)
    h = h0.copy()
    for t in range(n):
        cell_forward(theta, H, D, O, event, X[t], h, DT[t], hd, z, r, c, out[t])
        h = out[t]
    return out


@njit(cache=True)
def run_raw(theta, H, D, O, event, values, dts, mean, scale, h0):
    """Like :func:`run` but encodes each raw row on the fly."""
    n = values.shape[0]
    out = np.empty((n, H))
    x = np.empty(D)
    hd = np.empty(H)
    z = np.empty(H)
    r = np.empty(H)
    c = np.empty(H)
    h = h0.copy()
    for t in range(n):
        encode_row(values[t], dts[t], event, mean, scale, x)
        cell_forward(theta, H, D, O, event, x, h, dts[t], hd, z, r, c, out[t])
        h = out[t]
    return out


@njit(cache=True)
def step_raw(theta, H, D, O, event, xraw, h, dt, mean, scale):
    x = np.empty(D)
    hd = np.empty(H)
    z = np.empty(H)
    r = np.empty(H)
    c = np.empty(H)
    out = np.empty(H)
    encode_row(xraw, dt, event, mean, scale, x)
    cell_forward(theta, H, D, O, event, x, h, dt, hd, z, r, c, out)
    return out


@njit(cache=True)
def window_loss(theta, H, D, O, event, X, DT, T, h0):
    """Mean squared one-step error of ``V h_{k+1} + c`` against ``T[k]``."""
    hs = run(theta, H, D, O, event, X, DT, h0)
    y = np.empty(O)
    total = 0.0
    for k in range(X.shape[0]):
        decode(theta, H, D, O, hs[k], y)
        for j in range(O):
            e = y[j] - T[k, j]
            total += e * e
    return total / (X.shape[0] * O)


@njit(cache=True)
def window_grad(theta, H, D, O, event, X, DT, T, h0, grad):
    """Loss and gradient over one truncated window.

    ``grad`` is overwritten. Returns ``(loss, last_state)``.
    """
    off = _offsets(H, D, O)
    L = X.shape[0]
    HS = np.empty((L + 1, H))
    HD = np.empty((L, H))
    Z = np.empty((L, H))
    R = np.empty((L, H))
    C = np.empty((L, H))
    HS[0] = h0
    for t in range(L):
        cell_forward(theta, H, D, O, event, X[t], HS[t], DT[t], HD[t], Z[t], R[t], C[t], HS[t + 1])

    grad[:] = 0.0
    scale = 1.0 / (L * O)
    y = np.empty(O)
    dy = np.empty(O)
    dh = np.zeros(H)
    dnext = np.zeros(H)
    dhd = np.empty(H)
    dzp = np.empty(H)
    drp = np.empty(H)
    dap = np.empty(H)
    drh = np.empty(H)
    loss = 0.0
    for t in range(L - 1, -1, -1):
        hn = HS[t + 1]
        decode(theta, H, D, O, hn, y)
        for k in range(O):
            e = y[k] - T[t, k]
            loss += e * e
            dy[k] = 2.0 * e * scale
            grad[off[11] + k] += dy[k]
            for i in range(H):
                grad[off[10] + k * H + i] += dy[k] * hn[i]
        for i in range(H):
            acc = dnext[i]
            for k in range(O):
                acc += theta[off[10] + k * H + i] * dy[k]
            dh[i] = acc
        x = X[t]
        hd = HD[t]
        z = Z[t]
        r = R[t]
        c = C[t]
        for i in range(H):
            dzp[i] = dh[i] * (c[i] - hd[i]) * z[i] * (1.0 - z[i])
            dap[i] = dh[i] * z[i] * (1.0 - c[i] * c[i])
            dhd[i] = dh[i] * (1.0 - z[i])
        # candidate: ac = Wc x + Uc (r*hd) + bc
        for i in range(H):
            grad[off[8] + i] += dap[i]
            for j in range(D):
                grad[off[6] + i * D + j] += dap[i] * x[j]
            for j in range(H):
                grad[off[7] + i * H + j] += dap[i] * r[j] * hd[j]
        for j in range(H):
            acc = 0.0
            for i in range(H):
                acc += theta[off[7] + i * H + j] * dap[i]
            drh[j] = acc
        for j in range(H):
            drp[j] = drh[j] * hd[j] * r[j] * (1.0 - r[j])
            dhd[j] += drh[j] * r[j]
        # gates
        for i in range(H):
            grad[off[2] + i] += dzp[i]
            grad[off[5] + i] += drp[i]
            for j in range(D):
                grad[off[0] + i * D + j] += dzp[i] * x[j]
                grad[off[3] + i * D + j] += drp[i] * x[j]
            for j in range(H):
                grad[off[1] + i * H + j] += dzp[i] * hd[j]
                grad[off[4] + i * H + j] += drp[i] * hd[j]
        for j in range(H):
            acc = 0.0
            for i in range(H):
                acc += theta[off[1] + i * H + j] * dzp[i] + theta[off[4] + i * H + j] * drp[i]
            dhd[j] += acc
        if event:
            for i in range(H):
                a = theta[off[9] + i]
                g = math.exp(-_softplus(a) * DT[t])
                hprev = HS[t][i]
                dnext[i] = dhd[i] * g
                # d g / d a = -dt * g * sigmoid(a)
                grad[off[9] + i] += dhd[i] * hprev * (-DT[t]) * g * _sigmoid(a)
        else:
            for i in range(H):
                dnext[i] = dhd[i]
    return loss * scale, HS[L].copy()
