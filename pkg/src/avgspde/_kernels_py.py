"""NumPy implementations of the hot kernels.

Mirrors ``_kernels.pyx`` function-for-function; used when the compiled
extension is unavailable or ``AVGSPDE_PURE_PYTHON`` is set.

Random numbers come from Philox4x32-10 (Salmon et al., SC'11) used as a
keyed counter-based generator: normal number ``i`` of a stream is a pure
function of the stream's 128-bit identity and ``i``.  Block ``i // 2`` is
encrypted, its four output words form two 53-bit uniforms, and Box-Muller
turns them into a (cos, sin) pair of standard normals.
"""

import numpy as np

NAME = "python"

_MASK = np.uint64(0xFFFFFFFF)
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_TWO_M53 = 2.0**-53


def _philox_rounds(c0, c1, c2, c3, k0, k1):
    for r in range(10):
        if r:
            k0 = (k0 + _W0) & _MASK
            k1 = (k1 + _W1) & _MASK
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (p1 >> _S32) ^ c1 ^ k0, p1 & _MASK, (p0 >> _S32) ^ c3 ^ k1, p0 & _MASK
    return c0, c1, c2, c3


def philox4x32(ctr, key):
    """Encrypt one 4x32-bit counter under a 2x32-bit key."""
    c = [np.uint64(int(v) & 0xFFFFFFFF) for v in ctr]
    k = [np.uint64(int(v) & 0xFFFFFFFF) for v in key]
    return tuple(int(w) for w in _philox_rounds(c[0], c[1], c[2], c[3], k[0], k[1]))


def normals(keys, start, count):
    """Standard normals ``start .. start+count-1`` for each stream row.

    ``keys`` is a ``(M, 4)`` uint32 array ``(k0, k1, c2, c3)``: the Philox key
    and the two upper counter words.  Returns a ``(M, count)`` float64 array.
    """
    keys = np.asarray(keys, dtype=np.uint64)
    if count <= 0:
        return np.zeros((keys.shape[0], 0))
    b0 = start // 2
    b1 = (start + count - 1) // 2
    blocks = np.arange(b0, b1 + 1, dtype=np.uint64)
    c0 = (blocks & _MASK)[None, :]
    c1 = (blocks >> _S32)[None, :]
    k0, k1, c2, c3 = (keys[:, j : j + 1] for j in range(4))
    w0, w1, w2, w3 = _philox_rounds(c0, c1, c2, c3, k0, k1)
    ua = ((w0 << _S32) | w1) >> _S11
    ub = ((w2 << _S32) | w3) >> _S11
    u1 = (ua.astype(np.float64) + 0.5) * _TWO_M53
    u2 = (ub.astype(np.float64) + 0.5) * _TWO_M53
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    z = np.empty((keys.shape[0], 2 * blocks.size))
    z[:, 0::2] = r * np.cos(theta)
    z[:, 1::2] = r * np.sin(theta)
    off = start - 2 * b0
    return z[:, off : off + count]


# row layout of the ``coef`` table passed to linear_paths
LINEAR_ROWS = ("ex", "wx", "sx", "ey", "wy", "sy", "a", "b", "f0", "g", "c", "g0", "abar", "fbar0")


def linear_paths(x, y, xbar, keys1, keys2, coef, step0, nsteps, coupled, averaged):
    """Advance mode-diagonal linear paths in place by ``nsteps`` exponential-Euler steps.

    ``x, y`` are the coupled slow/fast states and ``xbar`` the averaged state,
    each ``(M, n)``.  Step ``j`` reads normals ``(step0 + j) * n + k`` from the
    W1 stream (shared by ``x`` and ``xbar``) and the W2 stream.
    """
    n = x.shape[1]
    ex, wx, sx, ey, wy, sy, a, b, f0, g, c, g0, abar, fbar0 = np.asarray(coef)
    for j in range(nsteps):
        z1 = normals(keys1, (step0 + j) * n, n)
        if coupled:
            z2 = normals(keys2, (step0 + j) * n, n)
            F = a * x + b * y + f0
            G = g * x - c * y + g0
            xn = ex * x + wx * F + sx * z1
            y[...] = ey * y + wy * G + sy * z2
            x[...] = xn
        if averaged:
            xbar[...] = ex * xbar + wx * (abar * xbar + fbar0) + sx * z1


def _rk4_generator(B, f, D):
    """Generator of the augmented affine system for (mx, my, sxx, sxy, syy, 1)."""
    b11, b12, b21, b22 = B
    L = np.zeros((6, 6))
    L[0, :2] = b11, b12
    L[1, :2] = b21, b22
    L[0, 5], L[1, 5] = f
    L[2, 2], L[2, 3] = 2 * b11, 2 * b12
    L[3, 2], L[3, 3], L[3, 4] = b21, b11 + b22, b12
    L[4, 3], L[4, 4] = 2 * b21, 2 * b22
    L[2, 5], L[4, 5] = D
    return L


def rk4_moments(B, f, D, m0, nsteps, T):
    """Classical RK4 for the mean and Lyapunov ODEs of each 2x2 mode block.

    For a linear autonomous system one RK4 step is multiplication by the
    degree-4 Taylor polynomial of ``h L``; ``nsteps`` steps are evaluated as
    a matrix power, which is the same iterate in exact arithmetic.
    Returns ``(n, 5)`` rows ``(mx, my, sxx, sxy, syy)``.
    """
    B = np.asarray(B, dtype=float)
    out = np.empty((B.shape[0], 5))
    eye = np.eye(6)
    for k in range(B.shape[0]):
        N = int(nsteps[k])
        hL = (T / N) * _rk4_generator(B[k], f[k], D[k])
        hL2 = hL @ hL
        R = eye + hL + hL2 / 2 + hL2 @ hL / 6 + hL2 @ hL2 / 24
        z0 = np.array([m0[k][0], m0[k][1], 0.0, 0.0, 0.0, 1.0])
        out[k] = (np.linalg.matrix_power(R, N) @ z0)[:5]
    return out
