"""Hot numeric kernels with numba and pure-numpy implementations.

Each public function dispatches on :func:`prosodic_codes._accel.get_backend`.
Both paths compute the same quantities with the same operation order where
practical, so they agree to rounding error (not bit-for-bit).
"""
from __future__ import annotations

import math

import numpy as np

from . import _accel
from ._accel import njit

# ---------------------------------------------------------------------------
# GRU recurrence
#
# Gate layout along the last axis of ``xproj`` and the columns of ``U`` is
# (update z, reset r, candidate n).  ``xproj`` already includes x @ W + b.


def _gru_forward_np(xproj, U, h0):
    T, B, H3 = xproj.shape
    H = H3 // 3
    Uzr = U[:, : 2 * H]
    Un = U[:, 2 * H :]
    hs = np.empty((T, B, H))
    zs = np.empty((T, B, H))
    rs = np.empty((T, B, H))
    ns = np.empty((T, B, H))
    h = h0
    for t in range(T):
        a = xproj[t, :, : 2 * H] + h @ Uzr
        g = 0.5 * (1.0 + np.tanh(0.5 * a))
        z = g[:, :H]
        r = g[:, H:]
        n = np.tanh(xproj[t, :, 2 * H :] + (r * h) @ Un)
        h = (1.0 - z) * h + z * n
        hs[t] = h
        zs[t] = z
        rs[t] = r
        ns[t] = n
    return hs, zs, rs, ns


@njit
def _gru_forward_nb(xproj, U, h0):
    T, B, H3 = xproj.shape
    H = H3 // 3
    Uzr = np.ascontiguousarray(U[:, : 2 * H])
    Un = np.ascontiguousarray(U[:, 2 * H :])
    hs = np.empty((T, B, H))
    zs = np.empty((T, B, H))
    rs = np.empty((T, B, H))
    ns = np.empty((T, B, H))
    h = np.ascontiguousarray(h0).copy()
    rh = np.empty((B, H))
    for t in range(T):
        a = h @ Uzr
        for b in range(B):
            for j in range(H):
                z = 0.5 * (1.0 + math.tanh(0.5 * (xproj[t, b, j] + a[b, j])))
                r = 0.5 * (1.0 + math.tanh(0.5 * (xproj[t, b, H + j] + a[b, H + j])))
                zs[t, b, j] = z
                rs[t, b, j] = r
                rh[b, j] = r * h[b, j]
        c = rh @ Un
        for b in range(B):
            for j in range(H):
                n = math.tanh(xproj[t, b, 2 * H + j] + c[b, j])
                z = zs[t, b, j]
                ns[t, b, j] = n
                hs[t, b, j] = (1.0 - z) * h[b, j] + z * n
        for b in range(B):
            for j in range(H):
                h[b, j] = hs[t, b, j]
    return hs, zs, rs, ns


def _gru_backward_np(dh_out, U, h0, hs, zs, rs, ns):
    T, B, H = hs.shape
    UzrT = U[:, : 2 * H].T
    UnT = U[:, 2 * H :].T
    dxproj = np.empty((T, B, 3 * H))
    dnext = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        hp = hs[t - 1] if t > 0 else h0
        z, r, n = zs[t], rs[t], ns[t]
        g = dh_out[t] + dnext
        da_n = g * z * (1.0 - n * n)
        da_z = g * (n - hp) * z * (1.0 - z)
        drh = da_n @ UnT
        da_r = drh * hp * r * (1.0 - r)
        dxproj[t, :, :H] = da_z
        dxproj[t, :, H : 2 * H] = da_r
        dxproj[t, :, 2 * H :] = da_n
        dnext = g * (1.0 - z) + drh * r + dxproj[t, :, : 2 * H] @ UzrT
    return dxproj, dnext


@njit
def _gru_backward_nb(dh_out, U, h0, hs, zs, rs, ns):
    T, B, H = hs.shape
    UzrT = np.ascontiguousarray(U[:, : 2 * H].T)
    UnT = np.ascontiguousarray(U[:, 2 * H :].T)
    dxproj = np.empty((T, B, 3 * H))
    dnext = np.zeros((B, H))
    g = np.empty((B, H))
    da_n = np.empty((B, H))
    da_zr = np.empty((B, 2 * H))
    for t in range(T - 1, -1, -1):
        for b in range(B):
            for j in range(H):
                hp = hs[t - 1, b, j] if t > 0 else h0[b, j]
                z = zs[t, b, j]
                n = ns[t, b, j]
                gv = dh_out[t, b, j] + dnext[b, j]
                g[b, j] = gv
                da_n[b, j] = gv * z * (1.0 - n * n)
                da_zr[b, j] = gv * (n - hp) * z * (1.0 - z)
        drh = da_n @ UnT
        for b in range(B):
            for j in range(H):
                hp = hs[t - 1, b, j] if t > 0 else h0[b, j]
                r = rs[t, b, j]
                da_zr[b, H + j] = drh[b, j] * hp * r * (1.0 - r)
        back = da_zr @ UzrT
        for b in range(B):
            for j in range(H):
                dxproj[t, b, j] = da_zr[b, j]
                dxproj[t, b, H + j] = da_zr[b, H + j]
                dxproj[t, b, 2 * H + j] = da_n[b, j]
                dnext[b, j] = g[b, j] * (1.0 - zs[t, b, j]) + drh[b, j] * rs[t, b, j] + back[b, j]
    return dxproj, dnext


def gru_forward(xproj, U, h0):
    """Run the GRU recurrence over pre-projected inputs.

    Parameters
    ----------
    xproj : ndarray, shape (T, B, 3H)
        ``x @ W + b`` for every frame, gates ordered (update, reset, candidate).
    U : ndarray, shape (H, 3H)
        Recurrent weights.
    h0 : ndarray, shape (B, H)

    Returns
    -------
    hs, zs, rs, ns : ndarray, shape (T, B, H)
        Hidden states and the gate activations needed by the backward pass.
    """
    xproj = np.ascontiguousarray(xproj, dtype=np.float64)
    U = np.ascontiguousarray(U, dtype=np.float64)
    h0 = np.ascontiguousarray(h0, dtype=np.float64)
    if _accel.get_backend() == "numba":
        return _gru_forward_nb(xproj, U, h0)
    return _gru_forward_np(xproj, U, h0)


def gru_backward(dh_out, U, h0, hs, zs, rs, ns):
    """Backpropagate through time.

    Returns the gradient with respect to ``xproj`` (T, B, 3H) and ``h0``.
    Recurrent-weight gradients are assembled by the caller from these.
    """
    dh_out = np.ascontiguousarray(dh_out, dtype=np.float64)
    U = np.ascontiguousarray(U, dtype=np.float64)
    h0 = np.ascontiguousarray(h0, dtype=np.float64)
    if _accel.get_backend() == "numba":
        return _gru_backward_nb(dh_out, U, h0, hs, zs, rs, ns)
    return _gru_backward_np(dh_out, U, h0, hs, zs, rs, ns)


# ---------------------------------------------------------------------------
# Banded symmetric positive-definite solve (Cholesky, lower band storage)


def _banded_cholesky_solve_py(band, rhs):
    # band[d, j] = A[j + d, j]; returns (x, ok)
    w = band.shape[0] - 1
    T = band.shape[1]
    L = np.zeros_like(band)
    x = np.empty(T)
    for j in range(T):
        s = band[0, j]
        for k in range(max(0, j - w), j):
            s -= L[j - k, k] * L[j - k, k]
        if not s > 0.0:
            return x, False
        ljj = math.sqrt(s)
        L[0, j] = ljj
        for i in range(j + 1, min(j + w, T - 1) + 1):
            s = band[i - j, j]
            for k in range(max(0, i - w), j):
                s -= L[i - k, k] * L[j - k, k]
            L[i - j, j] = s / ljj
    y = np.empty(T)
    for i in range(T):
        s = rhs[i]
        for k in range(max(0, i - w), i):
            s -= L[i - k, k] * y[k]
        y[i] = s / L[0, i]
    for i in range(T - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, min(i + w, T - 1) + 1):
            s -= L[k - i, i] * x[k]
        x[i] = s / L[0, i]
    return x, True


_banded_cholesky_solve_nb = njit(_banded_cholesky_solve_py)


def banded_cholesky_solve(band, rhs):
    """Solve ``A x = rhs`` for symmetric positive-definite banded ``A``.

    ``band`` holds the lower band: ``band[d, j] == A[j + d, j]`` for
    ``d = 0..w``.  Returns ``(x, ok)``; ``ok`` is False when a non-positive
    pivot shows the matrix is not positive definite.
    """
    band = np.ascontiguousarray(band, dtype=np.float64)
    rhs = np.ascontiguousarray(rhs, dtype=np.float64)
    if _accel.get_backend() == "numba":
        return _banded_cholesky_solve_nb(band, rhs)
    return _banded_cholesky_solve_py(band, rhs)


# ---------------------------------------------------------------------------
# Nearest-centroid assignment


def _nearest_np(X, C):
    d = ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=-1)
    labels = np.argmin(d, axis=1)
    return labels, d[np.arange(len(X)), labels]


@njit
def _nearest_nb(X, C):
    N, D = X.shape
    K = C.shape[0]
    labels = np.zeros(N, dtype=np.int64)
    best = np.empty(N)
    for i in range(N):
        bd = np.inf
        bk = 0
        for k in range(K):
            s = 0.0
            for d in range(D):
                diff = X[i, d] - C[k, d]
                s += diff * diff
            if s < bd:
                bd = s
                bk = k
        labels[i] = bk
        best[i] = bd
    return labels, best


def nearest_centroid(X, C):
    """Index of the nearest row of ``C`` for each row of ``X``.

    Ties go to the lowest index.  Also returns the squared distances.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    C = np.ascontiguousarray(C, dtype=np.float64)
    if _accel.get_backend() == "numba":
        return _nearest_nb(X, C)
    return _nearest_np(X, C)
