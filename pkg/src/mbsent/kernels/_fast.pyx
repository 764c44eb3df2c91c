# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels. Contracts and cache layouts match _ref exactly; see
that module's docstring for shapes and gate orders."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, tanh

cnp.import_array()


cdef inline double _sig(double x) noexcept nogil:
    return 1.0 / (1.0 + exp(-x))


def conv1d_forward(double[:, ::1] X, double[:, :, ::1] W, double[::1] b):
    cdef Py_ssize_t L = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t K = W.shape[0], f = W.shape[1]
    if L < f:
        raise ValueError(f"input length {L} shorter than filter size {f}")
    cdef Py_ssize_t T = L - f + 1
    out = np.empty((T, K))
    cdef double[:, ::1] Y = out
    cdef Py_ssize_t t, k, i, j
    cdef double a0, a1, a2, a3
    # k outermost keeps one filter hot in L1 while X streams from L2;
    # four independent accumulators break the FP dependency chain
    with nogil:
        for k in range(K):
            for t in range(T):
                a0 = b[k]
                a1 = 0.0
                a2 = 0.0
                a3 = 0.0
                for i in range(f):
                    j = 0
                    while j + 4 <= d:
                        a0 += X[t + i, j] * W[k, i, j]
                        a1 += X[t + i, j + 1] * W[k, i, j + 1]
                        a2 += X[t + i, j + 2] * W[k, i, j + 2]
                        a3 += X[t + i, j + 3] * W[k, i, j + 3]
                        j += 4
                    while j < d:
                        a0 += X[t + i, j] * W[k, i, j]
                        j += 1
                Y[t, k] = a0 + a1 + a2 + a3
    return out


def conv1d_backward(double[:, ::1] X, double[:, :, ::1] W, double[:, ::1] dY):
    cdef Py_ssize_t L = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t K = W.shape[0], f = W.shape[1]
    cdef Py_ssize_t T = L - f + 1
    dX_o = np.zeros((L, d))
    dW_o = np.zeros((K, f, d))
    db_o = np.zeros(K)
    cdef double[:, ::1] dX = dX_o
    cdef double[:, :, ::1] dW = dW_o
    cdef double[::1] db = db_o
    cdef Py_ssize_t t, k, i, j
    cdef double g
    with nogil:
        for t in range(T):
            for k in range(K):
                g = dY[t, k]
                db[k] += g
                for i in range(f):
                    for j in range(d):
                        dW[k, i, j] += g * X[t + i, j]
                        dX[t + i, j] += g * W[k, i, j]
    return dX_o, dW_o, db_o


def lstm_forward(double[:, ::1] X, double[:, ::1] Wx, double[:, ::1] Wh, double[::1] b):
    cdef Py_ssize_t T = X.shape[0], H = Wh.shape[0]
    Hs_o = np.zeros((T, H))
    Cs_o = np.zeros((T, H))
    G_o = np.zeros((T, 4 * H))
    px_o = np.dot(np.asarray(X), np.asarray(Wx)) + np.asarray(b)
    cdef double[:, ::1] Hs = Hs_o, Cs = Cs_o, G = G_o
    cdef double[:, ::1] px = px_o
    a_o = np.zeros(4 * H)
    h_o = np.zeros(H)
    c_o = np.zeros(H)
    cdef double[::1] a = a_o, h = h_o, c = c_o
    cdef Py_ssize_t t, u, r
    cdef double i_g, f_g, g_g, o_g
    cdef double hr
    # r-outer keeps Wh reads contiguous; per-element add order is unchanged
    with nogil:
        for t in range(T):
            for u in range(4 * H):
                a[u] = px[t, u]
            for r in range(H):
                hr = h[r]
                for u in range(4 * H):
                    a[u] += hr * Wh[r, u]
            for u in range(H):
                i_g = _sig(a[u])
                f_g = _sig(a[H + u])
                g_g = tanh(a[2 * H + u])
                o_g = _sig(a[3 * H + u])
                c[u] = f_g * c[u] + i_g * g_g
                h[u] = o_g * tanh(c[u])
                Hs[t, u] = h[u]
                Cs[t, u] = c[u]
                G[t, u] = i_g
                G[t, H + u] = f_g
                G[t, 2 * H + u] = g_g
                G[t, 3 * H + u] = o_g
    return Hs_o, Cs_o, G_o


def lstm_backward(
    double[:, ::1] X,
    double[:, ::1] Wx,
    double[:, ::1] Wh,
    double[:, ::1] Hs,
    double[:, ::1] Cs,
    double[:, ::1] G,
    double[:, ::1] dH,
):
    cdef Py_ssize_t T = X.shape[0], D = X.shape[1], H = Wh.shape[0]
    dX_o = np.zeros((T, D))
    dWx_o = np.zeros((D, 4 * H))
    dWh_o = np.zeros((H, 4 * H))
    db_o = np.zeros(4 * H)
    cdef double[:, ::1] dX = dX_o, dWx = dWx_o, dWh = dWh_o
    cdef double[::1] db = db_o
    dh_next_o = np.zeros(H)
    dc_next_o = np.zeros(H)
    da_o = np.zeros(4 * H)
    cdef double[::1] dh_next = dh_next_o, dc_next = dc_next_o, da = da_o
    cdef Py_ssize_t t, u, r
    cdef double i_g, f_g, g_g, o_g, tc, dh, dc, c_prev, xr, hp
    with nogil:
        for t in range(T - 1, -1, -1):
            for u in range(H):
                i_g = G[t, u]
                f_g = G[t, H + u]
                g_g = G[t, 2 * H + u]
                o_g = G[t, 3 * H + u]
                tc = tanh(Cs[t, u])
                dh = dH[t, u] + dh_next[u]
                c_prev = Cs[t - 1, u] if t > 0 else 0.0
                dc = dc_next[u] + dh * o_g * (1.0 - tc * tc)
                da[u] = (dc * g_g) * i_g * (1.0 - i_g)
                da[H + u] = (dc * c_prev) * f_g * (1.0 - f_g)
                da[2 * H + u] = (dc * i_g) * (1.0 - g_g * g_g)
                da[3 * H + u] = (dh * tc) * o_g * (1.0 - o_g)
                dc_next[u] = dc * f_g
            # row-major accumulation: contiguous writes into dWx/dWh
            for u in range(4 * H):
                db[u] += da[u]
            for r in range(D):
                xr = X[t, r]
                for u in range(4 * H):
                    dWx[r, u] += xr * da[u]
            if t > 0:
                for r in range(H):
                    hp = Hs[t - 1, r]
                    for u in range(4 * H):
                        dWh[r, u] += hp * da[u]
            for r in range(D):
                for u in range(4 * H):
                    dX[t, r] += da[u] * Wx[r, u]
            for r in range(H):
                dh_next[r] = 0.0
                for u in range(4 * H):
                    dh_next[r] += da[u] * Wh[r, u]
    return dX_o, dWx_o, dWh_o, db_o


def gru_forward(double[:, ::1] X, double[:, ::1] Wx, double[:, ::1] Wh, double[::1] b):
    cdef Py_ssize_t T = X.shape[0], H = Wh.shape[0]
    Hs_o = np.zeros((T, H))
    G_o = np.zeros((T, 4 * H))
    px_o = np.dot(np.asarray(X), np.asarray(Wx)) + np.asarray(b)
    cdef double[:, ::1] Hs = Hs_o, G = G_o
    cdef double[:, ::1] px = px_o
    ph_o = np.zeros(3 * H)
    h_o = np.zeros(H)
    cdef double[::1] ph = ph_o, h = h_o
    cdef Py_ssize_t t, u, r
    cdef double r_g, z_g, n_g, s_v
    cdef double hr
    # r-outer keeps Wh reads contiguous; per-element add order is unchanged
    with nogil:
        for t in range(T):
            for u in range(3 * H):
                ph[u] = 0.0
            for r in range(H):
                hr = h[r]
                for u in range(3 * H):
                    ph[u] += hr * Wh[r, u]
            for u in range(H):
                r_g = _sig(px[t, u] + ph[u])
                z_g = _sig(px[t, H + u] + ph[H + u])
                s_v = ph[2 * H + u]
                n_g = tanh(px[t, 2 * H + u] + r_g * s_v)
                h[u] = (1.0 - z_g) * n_g + z_g * h[u]
                Hs[t, u] = h[u]
                G[t, u] = r_g
                G[t, H + u] = z_g
                G[t, 2 * H + u] = n_g
                G[t, 3 * H + u] = s_v
    return Hs_o, G_o


def gru_backward(
    double[:, ::1] X,
    double[:, ::1] Wx,
    double[:, ::1] Wh,
    double[:, ::1] Hs,
    double[:, ::1] G,
    double[:, ::1] dH,
):
    cdef Py_ssize_t T = X.shape[0], D = X.shape[1], H = Wh.shape[0]
    dX_o = np.zeros((T, D))
    dWx_o = np.zeros((D, 3 * H))
    dWh_o = np.zeros((H, 3 * H))
    db_o = np.zeros(3 * H)
    cdef double[:, ::1] dX = dX_o, dWx = dWx_o, dWh = dWh_o
    cdef double[::1] db = db_o
    dh_next_o = np.zeros(H)
    da_in_o = np.zeros(3 * H)
    da_h_o = np.zeros(3 * H)
    cdef double[::1] dh_next = dh_next_o, da_in = da_in_o, da_h = da_h_o
    cdef Py_ssize_t t, u, r
    cdef double r_g, z_g, n_g, s_v, dh, dz, dn, dan, dr, ds, dar, daz, h_prev, xr, hp
    with nogil:
        for t in range(T - 1, -1, -1):
            for u in range(H):
                r_g = G[t, u]
                z_g = G[t, H + u]
                n_g = G[t, 2 * H + u]
                s_v = G[t, 3 * H + u]
                h_prev = Hs[t - 1, u] if t > 0 else 0.0
                dh = dH[t, u] + dh_next[u]
                dz = dh * (h_prev - n_g)
                dn = dh * (1.0 - z_g)
                dan = dn * (1.0 - n_g * n_g)
                dr = dan * s_v
                ds = dan * r_g
                dar = dr * r_g * (1.0 - r_g)
                daz = dz * z_g * (1.0 - z_g)
                da_in[u] = dar
                da_in[H + u] = daz
                da_in[2 * H + u] = dan
                da_h[u] = dar
                da_h[H + u] = daz
                da_h[2 * H + u] = ds
                dh_next[u] = dh * z_g
            # row-major accumulation: contiguous writes into dWx/dWh
            for u in range(3 * H):
                db[u] += da_in[u]
            for r in range(D):
                xr = X[t, r]
                for u in range(3 * H):
                    dWx[r, u] += xr * da_in[u]
            if t > 0:
                for r in range(H):
                    hp = Hs[t - 1, r]
                    for u in range(3 * H):
                        dWh[r, u] += hp * da_h[u]
            for r in range(D):
                for u in range(3 * H):
                    dX[t, r] += da_in[u] * Wx[r, u]
            for r in range(H):
                for u in range(3 * H):
                    dh_next[r] += da_h[u] * Wh[r, u]
    return dX_o, dWx_o, dWh_o, db_o
