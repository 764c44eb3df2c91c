"""NumPy reference kernels. Single example, float64, C-contiguous.

Shapes:
  conv1d   X (L,d), W (K,f,d), b (K,)          -> Y (L-f+1, K)
  lstm     X (T,D), Wx (D,4H), Wh (H,4H), b (4H,); gate order i, f, g, o
  gru      X (T,D), Wx (D,3H), Wh (H,3H), b (3H,); gate order r, z, n;
           cache G holds [r, z, n, s] with s = h_prev @ Whn

Initial recurrent states are zero. The GRU candidate is
n = tanh(x @ Wxn + b_n + r * s) and the blend is h' = (1-z)*n + z*h_prev.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def conv1d_forward(X, W, b):
    L, d = X.shape
    K, f, _ = W.shape
    if L < f:
        raise ValueError(f"input length {L} shorter than filter size {f}")
    windows = sliding_window_view(X, (f, d)).reshape(L - f + 1, f, d)
    return np.einsum("tfd,kfd->tk", windows, W) + b


def conv1d_backward(X, W, dY):
    L, d = X.shape
    K, f, _ = W.shape
    T = L - f + 1
    windows = sliding_window_view(X, (f, d)).reshape(T, f, d)
    db = dY.sum(axis=0)
    dW = np.einsum("tk,tfd->kfd", dY, windows)
    dX = np.zeros_like(X)
    for i in range(f):
        dX[i : i + T] += dY @ W[:, i, :]
    return dX, dW, db


def lstm_forward(X, Wx, Wh, b):
    T = X.shape[0]
    H = Wh.shape[0]
    Hs = np.zeros((T, H))
    Cs = np.zeros((T, H))
    G = np.zeros((T, 4 * H))
    px = X @ Wx + b
    h = np.zeros(H)
    c = np.zeros(H)
    for t in range(T):
        a = px[t] + h @ Wh
        i = _sigmoid(a[0:H])
        f = _sigmoid(a[H : 2 * H])
        g = np.tanh(a[2 * H : 3 * H])
        o = _sigmoid(a[3 * H : 4 * H])
        c = f * c + i * g
        h = o * np.tanh(c)
        Hs[t] = h
        Cs[t] = c
        G[t, 0:H] = i
        G[t, H : 2 * H] = f
        G[t, 2 * H : 3 * H] = g
        G[t, 3 * H : 4 * H] = o
    return Hs, Cs, G


def lstm_backward(X, Wx, Wh, Hs, Cs, G, dH):
    T, D = X.shape
    H = Wh.shape[0]
    dX = np.zeros_like(X)
    dWx = np.zeros_like(Wx)
    dWh = np.zeros_like(Wh)
    db = np.zeros(4 * H)
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    for t in range(T - 1, -1, -1):
        i = G[t, 0:H]
        f = G[t, H : 2 * H]
        g = G[t, 2 * H : 3 * H]
        o = G[t, 3 * H : 4 * H]
        c = Cs[t]
        c_prev = Cs[t - 1] if t > 0 else np.zeros(H)
        h_prev = Hs[t - 1] if t > 0 else np.zeros(H)
        tc = np.tanh(c)
        dh = dH[t] + dh_next
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc * tc)
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dc_next = dc * f
        da = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g * g),
                do * o * (1.0 - o),
            ]
        )
        dWx += np.outer(X[t], da)
        dWh += np.outer(h_prev, da)
        db += da
        dX[t] = da @ Wx.T
        dh_next = da @ Wh.T
    return dX, dWx, dWh, db


def gru_forward(X, Wx, Wh, b):
    T = X.shape[0]
    H = Wh.shape[0]
    Hs = np.zeros((T, H))
    G = np.zeros((T, 4 * H))
    px = X @ Wx + b
    h = np.zeros(H)
    for t in range(T):
        ph = h @ Wh
        r = _sigmoid(px[t, 0:H] + ph[0:H])
        z = _sigmoid(px[t, H : 2 * H] + ph[H : 2 * H])
        s = ph[2 * H : 3 * H]
        n = np.tanh(px[t, 2 * H : 3 * H] + r * s)
        h = (1.0 - z) * n + z * h
        Hs[t] = h
        G[t, 0:H] = r
        G[t, H : 2 * H] = z
        G[t, 2 * H : 3 * H] = n
        G[t, 3 * H : 4 * H] = s
    return Hs, G


def gru_backward(X, Wx, Wh, Hs, G, dH):
    T, D = X.shape
    H = Wh.shape[0]
    dX = np.zeros_like(X)
    dWx = np.zeros_like(Wx)
    dWh = np.zeros_like(Wh)
    db = np.zeros(3 * H)
    dh_next = np.zeros(H)
    for t in range(T - 1, -1, -1):
        r = G[t, 0:H]
        z = G[t, H : 2 * H]
        n = G[t, 2 * H : 3 * H]
        s = G[t, 3 * H : 4 * H]
        h_prev = Hs[t - 1] if t > 0 else np.zeros(H)
        dh = dH[t] + dh_next
        dz = dh * (h_prev - n)
        dn = dh * (1.0 - z)
        dh_prev = dh * z
        dan = dn * (1.0 - n * n)
        dr = dan * s
        ds = dan * r
        dar = dr * r * (1.0 - r)
        daz = dz * z * (1.0 - z)
        da_in = np.concatenate([dar, daz, dan])
        dWx += np.outer(X[t], da_in)
        db += da_in
        dX[t] = da_in @ Wx.T
        da_h = np.concatenate([dar, daz, ds])
        dWh += np.outer(h_prev, da_h)
        dh_prev = dh_prev + da_h @ Wh.T
        dh_next = dh_prev
    return dX, dWx, dWh, db
