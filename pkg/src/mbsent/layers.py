"""Differentiable layers, loss, and optimizer built on the kernel backend.

Everything here works on a single example at a time: activations are 1-D or
2-D float64 arrays, and each layer accumulates parameter gradients into its
``Param`` objects so minibatch gradients are just repeated backward calls.
Layers cache whatever the backward pass needs, which makes an instance
single-use per forward/backward pair but keeps the call protocol trivial.

Dropout layers take the training RNG explicitly; passing ``rng=None`` is
evaluation mode and the layer is the identity.
"""

import numpy as np

from . import kernels


class Param:
    """A named weight tensor plus its gradient accumulator."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name, value):
        self.name = name
        self.value = np.ascontiguousarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad[...] = 0.0


def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def recurrent_uniform(rng, shape, hidden):
    limit = 1.0 / np.sqrt(hidden)
    return rng.uniform(-limit, limit, size=shape)


class Dense:
    def __init__(self, n_in, n_out, rng, name="dense"):
        self.W = Param(f"{name}.W", glorot_uniform(rng, (n_in, n_out), n_in, n_out))
        self.b = Param(f"{name}.b", np.zeros(n_out))
        self._x = None

    def params(self):
        return [self.W, self.b]

    def forward(self, x):
        self._x = x
        return x @ self.W.value + self.b.value

    def backward(self, dy):
        self.W.grad += np.outer(self._x, dy)
        self.b.grad += dy
        return dy @ self.W.value.T


class Conv1D:
    """Valid (no-padding) 1-D convolution over a (length, depth) input."""

    def __init__(self, filters, size, depth, rng, name="conv"):
        # fan_in counts the full receptive field
        self.W = Param(
            f"{name}.W",
            glorot_uniform(rng, (filters, size, depth), size * depth, filters),
        )
        self.b = Param(f"{name}.b", np.zeros(filters))
        self.size = size
        self._X = None

    def params(self):
        return [self.W, self.b]

    def forward(self, X):
        self._X = np.ascontiguousarray(X)
        return kernels.conv1d_forward(self._X, self.W.value, self.b.value)

    def backward(self, dY):
        dX, dW, db = kernels.conv1d_backward(self._X, self.W.value, np.ascontiguousarray(dY))
        self.W.grad += dW
        self.b.grad += db
        return dX


class ReLU:
    def __init__(self):
        self._mask = None

    def params(self):
        return []

    def forward(self, x):
        self._mask = x > 0.0
        return x * self._mask

    def backward(self, dy):
        return dy * self._mask


class GlobalMaxPool:
    """Columnwise max over time; gradient flows to the first argmax row."""

    def __init__(self):
        self._idx = None
        self._shape = None

    def params(self):
        return []

    def forward(self, Y):
        if Y.shape[0] < 1:
            raise ValueError("global max pool needs at least one row")
        self._idx = np.argmax(Y, axis=0)
        self._shape = Y.shape
        return Y[self._idx, np.arange(Y.shape[1])]

    def backward(self, dy):
        dY = np.zeros(self._shape)
        dY[self._idx, np.arange(self._shape[1])] = dy
        return dY


class Dropout:
    """Inverted dropout. Training mode iff an RNG is supplied."""

    def __init__(self, rate):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self._scaled_mask = None

    def params(self):
        return []

    def forward(self, x, rng=None):
        if rng is None or self.rate == 0.0:
            self._scaled_mask = None
            return x
        keep = rng.random(x.shape) >= self.rate
        self._scaled_mask = keep / (1.0 - self.rate)
        return x * self._scaled_mask

    def backward(self, dy):
        if self._scaled_mask is None:
            return dy
        return dy * self._scaled_mask


class SpatialDropout(Dropout):
    """Dropout that zeroes whole feature columns of a (length, depth) input."""

    def forward(self, x, rng=None):
        if rng is None or self.rate == 0.0:
            self._scaled_mask = None
            return x
        keep = rng.random((1, x.shape[1])) >= self.rate
        self._scaled_mask = keep / (1.0 - self.rate)
        return x * self._scaled_mask


class LSTMLayer:
    """Single-direction LSTM over the first ``n`` rows of a padded input.

    With return_sequences the output keeps the input's length and pad rows
    stay zero; otherwise the output is the state after step n (zeros when
    n = 0).
    """

    def __init__(self, n_in, hidden, rng, return_sequences=False, name="lstm"):
        self.hidden = hidden
        self.return_sequences = return_sequences
        self.Wx = Param(f"{name}.Wx", recurrent_uniform(rng, (n_in, 4 * hidden), hidden))
        self.Wh = Param(f"{name}.Wh", recurrent_uniform(rng, (hidden, 4 * hidden), hidden))
        self.b = Param(f"{name}.b", np.zeros(4 * hidden))
        self._cache = None

    def params(self):
        return [self.Wx, self.Wh, self.b]

    def forward(self, X, n):
        L = X.shape[0]
        if not 0 <= n <= L:
            raise ValueError(f"true length {n} outside [0, {L}]")
        if n == 0:
            self._cache = None
            self._shape = (L, X.shape[1])
            return np.zeros((L, self.hidden)) if self.return_sequences else np.zeros(self.hidden)
        Xn = np.ascontiguousarray(X[:n])
        Hs, Cs, G = kernels.lstm_forward(Xn, self.Wx.value, self.Wh.value, self.b.value)
        self._cache = (Xn, Hs, Cs, G, L)
        if self.return_sequences:
            out = np.zeros((L, self.hidden))
            out[:n] = Hs
            return out
        return Hs[-1].copy()

    def backward(self, d_out):
        if self._cache is None:
            return np.zeros(self._shape)
        Xn, Hs, Cs, G, L = self._cache
        n = Xn.shape[0]
        if self.return_sequences:
            dH = np.ascontiguousarray(d_out[:n])
        else:
            dH = np.zeros((n, self.hidden))
            dH[-1] = d_out
        dXn, dWx, dWh, db = kernels.lstm_backward(
            Xn, self.Wx.value, self.Wh.value, Hs, Cs, G, dH
        )
        self.Wx.grad += dWx
        self.Wh.grad += dWh
        self.b.grad += db
        dX = np.zeros((L, Xn.shape[1]))
        dX[:n] = dXn
        return dX


class GRULayer:
    """Single-direction GRU; same length/masking conventions as LSTMLayer."""

    def __init__(self, n_in, hidden, rng, return_sequences=False, name="gru"):
        self.hidden = hidden
        self.return_sequences = return_sequences
        self.Wx = Param(f"{name}.Wx", recurrent_uniform(rng, (n_in, 3 * hidden), hidden))
        self.Wh = Param(f"{name}.Wh", recurrent_uniform(rng, (hidden, 3 * hidden), hidden))
        self.b = Param(f"{name}.b", np.zeros(3 * hidden))
        self._cache = None

    def params(self):
        return [self.Wx, self.Wh, self.b]

    def forward(self, X, n):
        L = X.shape[0]
        if not 0 <= n <= L:
            raise ValueError(f"true length {n} outside [0, {L}]")
        if n == 0:
            self._cache = None
            self._shape = (L, X.shape[1])
            return np.zeros((L, self.hidden)) if self.return_sequences else np.zeros(self.hidden)
        Xn = np.ascontiguousarray(X[:n])
        Hs, G = kernels.gru_forward(Xn, self.Wx.value, self.Wh.value, self.b.value)
        self._cache = (Xn, Hs, G, L)
        if self.return_sequences:
            out = np.zeros((L, self.hidden))
            out[:n] = Hs
            return out
        return Hs[-1].copy()

    def backward(self, d_out):
        if self._cache is None:
            return np.zeros(self._shape)
        Xn, Hs, G, L = self._cache
        n = Xn.shape[0]
        if self.return_sequences:
            dH = np.ascontiguousarray(d_out[:n])
        else:
            dH = np.zeros((n, self.hidden))
            dH[-1] = d_out
        dXn, dWx, dWh, db = kernels.gru_backward(Xn, self.Wx.value, self.Wh.value, Hs, G, dH)
        self.Wx.grad += dWx
        self.Wh.grad += dWh
        self.b.grad += db
        dX = np.zeros((L, Xn.shape[1]))
        dX[:n] = dXn
        return dX


class Bidirectional:
    """Runs one recurrent layer forward and a second one over the reversed
    true-length input, concatenating the two final states. Pad rows never
    enter either direction.
    """

    def __init__(self, fwd, bwd):
        if fwd.return_sequences or bwd.return_sequences:
            raise ValueError("bidirectional wrapper expects final-state layers")
        self.fwd = fwd
        self.bwd = bwd
        self._n = None
        self._shape = None

    def params(self):
        return self.fwd.params() + self.bwd.params()

    def forward(self, X, n):
        self._n = n
        self._shape = X.shape
        h_f = self.fwd.forward(X[:n], n)
        h_b = self.bwd.forward(np.ascontiguousarray(X[:n][::-1]), n)
        return np.concatenate([h_f, h_b])

    def backward(self, d_out):
        H = self.fwd.hidden
        n = self._n
        dX = np.zeros(self._shape)
        d_f = self.fwd.backward(d_out[:H])
        d_b = self.bwd.backward(d_out[H:])
        if n > 0:
            dX[:n] = d_f + d_b[::-1]
        return dX


def softmax(logits):
    z = logits - np.max(logits)
    e = np.exp(z)
    return e / e.sum()


def softmax_cross_entropy(logits, label):
    """Returns (loss, probabilities, dlogits) for one integer class label."""
    if not 0 <= label < logits.shape[0]:
        raise ValueError(f"label {label} out of range for {logits.shape[0]} classes")
    p = softmax(logits)
    loss = -np.log(max(p[label], 1e-300))
    dlogits = p.copy()
    dlogits[label] -= 1.0
    return loss, p, dlogits


class Adam:
    def __init__(self, params, learning_rate, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self):
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.value -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


def gradient_check(loss_fn, params, delta=1e-5):
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn()`` must run a full forward/backward pass with dropout
    disabled and return the scalar loss; gradients accumulate into the
    Param grads, which this function zeroes before the analytic pass.
    A model with no parameters checks to 0.0 by convention.

    The denominator floor must sit above the intrinsic noise of a float64
    central difference (about eps * |loss| / delta), otherwise components
    with near-zero gradients report that noise instead of agreement.
    """
    params = [p for p in params if p.value.size]
    if not params:
        return 0.0
    for p in params:
        p.zero_grad()
    loss_fn()
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.value.reshape(-1)
        aflat = a.reshape(-1)
        for i in range(flat.shape[0]):
            orig = flat[i]
            flat[i] = orig + delta
            lp = loss_fn()
            flat[i] = orig - delta
            lm = loss_fn()
            flat[i] = orig
            num = (lp - lm) / (2.0 * delta)
            err = abs(aflat[i] - num) / max(abs(aflat[i]), abs(num), 1e-6)
            worst = max(worst, err)
    return worst
