"""Dense networks with hand-written backpropagation (numpy only)."""

import numpy as np

from .exceptions import ShapeMismatch

_ACTIVATIONS = {
    "tanh": (np.tanh, lambda y: 1.0 - y * y),
    "relu": (lambda x: np.maximum(x, 0.0), lambda y: (y > 0).astype(float)),
    "identity": (lambda x: x, None),
}


class Mlp:
    """Fully connected net; hidden layers share one activation, the output is linear.

    Parameters are stored as ``[W0, b0, W1, b1, ...]`` with ``W`` of shape
    ``(fan_in, fan_out)`` so a batch ``X`` of shape ``(n, fan_in)`` maps to ``X @ W + b``.
    """

    def __init__(self, sizes, rng=None, activation="tanh", final_scale=3e-3, params=None,
                 dtype=np.float64):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2:
            raise ShapeMismatch("an Mlp needs at least input and output widths")
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.activation = activation
        self._layout = []
        offset = 0
        for shape in self.shapes:
            n = int(np.prod(shape))
            self._layout.append((offset, offset + n, shape))
            offset += n
        self.dtype = np.dtype(dtype)
        self.flat = np.zeros(offset, dtype=self.dtype)
        self.params = self._views(self.flat)
        if params is not None:
            if [np.shape(p) for p in params] != self.shapes:
                raise ShapeMismatch("parameter shapes do not match layer widths")
            for view, p in zip(self.params, params):
                view[...] = p
            return
        rng = np.random.default_rng(rng)
        n_layers = len(self.sizes) - 1
        for k, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            bound = final_scale if k == n_layers - 1 else 1.0 / np.sqrt(fan_in)
            self.params[2 * k][...] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            self.params[2 * k + 1][...] = rng.uniform(-bound, bound, size=fan_out)

    def _views(self, flat):
        return [flat[i:j].reshape(shape) for i, j, shape in self._layout]

    @property
    def shapes(self):
        out = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            out += [(fan_in, fan_out), (fan_out,)]
        return out

    @property
    def activations(self):
        return [self.activation] * (len(self.sizes) - 2) + ["identity"]

    @property
    def n_params(self):
        return sum(p.size for p in self.params)

    def copy(self):
        return Mlp(self.sizes, activation=self.activation, params=self.params, dtype=self.dtype)

    def forward(self, X):
        """Return ``(output, cache)``; the cache holds every layer's input."""
        if X.shape[-1] != self.sizes[0]:
            raise ShapeMismatch(f"expected {self.sizes[0]} inputs, got {X.shape[-1]}")
        act = _ACTIVATIONS[self.activation][0]
        h = X.astype(self.dtype, copy=False)
        cache = [h]
        params = self.params
        last = len(params) - 2
        for k in range(0, last, 2):
            h = act(h @ params[k] + params[k + 1])
            cache.append(h)
        return h @ params[last] + params[last + 1], cache

    def __call__(self, X):
        return self.forward(X)[0]

    def backward(self, cache, dout, need_params=True, need_input=True):
        """Backpropagate ``dout`` (gradient w.r.t. the output).

        Returns ``(flat_grad, dX)``: the parameter gradient laid out like
        ``self.flat`` (None when ``need_params`` is False) and the input gradient.
        Use :meth:`unflatten` to view it per layer.
        """
        dact = _ACTIVATIONS[self.activation][1]
        n_layers = len(self.params) // 2
        flat_grad = np.empty_like(self.flat) if need_params else None
        grads = self._views(flat_grad) if need_params else None
        d = dout.astype(self.dtype, copy=False)
        for k in range(n_layers - 1, -1, -1):
            h_in = cache[k]
            if need_params:
                np.matmul(h_in.T, d, out=grads[2 * k])
                d.sum(axis=0, out=grads[2 * k + 1])
            if k == 0 and not need_input:
                return flat_grad, None
            d = d @ self.params[2 * k].T
            if k > 0:
                d = d * dact(h_in)
        return flat_grad, d

    def unflatten(self, flat):
        return self._views(flat)


def clip_by_global_norm(grad, max_norm):
    if max_norm is None:
        return grad
    norm = float(np.sqrt(grad @ grad))
    if norm > max_norm:
        return grad * (max_norm / norm)
    return grad


class Sgd:
    """Plain gradient step on a flat parameter vector, with global-norm clipping."""

    def __init__(self, lr, clip=1.0):
        self.lr = lr
        self.clip = clip

    def step(self, flat, grad, ascend=False):
        grad = clip_by_global_norm(grad, self.clip)
        flat += (self.lr if ascend else -self.lr) * grad


class Adam:
    def __init__(self, lr, clip=1.0, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.clip = clip
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = self.v = None
        self.n = 0

    def step(self, flat, grad, ascend=False):
        grad = clip_by_global_norm(grad, self.clip)
        if self.m is None:
            self.m = np.zeros_like(flat)
            self.v = np.zeros_like(flat)
        self.n += 1
        b1, b2 = self.beta1, self.beta2
        self.m *= b1
        self.m += (1 - b1) * grad
        self.v *= b2
        self.v += (1 - b2) * grad * grad
        step = self.lr * np.sqrt(1 - b2 ** self.n) / (1 - b1 ** self.n)
        update = self.m / (np.sqrt(self.v) + self.eps)
        flat += (step if ascend else -step) * update


def make_optimizer(name, lr, clip=1.0):
    if name == "sgd":
        return Sgd(lr, clip)
    if name == "adam":
        return Adam(lr, clip)
    raise ValueError(f"unknown optimizer {name!r}")
