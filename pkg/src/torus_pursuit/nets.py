"""Small numpy multilayer perceptrons with hand-written backprop and Adam."""

from __future__ import annotations

import numpy as np


class MLP:
    """ReLU hidden layers, linear output, parameters of one dtype (default float64).

    ``forward`` returns the output and a cache; ``backward`` turns an output
    gradient into parameter gradients (same order as ``params``) and the
    input gradient.
    """

    def __init__(self, sizes: list[int], rng: np.random.Generator | None = None, final_scale: float = 3e-3,
                 dtype=np.float64):
        self.sizes = list(sizes)
        self.params: list[np.ndarray] = []
        if rng is None:
            return
        n = len(sizes) - 1
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            lim = final_scale if i == n - 1 else 1.0 / np.sqrt(fan_in)
            self.params.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)).astype(dtype))
            self.params.append(rng.uniform(-lim, lim, size=fan_out).astype(dtype))

    @property
    def dtype(self):
        return self.params[0].dtype

    @property
    def n_layers(self) -> int:
        return len(self.params) // 2

    def forward(self, x: np.ndarray):
        acts = [x]
        h = x
        for li in range(self.n_layers):
            W, b = self.params[2 * li], self.params[2 * li + 1]
            h = h @ W + b
            if li < self.n_layers - 1:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return h, acts

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, acts, gy: np.ndarray, param_grads: bool = True):
        """Parameter gradients (None when ``param_grads`` is off) and the input gradient."""
        grads: list[np.ndarray] | None = [None] * len(self.params) if param_grads else None  # type: ignore[list-item]
        g = gy
        for li in reversed(range(self.n_layers)):
            if li < self.n_layers - 1:
                g = g * (acts[li + 1] > 0.0)
            if grads is not None:
                grads[2 * li] = acts[li].T @ g
                grads[2 * li + 1] = g.sum(axis=0)
            g = g @ self.params[2 * li].T
        return grads, g

    def copy(self) -> "MLP":
        net = MLP(self.sizes)
        net.params = [p.copy() for p in self.params]
        return net

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, v: np.ndarray) -> None:
        i = 0
        for p in self.params:
            p[...] = v[i:i + p.size].reshape(p.shape)
            i += p.size

    def shapes(self) -> list[list[int]]:
        return [list(p.shape) for p in self.params]


def soft_update(target: MLP, online: MLP, tau: float) -> None:
    """``target <- tau * online + (1 - tau) * target``, exact at tau in {0, 1}."""
    if tau == 0.0:
        return
    for t, o in zip(target.params, online.params):
        if tau == 1.0:
            t[...] = o
        else:
            t += tau * (o - t)


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
