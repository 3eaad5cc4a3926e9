"""Named parameter store: values, gradient accumulators, Adam moments.

Parameter initialization is keyed by (seed, parameter name) through a
stable CRC so that creating unrelated parameter groups in a different
order cannot perturb each other's initial values.  That property is what
makes the "ablation path never constructs the sampler" bit-identity hold.
"""

from __future__ import annotations

import zlib

import numpy as np

from .autodiff import Tensor
from .matio import load_named_matrices, save_named_matrices


def _init_rng(seed, name):
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed), key]))


class ParamStore:
    """Mutable bag of learnable tensors plus one Adam state per tensor."""

    def __init__(self, seed=0, dtype=np.float64):
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)
        self._params = {}
        self._adam_m = {}
        self._adam_v = {}
        self._adam_t = 0

    def __contains__(self, name):
        return name in self._params

    def __getitem__(self, name):
        return self._params[name]

    def names(self):
        return list(self._params)

    def parameters(self):
        return list(self._params.values())

    def add(self, name, value):
        if name in self._params:
            raise ValueError(f"duplicate parameter {name!r}")
        t = Tensor(np.array(value, dtype=self.dtype), requires_grad=True, name=name)
        self._params[name] = t
        self._adam_m[name] = np.zeros_like(t.data)
        self._adam_v[name] = np.zeros_like(t.data)
        return t

    def glorot(self, name, shape):
        """Glorot-uniform init keyed by (store seed, name)."""
        rng = _init_rng(self.seed, name)
        fan_in, fan_out = (shape[0], shape[-1]) if len(shape) > 1 else (shape[0], shape[0])
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return self.add(name, rng.uniform(-limit, limit, size=shape))

    def normal(self, name, shape, std=0.1):
        rng = _init_rng(self.seed, name)
        return self.add(name, rng.normal(0.0, std, size=shape))

    def zeros(self, name, shape):
        return self.add(name, np.zeros(shape))

    def ones(self, name, shape):
        return self.add(name, np.ones(shape))

    def get_or_glorot(self, name, shape):
        return self._params[name] if name in self._params else self.glorot(name, shape)

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def adam_step(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        """Bias-corrected Adam update; clears gradients afterwards.

        Parameters with no accumulated gradient this round still have their
        moments decayed, matching the usual treatment of an all-zero grad.
        """
        self._adam_t += 1
        t = self._adam_t
        bc1 = 1.0 - beta1 ** t
        bc2 = 1.0 - beta2 ** t
        for name, p in self._params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m = self._adam_m[name]
            v = self._adam_v[name]
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * g * g
            p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
            p.grad = None

    def clone(self):
        other = ParamStore(seed=self.seed, dtype=self.dtype)
        for name, p in self._params.items():
            other.add(name, p.data.copy())
            other._adam_m[name] = self._adam_m[name].copy()
            other._adam_v[name] = self._adam_v[name].copy()
        other._adam_t = self._adam_t
        return other

    def save(self, directory):
        save_named_matrices(directory, {n: p.data for n, p in self._params.items()})

    def load(self, directory):
        arrays = load_named_matrices(directory)
        for name, arr in arrays.items():
            if name in self._params:
                p = self._params[name]
                if tuple(p.data.shape) != tuple(arr.shape):
                    raise ValueError(f"checkpoint shape mismatch for {name!r}: "
                                     f"{arr.shape} vs {p.data.shape}")
                p.data = arr.astype(self.dtype)
            else:
                self.add(name, arr)
