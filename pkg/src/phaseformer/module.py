"""Minimal parameter-container system.

A Module owns Parameters and sub-Modules through plain attributes;
`named_parameters` walks the tree and yields dotted-path names that are
stable across runs, which the checkpoint format relies on.
"""

from __future__ import annotations

import numpy as np

from .tensor import Parameter


class Module:
    def named_parameters(self, prefix=""):
        for attr, value in vars(self).items():
            name = f"{prefix}.{attr}" if prefix else attr
            if isinstance(value, Parameter):
                value.name = name
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name)
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}")
                    elif isinstance(item, Parameter):
                        item.name = f"{name}.{i}"
                        yield f"{name}.{i}", item

    def parameters(self):
        for _, p in self.named_parameters():
            yield p

    def parameter_dict(self):
        return dict(self.named_parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def count_scalars(self):
        return sum(p.size for p in self.parameters())


def glorot_uniform(rng, shape, fan_in, fan_out, dtype=np.float32):
    """Uniform init with the Glorot bound sqrt(6/(fan_in+fan_out))."""
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def conv_weight(rng, cout, cin, k, dtype=np.float32):
    return Parameter(glorot_uniform(rng, (cout, cin, k, k), cin * k * k, cout * k * k, dtype))


def depthwise_weight(rng, c, k, dtype=np.float32):
    return Parameter(glorot_uniform(rng, (c, 1, k, k), k * k, k * k, dtype))
