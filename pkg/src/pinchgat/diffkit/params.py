"""Named parameter container with a flat scalar index, He init, checkpoints.

The flat index concatenates every parameter's raveled entries in insertion
order, so the order in which specs are declared fixes the coordinate system
used by gradient checks and checkpoints.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .tensor import Tensor, NonFiniteError

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ParamSpec:
    """Declaration of one learnable array.

    fan_in is the input dimension used for He initialization; ``None`` marks
    a bias, which is zero-initialized.
    """

    name: str
    shape: tuple[int, ...]
    fan_in: int | None


class ParamSet:
    """Ordered mapping of parameter name to a gradient-tracked Tensor."""

    def __init__(self, specs: list[ParamSpec], values: dict[str, np.ndarray]):
        self.specs = list(specs)
        self._params: dict[str, Tensor] = {}
        for spec in self.specs:
            arr = np.asarray(values[spec.name], dtype=np.float64)
            if arr.shape != spec.shape:
                raise ValueError(
                    f"{spec.name}: expected shape {spec.shape}, got {arr.shape}")
            self._params[spec.name] = Tensor(arr, requires_grad=True)

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def names(self) -> list[str]:
        return [s.name for s in self.specs]

    @property
    def n_scalars(self) -> int:
        return sum(int(np.prod(s.shape)) for s in self.specs)

    def slice_of(self, name: str) -> slice:
        """Flat-index range occupied by one named parameter."""
        start = 0
        for spec in self.specs:
            size = int(np.prod(spec.shape))
            if spec.name == name:
                return slice(start, start + size)
            start += size
        raise KeyError(name)

    def flatten(self) -> np.ndarray:
        return np.concatenate([self._params[s.name].data.ravel()
                               for s in self.specs])

    def assign_flat(self, flat: np.ndarray):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.n_scalars:
            raise ValueError("flat vector length does not match parameter count")
        start = 0
        for spec in self.specs:
            size = int(np.prod(spec.shape))
            self._params[spec.name].data = (
                flat[start:start + size].reshape(spec.shape).copy())
            start += size

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        return {s.name: (self._params[s.name].grad.copy()
                         if self._params[s.name].grad is not None
                         else np.zeros(s.shape))
                for s in self.specs}

    def grads_flat(self) -> np.ndarray:
        g = self.grads()
        return np.concatenate([g[s.name].ravel() for s in self.specs])

    def copy(self) -> "ParamSet":
        return ParamSet(self.specs,
                        {s.name: self._params[s.name].data.copy()
                         for s in self.specs})

    def with_values(self, values: dict[str, np.ndarray]) -> "ParamSet":
        return ParamSet(self.specs, values)

    # -- persistence ----------------------------------------------------------

    def to_checkpoint(self, seed: int | None = None) -> dict:
        return {
            "format_version": CHECKPOINT_VERSION,
            "seed": seed,
            "specs": [{"name": s.name, "shape": list(s.shape),
                       "fan_in": s.fan_in} for s in self.specs],
            "flat_values": self.flatten().tolist(),
        }

    @classmethod
    def from_checkpoint(cls, doc: dict) -> "ParamSet":
        if doc.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(
                f"unsupported checkpoint version {doc.get('format_version')}")
        specs = [ParamSpec(d["name"], tuple(d["shape"]), d["fan_in"])
                 for d in doc["specs"]]
        ps = cls(specs, {s.name: np.zeros(s.shape) for s in specs})
        ps.assign_flat(np.asarray(doc["flat_values"], dtype=np.float64))
        return ps

    def save(self, path: str, seed: int | None = None):
        with open(path, "w") as fh:
            json.dump(self.to_checkpoint(seed), fh)

    @classmethod
    def load(cls, path: str) -> "ParamSet":
        with open(path) as fh:
            return cls.from_checkpoint(json.load(fh))


def he_init(specs: list[ParamSpec], seed: int) -> ParamSet:
    """Draw every weight i.i.d. N(0, 2/fan_in); biases start at zero."""
    rng = np.random.default_rng(seed)
    values = {}
    for spec in specs:
        if spec.fan_in is None:
            values[spec.name] = np.zeros(spec.shape)
        else:
            std = np.sqrt(2.0 / spec.fan_in)
            values[spec.name] = rng.normal(0.0, std, size=spec.shape)
    return ParamSet(specs, values)


def grad(loss_fn: Callable[..., Tensor], params: ParamSet,
         *args) -> dict[str, np.ndarray]:
    """Gradient of a scalar loss with respect to every parameter.

    loss_fn(params, *args) must return a scalar Tensor. Parameters the loss
    never touches get an exact zero gradient.
    """
    params.zero_grad()
    loss = loss_fn(params, *args)
    if not np.all(np.isfinite(loss.data)):
        raise NonFiniteError("loss")
    loss.backward()
    return params.grads()
