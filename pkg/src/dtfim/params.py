"""Physical parameters and sweep specifications.

All rates are in units of the decay rate ``gamma`` (which defaults to 1).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from dtfim.errors import InvalidParams

AXES = ("delta", "omega", "vint")


@dataclass(frozen=True)
class SystemParams:
    """Detuning, Rabi frequency, interaction strength, decay rate and atom number."""

    delta: float
    omega: float
    vint: float
    gamma: float = 1.0
    natoms: int = 100

    def __post_init__(self):
        for name in ("delta", "omega", "vint", "gamma"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise InvalidParams(f"{name} must be finite, got {value!r}")
        if not self.gamma > 0:
            raise InvalidParams(f"gamma must be positive, got {self.gamma!r}")
        if int(self.natoms) != self.natoms or self.natoms < 1:
            raise InvalidParams(f"natoms must be a positive integer, got {self.natoms!r}")

    def with_value(self, axis: str, value: float) -> "SystemParams":
        if axis not in AXES:
            raise InvalidParams(f"unknown sweep axis {axis!r}; expected one of {AXES}")
        return replace(self, **{axis: float(value)})

    def with_natoms(self, natoms: int) -> "SystemParams":
        return replace(self, natoms=natoms)

    def as_dict(self) -> dict:
        return {
            "delta": self.delta,
            "omega": self.omega,
            "vint": self.vint,
            "gamma": self.gamma,
            "natoms": self.natoms,
        }


@dataclass(frozen=True)
class Sweep:
    """Linear sweep of one parameter axis, endpoints included."""

    axis: str
    start: float
    stop: float
    steps: int

    def __post_init__(self):
        if self.axis not in AXES:
            raise InvalidParams(f"unknown sweep axis {self.axis!r}; expected one of {AXES}")
        if self.steps < 2:
            raise InvalidParams("a sweep needs at least 2 steps")
        if not (math.isfinite(self.start) and math.isfinite(self.stop)) or self.start == self.stop:
            raise InvalidParams("sweep range must be finite and nonempty")

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.steps)

    @classmethod
    def parse(cls, text: str) -> "Sweep":
        """Parse ``axis:min:max:steps``."""
        parts = text.split(":")
        if len(parts) != 4:
            raise InvalidParams(f"sweep must look like axis:min:max:steps, got {text!r}")
        try:
            return cls(parts[0], float(parts[1]), float(parts[2]), int(parts[3]))
        except ValueError as exc:
            raise InvalidParams(f"bad sweep {text!r}: {exc}") from None


def pmap(fn, items, workers=1):
    """Ordered map, optionally over a process pool."""
    items = list(items)
    if workers <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))
