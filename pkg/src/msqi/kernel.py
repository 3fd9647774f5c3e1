"""Compactly supported radial weight functions."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError


def wendland_31(r):
    """Wendland's C^2 function ``(1 - r)_+^4 (4 r + 1)``.

    Accepts scalars or arrays.  Values for ``r >= 1`` are exactly zero; the
    polynomial is never evaluated there.
    """
    arr = np.asarray(r, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ConfigError("wendland_31 needs r >= 0")
    inside = arr < 1.0
    t = np.where(inside, 1.0 - arr, 0.0)
    out = np.where(inside, t * t * t * t * (4.0 * arr + 1.0), 0.0)
    if np.ndim(r) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class Kernel:
    """Radial profile ``phi`` with support ``[0, 1)``, used as ``phi(|x - y| / delta)``."""

    name: str
    profile: Callable
    smoothness: str

    def __call__(self, r):
        return self.profile(r)


WENDLAND_31 = Kernel("wendland31", wendland_31, "C2")
KERNELS = {WENDLAND_31.name: WENDLAND_31}


def weight(x, site, delta: float, kernel: Kernel = WENDLAND_31) -> float:
    """``phi(|x - site| / delta)``."""
    if not (delta > 0):
        raise ConfigError(f"support radius must be positive, got {delta}")
    d = np.asarray(x, dtype=float) - np.asarray(site, dtype=float)
    return float(kernel(float(np.sqrt(np.dot(d, d))) / delta))
