"""Closed-form test fields used by the experiments.

Scalar fields take an ``(M, 2)`` array and return ``(M,)``; manifold fields
return ``(M, 3, 3)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError
from .manifolds import euler_xyz

ANOMALY_RECT = (0.1, 0.25, 0.2, 0.4)
ANOMALY_FACTOR = 1.01


def _xy(p):
    p = np.asarray(p, dtype=float).reshape(-1, 2)
    return p[:, 0], p[:, 1]


def gaussian_bump(p):
    x, y = _xy(p)
    return 5.0 * np.exp(-x * x - y * y)


def wave_f(p):
    x, y = _xy(p)
    return np.sin(2 * x + 1) * np.cos(3 * y + 1.5)


def wave_g(p):
    x, y = _xy(p)
    return np.sin(4 * x) * np.cos(5 * y)


def wave_f_anomaly(p):
    """``wave_f`` scaled by 1.01 on the closed rectangle [0.1,0.25]x[0.2,0.4]."""
    x, y = _xy(p)
    x0, x1, y0, y1 = ANOMALY_RECT
    inside = (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)
    return wave_f(p) * np.where(inside, ANOMALY_FACTOR, 1.0)


def rotation_field(p):
    x, y = _xy(p)
    return euler_xyz(1.2 * np.sin(5 * x - 0.1), y * y / 2 - np.sin(3 * x), 1.5 * np.cos(2 * x))


def spd_field(p):
    x, y = _xy(p)
    n = len(x)
    A = np.zeros((n, 3, 3))
    A[:, 0, 0] = np.sin(5 * y)
    A[:, 0, 1] = y
    A[:, 0, 2] = x * y
    A[:, 1, 2] = y * y
    s = np.abs(np.cos(2 * y) + 0.6) * np.exp(-x * x - y * y)
    G = s[:, None, None] * (5 * np.eye(3) + A) + np.eye(3)
    return G + np.swapaxes(G, 1, 2)


@dataclass(frozen=True)
class TestFunction:
    id: str
    fn: Callable
    kind: str  # "scalar", "so3" or "spd3"

    __test__ = False  # not a pytest class

    def __call__(self, p):
        return self.fn(p)


CATALOG = {t.id: t for t in (
    TestFunction("h", gaussian_bump, "scalar"),
    TestFunction("f", wave_f, "scalar"),
    TestFunction("g", wave_g, "scalar"),
    TestFunction("f_anomaly", wave_f_anomaly, "scalar"),
    TestFunction("so3", rotation_field, "so3"),
    TestFunction("spd3", spd_field, "spd3"),
)}


def get(name: str) -> TestFunction:
    try:
        return CATALOG[name]
    except KeyError:
        raise ConfigError(f"unknown test function {name!r}; choose from {sorted(CATALOG)}") from None
