"""Selects the compiled kernels when importable, else the NumPy fallback.

Set ``MSQI_BACKEND=python`` to force the fallback.  ``MSQI_THREADS`` caps the
number of OpenMP threads used by the compiled kernels.
"""
import os

from . import _pykernels

_forced = os.environ.get("MSQI_BACKEND", "").lower()

if _forced == "python":
    kernels = _pykernels
    NAME = "python"
else:
    try:
        from . import _ckernels as kernels
        NAME = "cython"
    except ImportError:
        if _forced == "cython":
            raise
        kernels = _pykernels
        NAME = "python"

_single_threaded = False


def available():
    """Names of the backends importable in this environment."""
    names = ["python"]
    try:
        from . import _ckernels  # noqa: F401
        names.append("cython")
    except ImportError:
        pass
    return names


def get(name=None):
    if name is None:
        return kernels
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")


def thread_count() -> int:
    if _single_threaded:
        return 1
    env = os.environ.get("MSQI_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


class single_threaded:
    """Context manager forcing single-threaded kernels (used for timing)."""

    def __enter__(self):
        global _single_threaded
        self._prev = _single_threaded
        _single_threaded = True
        return self

    def __exit__(self, *exc):
        global _single_threaded
        _single_threaded = self._prev
        return False
