"""Multiscale quasi-interpolation of scalar and manifold-valued scattered data."""

__version__ = "0.1.0"

from ._backend import NAME as BACKEND  # noqa: E402
from .errors import (ConfigError, CutLocus, EmptyNeighborhood, MissingValues,  # noqa: E402
                     MsqiError, NonConvergence, NonUnisolvent, NumericalError)
from .kernel import WENDLAND_31, wendland_31  # noqa: E402
from .manifolds import (SO3, SPD, Euclidean, KarcherConfig, karcher_mean,  # noqa: E402
                        karcher_mean_spd)
from .manifold_multiscale import (BaseFunction, ManifoldField,  # noqa: E402
                                  manifold_multiscale_fit, manifold_quasi_interp)
from .multiscale import linf_error, multiscale_fit  # noqa: E402
from .pointset import Domain, PointSet, build_level_sequence, halton_tile  # noqa: E402
from .quasi_interp import QuasiInterpolant  # noqa: E402

__all__ = [
    "BACKEND", "BaseFunction", "ConfigError", "CutLocus", "Domain", "EmptyNeighborhood",
    "Euclidean", "KarcherConfig", "ManifoldField", "MissingValues", "MsqiError",
    "NonConvergence", "NonUnisolvent", "NumericalError", "PointSet", "QuasiInterpolant", "SO3",
    "SPD", "WENDLAND_31", "build_level_sequence", "halton_tile", "karcher_mean",
    "karcher_mean_spd", "linf_error", "manifold_multiscale_fit", "manifold_quasi_interp",
    "multiscale_fit", "wendland_31",
]
