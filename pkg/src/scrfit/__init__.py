"""Spatial capture-recapture estimation with covariate-driven detectability,
spatial scale and density."""

__version__ = "0.1.0"

from .kernels import BACKEND  # noqa: E402

__all__ = ["BACKEND", "__version__"]
