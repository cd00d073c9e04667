"""Backend selection for the likelihood kernel.

The compiled extension is used when it imports; setting ``SCRFIT_PURE_PYTHON=1``
forces the NumPy implementation.
"""
import os

from . import _fallback

BACKEND = "python"
session_kernel = _fallback.session_kernel

if os.environ.get("SCRFIT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _core
    except ImportError:
        pass
    else:
        session_kernel = _core.session_kernel
        BACKEND = "compiled"


def get_kernel(backend: str | None = None):
    """Return a session kernel by name ('compiled', 'python') or the default."""
    if backend is None:
        return session_kernel
    if backend == "python":
        return _fallback.session_kernel
    if backend == "compiled":
        from . import _core
        return _core.session_kernel
    raise ValueError(f"unknown backend {backend!r}")
