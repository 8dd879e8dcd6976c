"""Kernel backend selection.

The compiled extension is used when importable.  Set ``HACSIM_BACKEND=python``
to force the pure-Python twin (``cython`` makes a missing extension an error).
"""
from __future__ import annotations

import os
import warnings

from . import _pykernel

_requested = os.environ.get("HACSIM_BACKEND", "auto").lower()
if _requested not in ("auto", "cython", "python"):
    raise ImportError(f"HACSIM_BACKEND must be auto, cython or python, got {_requested!r}")

_compiled = None
try:
    from . import _kernel as _compiled
except ImportError:  # pragma: no cover - depends on the build
    if _requested == "cython":
        raise
    if _requested == "auto":
        warnings.warn("compiled kernel not available, using the slow Python fallback",
                      RuntimeWarning, stacklevel=2)

if _requested == "python" or _compiled is None:
    kernel, BACKEND = _pykernel, "python"
else:
    kernel, BACKEND = _compiled, "cython"


def get_kernel(name: str | None = None):
    """Return the kernel module for ``name`` ("cython" or "python"; None = active)."""
    if name is None:
        return kernel
    if name == "python":
        return _pykernel
    if name == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernel not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def compiled_available() -> bool:
    return _compiled is not None
