"""Kernel selection: compiled extension when importable, pure Python otherwise.

Set ``SARP_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _bp_py

try:
    if os.environ.get("SARP_PURE_PYTHON"):
        raise ImportError("pure-python kernels requested")
    from . import _bp_ext
except ImportError:
    _bp_ext = None

HAVE_EXTENSION = _bp_ext is not None
BACKEND = "cython" if HAVE_EXTENSION else "python"


def get_bp_flood(backend=None):
    backend = backend or BACKEND
    if backend == "cython":
        if _bp_ext is None:
            raise RuntimeError("compiled kernels are not built")
        return _bp_ext.bp_flood
    if backend == "python":
        return _bp_py.bp_flood
    raise ValueError(f"unknown backend {backend!r}")
