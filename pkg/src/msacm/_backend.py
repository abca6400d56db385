"""Kernel backend selection.

The compiled extension is preferred; the pure-Python twin is the fallback.
Set MSACM_PURE_PY=1 to force the fallback (useful for benchmarking and for
running from a source tree without building).
"""

import os

from . import _filter_py

if os.environ.get("MSACM_PURE_PY") == "1":
    kernels = _filter_py
    BACKEND = "python"
else:
    try:
        from . import _filter_core as kernels  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        kernels = _filter_py
        BACKEND = "python"


def backend_name():
    return BACKEND


def available_backends():
    """All importable kernel backends, name -> module."""
    out = {"python": _filter_py}
    try:
        from . import _filter_core

        out["compiled"] = _filter_core
    except ImportError:
        pass
    return out
