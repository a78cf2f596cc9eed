"""Hot-loop kernels with a compiled core and a pure-Python fallback.

The compiled extension is used when it was built at install time. Setting
``WEDAS_PURE_PYTHON=1`` forces the fallback, which is handy for comparing
the two or debugging on a machine without a C toolchain.
"""
from __future__ import annotations

import os

from . import _lev_py

levenshtein_py = _lev_py.levenshtein

try:
    if os.environ.get("WEDAS_PURE_PYTHON"):
        raise ImportError("pure-python kernels requested")
    from ._lev import levenshtein as levenshtein_ext
except ImportError:
    levenshtein_ext = None

if levenshtein_ext is not None:
    levenshtein = levenshtein_ext
    BACKEND = "cython"
else:
    levenshtein = levenshtein_py
    BACKEND = "python"

__all__ = ["BACKEND", "levenshtein", "levenshtein_py", "levenshtein_ext"]
