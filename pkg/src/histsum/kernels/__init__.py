"""Scoring kernels with backend selection at import time.

The compiled Cython extension is preferred; the pure-Python reference
is used when the extension is missing or when ``HISTSUM_PURE_PYTHON``
is set in the environment.  Both backends expose the same functions:

    lcs_length(a, b)                 -> int
    clipped_overlap_apply(ids, cur, ref) -> int   (mutates cur)
    clipped_overlap_peek(ids, cur, ref)  -> int   (cur left unchanged)

Integer sequences are contiguous int32 numpy arrays for the compiled
backend; the pure backend also accepts plain lists.
"""

import os

from . import _pyref

if os.environ.get("HISTSUM_PURE_PYTHON"):
    _impl = _pyref
    BACKEND = "python"
else:
    try:
        from . import _speedups as _impl

        BACKEND = "c"
    except ImportError:
        _impl = _pyref
        BACKEND = "python"

lcs_length = _impl.lcs_length
clipped_overlap_apply = _impl.clipped_overlap_apply
clipped_overlap_peek = _impl.clipped_overlap_peek


def backend_name():
    """Active backend: ``"c"`` (compiled) or ``"python"`` (fallback)."""
    return BACKEND
