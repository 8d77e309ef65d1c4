"""Allocation kernels with a compiled core and a pure-Python fallback.

The compiled module is used when it imports and ``NETSLICE_PURE_PYTHON`` is
unset. ``BACKEND`` names the active implementation. Callers go through the
wrappers below, which normalise dtypes and never mutate their inputs.
"""

import os

import numpy as np

from . import _fallback

try:
    if os.environ.get("NETSLICE_PURE_PYTHON"):
        raise ImportError("pure python forced")
    from . import _core as _impl
    BACKEND = "cython"
except ImportError:
    _impl = _fallback
    BACKEND = "python"


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def pf_assign(rate, avg, backlog, impl=None):
    """Proportional-fair per-cell assignment.

    Returns ``(owner, bits)`` per column of ``rate``; ``owner`` is -1 where no
    row is backlogged with a positive rate.
    """
    impl = impl or _impl
    return impl.pf_assign(_f64(rate), _f64(avg), _f64(backlog).copy())


def rr_assign(rate, backlog, start=0, impl=None):
    """Round-robin deal; returns ``(owner, bits, next_start)``."""
    impl = impl or _impl
    owner, bits, ptr = impl.rr_assign(_f64(rate), _f64(backlog).copy(), int(start))
    return owner, bits, int(ptr)


def argmax_owner(score, eligible, impl=None):
    impl = impl or _impl
    return impl.argmax_owner(_f64(score), np.ascontiguousarray(eligible, dtype=np.uint8))


def implementations():
    """All importable implementations, keyed by name."""
    out = {"python": _fallback}
    try:
        from . import _core
        out["cython"] = _core
    except ImportError:
        pass
    return out
