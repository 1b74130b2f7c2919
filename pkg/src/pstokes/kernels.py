"""Backend selection for the pointwise kernels.

The compiled Cython module is used when it imports; otherwise, or when the
environment variable ``PSTOKES_PURE_PYTHON`` is set to a non-empty value other
than ``0``, the numpy fallback is used.  Both accept float64 arrays in the
layouts documented in :mod:`pstokes._kernels_py`.
"""

import os

import numpy as np

from . import _kernels_py

_force_py = os.environ.get("PSTOKES_PURE_PYTHON", "") not in ("", "0")

if _force_py:
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
        BACKEND = "python"


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def weight(G, mu, s):
    return _impl.weight(_c(G), float(mu), float(s))


def stress(G, mu, p):
    return _impl.stress(_c(G), float(mu), float(p))


def contract(G, M):
    return _impl.contract(_c(G), _c(M))


def monotonicity_terms(A, B, mu, p):
    return _impl.monotonicity_terms(_c(A), _c(B), float(mu), float(p))
