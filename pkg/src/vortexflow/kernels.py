"""Backend selection for the point-evaluation kernel.

The compiled extension is preferred. Setting ``VORTEXFLOW_PURE_PYTHON=1``
before import forces the numpy fallback, which is also used whenever the
extension was not built.
"""
from __future__ import annotations

import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels.eval_series

if not os.environ.get("VORTEXFLOW_PURE_PYTHON"):
    try:
        from . import _ckernels
    except ImportError:  # extension not built
        pass
    else:
        BACKEND = "cython"
        _impl = _ckernels.eval_series


def eval_series(points, modes, coeffs, L, with_grad=False, backend=None):
    """Evaluate a real Fourier series (and optionally its gradient) at points.

    ``backend`` may name ``"python"`` or ``"cython"`` explicitly; the default
    is whatever was selected at import.
    """
    impl = _impl
    if backend == "python":
        impl = _pykernels.eval_series
    elif backend == "cython":
        from . import _ckernels

        impl = _ckernels.eval_series
    elif backend is not None:
        raise ValueError(f"unknown backend {backend!r}")
    return impl(
        np.ascontiguousarray(points, dtype=np.float64),
        np.ascontiguousarray(modes, dtype=np.int64),
        np.ascontiguousarray(coeffs, dtype=np.complex128),
        float(L),
        bool(with_grad),
    )
