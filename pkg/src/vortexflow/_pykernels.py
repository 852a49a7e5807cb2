"""Pure numpy evaluation of truncated real Fourier series at scattered points.

``eval_series(points, modes, coeffs, L, with_grad)`` returns

* ``values`` of shape ``(P, c)`` with ``values[p, r] = sum_m Re(coeffs[m, r] * exp(i k0 modes[m] . points[p]))``
* ``grad`` of shape ``(P, c, d)`` (the spatial gradient of each component), or ``None``

where ``k0 = 2 pi / L``. Callers fold Hermitian multiplicities into ``coeffs``.
"""
from __future__ import annotations

import numpy as np

_CHUNK = 2048


def eval_series(points, modes, coeffs, L, with_grad):
    points = np.ascontiguousarray(points, dtype=np.float64)
    modes = np.ascontiguousarray(modes, dtype=np.int64)
    coeffs = np.ascontiguousarray(coeffs, dtype=np.complex128)
    P, d = points.shape
    c = coeffs.shape[1]
    k = (2.0 * np.pi / L) * modes.astype(np.float64)
    out = np.empty((P, c))
    grad = np.empty((P, c, d)) if with_grad else None
    for start in range(0, P, _CHUNK):
        stop = min(start + _CHUNK, P)
        phase = np.exp(1j * (points[start:stop] @ k.T))
        series = phase @ coeffs
        out[start:stop] = series.real
        if with_grad:
            # d/dx_j Re(c e^{i k.x}) = -k_j Im(c e^{i k.x})
            weighted = coeffs[:, :, None] * k[:, None, :]
            grad[start:stop] = -np.einsum("pm,mcj->pcj", phase, weighted).imag
    return out, grad
