"""Backend dispatch for the hot numerical kernels.

The numba JIT backend is the default; set ``TRAFFICFLOW_KERNELS=numpy`` to
force the pure-numpy implementation (used when numba is unavailable, and by
the benchmark in ``benchmarks/compare_backends.py``).
"""

import os
import warnings

_requested = os.environ.get("TRAFFICFLOW_KERNELS", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(
        f"TRAFFICFLOW_KERNELS must be 'numba' or 'numpy', got {_requested!r}"
    )

if _requested == "numba":
    try:
        from . import numba_backend as _impl
    except ImportError:  # pragma: no cover - exercised only without numba
        warnings.warn("numba unavailable, falling back to the numpy kernels")
        from . import numpy_backend as _impl
else:
    from . import numpy_backend as _impl

BACKEND = _impl.BACKEND
LIMITER_NONE = _impl.LIMITER_NONE
LIMITER_MINMOD = _impl.LIMITER_MINMOD
LIMITER_SUPERBEE = _impl.LIMITER_SUPERBEE
windowed_corr = _impl.windowed_corr
rev_windowed_corr = _impl.rev_windowed_corr
edge_fluxes = _impl.edge_fluxes
apply_fluxes = _impl.apply_fluxes
adjoint_step = _impl.adjoint_step
warmup = _impl.warmup

LIMITER_IDS = {
    "none": LIMITER_NONE,
    "minmod": LIMITER_MINMOD,
    "superbee": LIMITER_SUPERBEE,
}
