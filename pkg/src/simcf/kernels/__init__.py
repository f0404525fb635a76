"""Hot numerical kernels: cascaded beamforming products, effective gains
and SINR evaluation.

Two interchangeable backends exist:

* ``_core`` -- a compiled Cython extension (built by setup.py),
* ``_numpy`` -- a pure-numpy fallback with identical signatures.

The compiled backend is preferred when importable. Set the environment
variable ``SIMCF_KERNELS=python`` to force the fallback, or
``SIMCF_KERNELS=compiled`` to fail loudly when the extension is missing.
``benchmarks/bench_kernels.py`` compares the two.
"""

import os

_requested = os.environ.get("SIMCF_KERNELS", "auto").lower()

if _requested not in ("auto", "compiled", "python"):
    raise ValueError(
        f"SIMCF_KERNELS must be 'auto', 'compiled' or 'python', got {_requested!r}"
    )

if _requested == "python":
    from simcf.kernels import _numpy as _impl

    KERNEL_BACKEND = "python"
else:
    try:
        from simcf.kernels import _core as _impl  # type: ignore[attr-defined]

        KERNEL_BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        from simcf.kernels import _numpy as _impl

        KERNEL_BACKEND = "python"

cascade = _impl.cascade
cascade_apply = _impl.cascade_apply
effective_gains = _impl.effective_gains
sinr_from_gains = _impl.sinr_from_gains

__all__ = [
    "KERNEL_BACKEND",
    "cascade",
    "cascade_apply",
    "effective_gains",
    "sinr_from_gains",
]
