"""Kernel backend selection.

Imports the compiled Cython kernels when the extension was built, otherwise
falls back to the pure-numpy implementation.  Both expose the same four
functions with bit-identical results; only speed differs.  Set
MOLEGRAPH_KERNELS=numpy (or =compiled) to force a backend — the benchmark
and the cross-backend parity tests use this.
"""

import os

_forced = os.environ.get("MOLEGRAPH_KERNELS", "").strip().lower()

if _forced == "numpy":
    from . import _numpy_impl as _impl

    BACKEND = "numpy"
else:
    try:
        from . import _core as _impl

        BACKEND = "compiled"
    except ImportError:
        if _forced == "compiled":
            raise
        from . import _numpy_impl as _impl

        BACKEND = "numpy"

neighbor_sum = _impl.neighbor_sum
closed_max = _impl.closed_max
scatter_max_grad = _impl.scatter_max_grad
segment_sum = _impl.segment_sum

__all__ = ["BACKEND", "neighbor_sum", "closed_max", "scatter_max_grad", "segment_sum"]
