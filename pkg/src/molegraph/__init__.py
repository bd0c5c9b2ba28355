"""Molecular property prediction from SMILES with graph convolutions and a
dummy super-node readout; self-contained numpy implementation including its
own reverse-mode differentiation."""

import os

# Honour the thread cap before numpy (and its BLAS) is ever imported.
_threads = os.environ.get("MOLEGRAPH_THREADS")
if _threads and _threads.isdigit():
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"
