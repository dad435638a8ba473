"""Kernel backend selection.

The compiled extension ``_kernels`` is used when it imports; otherwise, or
when the environment variable ``MONITORED_DOTS_PURE`` is set to ``1``, the
numpy implementation in ``_kernels_py`` is used. Both expose the same
functions with the same semantics.
"""

from __future__ import annotations

import os

from . import _kernels_py

__all__ = [
    "BACKEND",
    "coth_drift",
    "langevin_run",
    "metropolis_sweeps",
    "pair_potential",
    "STATUS_OK",
    "STATUS_POOL_EXHAUSTED",
    "STATUS_COLLISION",
]

_impl = _kernels_py
BACKEND = "python"
if os.environ.get("MONITORED_DOTS_PURE", "") != "1":
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

coth_drift = _impl.coth_drift
langevin_run = _impl.langevin_run
metropolis_sweeps = _impl.metropolis_sweeps
pair_potential = _kernels_py.pair_potential

STATUS_OK = _kernels_py.STATUS_OK
STATUS_POOL_EXHAUSTED = _kernels_py.STATUS_POOL_EXHAUSTED
STATUS_COLLISION = _kernels_py.STATUS_COLLISION
