"""Hot loops of the simulator.

``ADKF_BACKEND=numpy`` forces the vectorised numpy path; otherwise the numba
kernels are used when numba imports cleanly.
"""

import os

from . import _numpy

BACKEND = os.environ.get("ADKF_BACKEND", "numba").strip().lower()

if BACKEND not in ("numba", "numpy"):
    raise ImportError(f"ADKF_BACKEND must be 'numba' or 'numpy', got {BACKEND!r}")

if BACKEND == "numba":
    try:
        from . import _numba as _impl
    except ImportError:  # pragma: no cover - numba missing
        BACKEND = "numpy"
        _impl = _numpy
else:
    _impl = _numpy

consensus_rounds = _impl.consensus_rounds
run_filter = _impl.run_filter
OK = _impl.OK
ILL_CONDITIONED = _impl.ILL_CONDITIONED
COND_LIMIT = _impl.COND_LIMIT


def backend(name):
    """Kernel module for ``name`` ('numba' or 'numpy'), regardless of the flag."""
    if name == "numba":
        from . import _numba
        return _numba
    if name == "numpy":
        return _numpy
    raise ValueError(name)
