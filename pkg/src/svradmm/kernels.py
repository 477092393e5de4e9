"""Backend selection for the gradient kernels.

The compiled extension is preferred when importable; set
``SVRADMM_BACKEND=py`` (or ``c``) to force a choice.  Both backends expose
the same functions with identical semantics; results may differ by a few
ulps because of summation order.
"""

import os

from . import _kernels_py

_choice = os.environ.get("SVRADMM_BACKEND", "auto").lower()

if _choice in ("auto", "c"):
    try:
        from . import _kernels_c as _impl
    except ImportError:
        if _choice == "c":
            raise
        _impl = _kernels_py
elif _choice == "py":
    _impl = _kernels_py
else:
    raise ValueError(f"SVRADMM_BACKEND must be auto, c or py, got {_choice!r}")

LOGISTIC = _impl.LOGISTIC
SQUARED = _impl.SQUARED
SIGMOID = _impl.SIGMOID

# Mini-batch kernels run once per inner iteration and win from the compiled
# row loops; full-data passes are BLAS-bound, where numpy is faster.
full_gradient = _kernels_py.full_gradient
batch_gradient = _impl.batch_gradient
vr_gradient = _impl.vr_gradient
total_loss = _kernels_py.total_loss


def backend_name():
    """Name of the active kernel backend ("c" or "python")."""
    return _impl.BACKEND
