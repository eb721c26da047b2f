"""Backend selection for the hot kernels.

The compiled ``_core`` extension is used when it imports; otherwise the numpy
reference implementation in ``_pykernels`` is used.  Set the environment
variable ``RIVERCONTROL_BACKEND=python`` to force the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("RIVERCONTROL_BACKEND", "").lower() != "python":
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _pykernels

CONVERGED = _pykernels.CONVERGED
MAX_ITERATIONS = _pykernels.MAX_ITERATIONS
DIVERGED = _pykernels.DIVERGED

weno5_derivatives = _impl.weno5_derivatives
weno3_interpolate = _impl.weno3_interpolate
thomas = _impl.thomas
reservoir_qstar = _impl.reservoir_qstar
reservoir_gain = _impl.reservoir_gain
reservoir_sweeps = _impl.reservoir_sweeps
sediment_iterate = _impl.sediment_iterate
sediment_apply = _impl.sediment_apply
sg_evaluate = _impl.sg_evaluate
sg_basis_coo = _impl.sg_basis_coo


def backends():
    """Mapping of available backend names to kernel modules."""
    found = {"python": _pykernels}
    try:
        from . import _core

        found["compiled"] = _core
    except ImportError:
        pass
    return found
