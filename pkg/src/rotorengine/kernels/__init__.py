"""Time-stepping kernels for the classical stochastic engine model.

Two interchangeable implementations of the same batched inner loop exist:
a Cython extension (`_sde_cy`) for the hot path and a vectorized pure-numpy
fallback (`_sde_py`).  The compiled kernel is preferred when importable;
set ROTORENGINE_PURE_PYTHON=1 to force the fallback.  Both advance a batch
of trajectories through a block of Ito steps with pre-generated Wiener
increments, so a given seed produces the same noise sequence either way.

Reruns are bit-identical within a backend.  Across backends the states
agree to rounding only: libm's scalar cos and numpy's vectorized cos can
disagree by one ulp on rare arguments.  The manifest of every run records
which backend produced it.
"""

import os

from . import _sde_py

try:
    from . import _sde_cy
except ImportError:  # extension not built
    _sde_cy = None

if _sde_cy is not None and not os.environ.get("ROTORENGINE_PURE_PYTHON"):
    active = _sde_cy
    BACKEND = "cython"
else:
    active = _sde_py
    BACKEND = "python"

advance_block = active.advance_block

__all__ = ["advance_block", "BACKEND", "_sde_py", "_sde_cy"]
