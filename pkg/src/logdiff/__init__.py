"""Numerical laboratory for the logarithmic fractional diffusion equation

    u_t + (-Delta)^{1/2} log(1 + u) = 0

on a periodic line: implicit resolvent stepping, smoothing diagnostics,
the transport-side change of variables and a functional-inequality lab.
"""

from .grid import (DiagnosticsRecord, Field, Grid1D, Kind, Nonlinearity, integrate,
                   load_snapshot, lp_norm, lx_functional, psi, save_snapshot)
from .solver import (RunConfig, StepConfig, StepError, Trajectory, evolve, evolve_explicit,
                     minimize_J, mild_form_residual, resolvent_step)

__all__ = [
    "DiagnosticsRecord", "Field", "Grid1D", "Kind", "Nonlinearity", "integrate", "load_snapshot",
    "lp_norm", "lx_functional", "psi", "save_snapshot", "RunConfig", "StepConfig", "StepError",
    "Trajectory", "evolve", "evolve_explicit", "minimize_J", "mild_form_residual", "resolvent_step",
]
