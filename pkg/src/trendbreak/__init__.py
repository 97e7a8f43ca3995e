"""Level-shift detection with linearized Bregman iterations.

Double-precision and bit-true fixed-point solvers, a cycle-stepped model of
an FPGA datapath that runs the fixed-point algorithm, and a closed-form
clock-cycle model.
"""

__version__ = "0.1.0"

from .fixed import DEFAULT_FORMAT, FixedFormat, FixedScalar, quantize, reciprocal_q
from .signal import (
    BreakProfile,
    Signal,
    candidate_matvec,
    generate_testbench,
    scale_signal,
    squared_error,
    synthesize_profile,
)
from .lbi import SolverConfig, detect, extract_support, iterate_once, ols_debias, shrink, solve
from .cycles import estimate_cycles, estimate_time, load_presets, sweep
from .hwsim import HwConfig, LbiAccelerator
