"""
Inside the cycle-accurate accelerator
=====================================

Load a signal into interleaved memory banks, step a few iterations, and watch
the per-iteration cycle cost follow the closed-form model while the
coefficients match the integer solver bit for bit.
"""

import numpy as np

from trendbreak import HwConfig, LbiAccelerator, SolverConfig, estimate_cycles, scale_signal, solve
from trendbreak.fixed import quantize_array
from trendbreak.signal import Signal

n, m = 10, 4
cfg = HwConfig(m=m, n=n)
print(f"N={n}, M={m}: {cfg.t_rows} parallel rows per vector, bank depth {cfg.bank_depth}")
print("beta[6] lives at (bank, address)", cfg.address("beta", 6), "and y[6] at", cfg.address("y", 6))

y = scale_signal(Signal([0, 0, 0, 0, 1, 1, 1, 1, 1, 1.2]))
sim = LbiAccelerator(cfg, lam=0.2)
sim.load_memory(quantize_array(y.samples))
print("bank contents (rows = addresses, columns = banks):")
print(sim.bram.cells)

sim.initialize()
print(f"{sim.trace.f_consumed} set-up cycles, reciprocal pipeline ready: {sim.reciprocal.ready}")
for _ in range(n):
    rec = sim.run_iteration()
    print(f"k={rec.k:2d}  rows={rec.t_hat}  read {rec.c_read:2d}  store {rec.c_store:2d}  total {rec.c_total}")

golden = solve(y, SolverConfig(0.2, total_iterations=n, domain="fixed"))
print("beta raws equal to the integer solver:", np.array_equal(sim.read_back("beta"), golden.beta))
print("simulated cycles", sim.trace.total_cycles, "predicted", estimate_cycles(n, m, n).total_cycles)

# More banks shorten each iteration (until the tree depth dominates); coefficients do not change.
reference = None
for banks in (1, 2, 4, 8, 16):
    s = LbiAccelerator(HwConfig(m=banks, n=n), lam=0.2)
    s.load_memory(quantize_array(y.samples))
    beta, trace = s.run(5 * n)
    reference = beta if reference is None else reference
    print(f"M={banks:2d}: {trace.total_cycles:5d} cycles, same beta as M=1: {np.array_equal(beta, reference)}")
