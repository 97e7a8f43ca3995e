"""
Fixed-point versus double precision
===================================

The same solver on 20-bit words (s4.16) and in double precision, on one
scaled testbench. The two estimates stay close and the fixed-point run never
saturates once the input is scaled.
"""

import numpy as np

from _plotting import pyplot, save
from trendbreak import SolverConfig, generate_testbench, scale_signal, solve, squared_error
from trendbreak.fixed import FixedFormat

profile, y = generate_testbench(500, 10, seed=11)
ys = scale_signal(y)

for ips in (50, 150, 650):
    dbl = solve(ys, SolverConfig(1.0, iterations_per_sample=ips))
    fix = solve(ys, SolverConfig(1.0, iterations_per_sample=ips, domain="fixed"))
    e_d = squared_error(dbl.beta_values() * ys.scale_factor, profile).squared_error_norm
    e_f = squared_error(fix.beta_values() * ys.scale_factor, profile).squared_error_norm
    print(f"{ips:4d} iterations/sample: double {e_d:.4f}  fixed {e_f:.4f}  "
          f"saturations {fix.saturation_events}  max|sum beta| {fix.max_abs_sum:.3f}")

# Fewer fraction bits make the gap visible; truncation instead of rounding biases it.
for fmt in (FixedFormat(4, 16), FixedFormat(4, 10), FixedFormat(4, 10, rounding="truncate"), FixedFormat(4, 6)):
    fix = solve(ys, SolverConfig(1.0, iterations_per_sample=300, domain="fixed", fmt=fmt))
    err = squared_error(fix.beta_values() * ys.scale_factor, profile).squared_error_norm
    print(f"{str(fmt):6s} {fmt.rounding:8s}: error {err:.4f}")

plt = pyplot()
if plt:
    dbl = solve(ys, SolverConfig(1.0, iterations_per_sample=650))
    fix = solve(ys, SolverConfig(1.0, iterations_per_sample=650, domain="fixed"))
    diff = (fix.beta_values() - dbl.beta_values()) * ys.scale_factor
    fig, ax = plt.subplots(figsize=(8, 3))
    ax.plot(np.arange(1, ys.n + 1), diff, lw=0.8)
    ax.set_xlabel("coefficient index")
    ax.set_ylabel("fixed - double")
    save(fig, "02_fixed_vs_double.png")
