"""
Finding level shifts in a noisy signal
======================================

Generate a piecewise-constant signal, run the sparse solver, and refit the
detected break positions by least squares.
"""

import numpy as np

from _plotting import pyplot, save
from trendbreak import SolverConfig, detect, extract_support, generate_testbench, scale_signal, solve

# A 400-sample signal with 6 level shifts of magnitude 0.5..1.5 and mild noise.
profile, y = generate_testbench(400, 6, magnitude_range=(0.5, 1.5), noise_sigma=0.05, seed=3)
print("true breaks:", profile.breaks)

# The solver works on data scaled to max |y| = 1; lambda is given in those units.
cfg = SolverConfig(lam=1.0, iterations_per_sample=650)
ys = scale_signal(y)
state = solve(ys, cfg)

# Raw solver output: the shrunk coefficients are biased and smeared over neighbours.
raw_support = extract_support(state)
print(f"raw support has {len(raw_support)} entries")

# detect() chains scaling, solving, support extraction and the OLS refit.
report = detect(y, cfg, prune=1e-9)
strong = [(s, round(m, 3)) for s, m in zip(report.support, report.magnitudes) if abs(m) > 0.25]
print("refit breaks above 0.25:", strong)

plt = pyplot()
if plt:
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(8, 5), sharex=True)
    idx = np.arange(1, y.n + 1)
    top.plot(idx, y.samples, lw=0.8, label="signal")
    top.step(idx, np.cumsum(report.dense(y.n)), where="post", label="refit model")
    top.legend()
    bottom.stem(idx, profile.dense(), linefmt="C0-", markerfmt="C0o", basefmt=" ", label="true")
    bottom.plot(idx, state.beta_values() * ys.scale_factor, "C1", lw=1, label="solver output")
    bottom.legend()
    bottom.set_xlabel("sample")
    save(fig, "01_detect.png")
