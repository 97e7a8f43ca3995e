"""
Estimation error against iteration budget
=========================================

Paired Monte Carlo trials: every random profile is solved in both scalar
domains, and the mean squared error of the refit estimate is tracked as the
number of iterations per sample grows.
"""

import sys

from _plotting import pyplot, save
from trendbreak.experiment import AccuracySetup, cell, run_trials, summarize

trials = int(sys.argv[1]) if len(sys.argv) > 1 else 20
setup = AccuracySetup(n=500, trials=trials)
results = run_trials(setup)
cells = summarize(setup, results)

print(f"{trials} trials, n={setup.n}, {setup.num_breaks} breaks, sigma={setup.noise_sigma}")
print(" ips   double(ols)  fixed(ols)   double(raw)")
for ips in setup.iterations_per_sample:
    print(f"{ips:4d}   {cell(cells, 'double', ips).mean:10.4f}  {cell(cells, 'fixed', ips).mean:10.4f}"
          f"   {cell(cells, 'double', ips, 'lbi').mean:10.4f}")
print("saturation events across all fixed-point runs:", sum(r.saturation_events for r in results))

plt = pyplot()
if plt:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ips = setup.iterations_per_sample
    for domain, style in (("double", "o-"), ("fixed", "x--")):
        ax.plot(ips, [cell(cells, domain, i).mean for i in ips], style, label=domain)
    ax.set_xlabel("iterations per sample")
    ax.set_ylabel("mean squared error")
    ax.legend()
    save(fig, "05_accuracy.png")
