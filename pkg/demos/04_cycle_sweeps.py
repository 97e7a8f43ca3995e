"""
How many clock cycles does a run take?
======================================

Sweep the closed-form cycle model over the number of memory banks and over
the signal length, then turn cycle counts into seconds with device clocks.
"""

import numpy as np

from _plotting import pyplot, save
from trendbreak import estimate_cycles, load_presets, sweep
from trendbreak.cycles import ceil_log2

# (a) banks: fewer rows per iteration, one more tree stage at every power of two.
m_values = np.arange(1, 2049)
by_m = sweep("m", m_values, n=10000, iterations_per_sample=650)
cycles_m = np.array([p.cycles for p in by_m])
jumps = [int(m) for m in m_values[1:] if cycles_m[m - 1] > cycles_m[m - 2]]
print("cycle count rises when M crosses", jumps)

# (b) length: cost grows roughly quadratically in N for a fixed bank count.
n_values = np.arange(1000, 20001, 500)
by_n = sweep("n", n_values, m=2000)
print(f"N=1000: {by_n[0].cycles:.3e} cycles, N=20000: {by_n[-1].cycles:.3e} cycles")

# Processing time for N=10000 and L=6.5e6 on the preset devices.
for device in load_presets().values():
    for m, mhz in sorted(device.clock_frequency_by_m.items()):
        est = estimate_cycles(10000, m, 6_500_000)
        print(f"{device.name:28s} M={m:5d} {mhz:7.2f} MHz -> {est.processing_time(mhz):7.2f} s")

plt = pyplot()
if plt:
    fig, (ax_m, ax_n) = plt.subplots(1, 2, figsize=(10, 3.5))
    ax_m.semilogy(m_values, cycles_m)
    for m in jumps:
        ax_m.axvline(m, color="0.85", lw=0.6, zorder=0)
    ax_m.set_xlabel("banks M")
    ax_m.set_ylabel("cycles (N = 10000)")
    ax_n.plot(n_values, [p.cycles for p in by_n])
    ax_n.set_xlabel("samples N")
    ax_n.set_ylabel("cycles (M = 2000)")
    save(fig, "04_cycle_sweeps.png")

print("tree stages for M = 64, 65:", ceil_log2(64), ceil_log2(65))
