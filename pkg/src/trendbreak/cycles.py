"""Closed-form clock-cycle and processing-time model of the accelerator.

An iteration on row ``k`` with ``M`` memory banks costs::

    3 * (ceil(k / M) + 2) + ceil(log2 M)

cycles, and a run of ``L`` iterations over ``N`` samples adds a fixed
overhead ``F`` (21 cycles in the reference design).
"""

from __future__ import annotations

import configparser
import csv
import io
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

__all__ = [
    "DEFAULT_OVERHEAD",
    "CycleEstimate",
    "DevicePreset",
    "SweepPoint",
    "ceil_log2",
    "read_cycles",
    "store_cycles",
    "iteration_cycles",
    "estimate_cycles",
    "literal_cycles",
    "estimate_time",
    "sweep",
    "sweep_to_csv",
    "load_presets",
]

DEFAULT_OVERHEAD = 21


def ceil_log2(m: int) -> int:
    if m < 1:
        raise ValueError("m must be >= 1")
    return (m - 1).bit_length()


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def read_cycles(k: int, m: int) -> int:
    """Beta read + adder tree + subtract + multiply."""
    return _ceil_div(k, m) + ceil_log2(m) + 2


def store_cycles(k: int, m: int) -> int:
    """Handshake plus two cycles per parallel row plus fill/drain."""
    return 2 * _ceil_div(k, m) + 4


def iteration_cycles(k: int, m: int) -> int:
    return 3 * (_ceil_div(k, m) + 2) + ceil_log2(m)


@dataclass(frozen=True)
class CycleEstimate:
    total_cycles: int
    f_overhead: int
    n: int
    m: int
    l: int

    def processing_time(self, clock_mhz: float) -> float:
        return estimate_time(self, clock_mhz)

    @property
    def cycles_per_iteration(self) -> float:
        return (self.total_cycles - self.f_overhead) / self.l


def _row_sum(count: int, m: int) -> int:
    """sum of ceil(k/m) for k = 1..count, in O(1)."""
    q, r = divmod(count, m)
    return m * q * (q + 1) // 2 + r * (q + 1)


def _check(n: int, m: int, l: int, f_overhead: int) -> None:
    if min(n, m, l) < 1:
        raise ValueError("n, m and l must all be >= 1")
    if f_overhead < 0:
        raise ValueError("f_overhead must be >= 0")


def estimate_cycles(n: int, m: int, l: int, f_overhead: int = DEFAULT_OVERHEAD) -> CycleEstimate:
    """Total cycles for ``l`` iterations; sweeps over ``k`` are grouped."""
    _check(n, m, l, f_overhead)
    full, rem = divmod(l, n)
    per_row_const = 6 + ceil_log2(m)
    core = full * (3 * _row_sum(n, m) + n * per_row_const) + 3 * _row_sum(rem, m) + rem * per_row_const
    return CycleEstimate(f_overhead + core, f_overhead, n, m, l)


def literal_cycles(n: int, m: int, l: int, f_overhead: int = DEFAULT_OVERHEAD) -> int:
    """Same total by plain summation over every iteration (reference path)."""
    _check(n, m, l, f_overhead)
    return f_overhead + sum(iteration_cycles((i - 1) % n + 1, m) for i in range(1, l + 1))


def estimate_time(estimate: CycleEstimate, clock_mhz: float) -> float:
    """Seconds at ``clock_mhz``."""
    if clock_mhz <= 0:
        raise ValueError("clock_mhz must be positive")
    return estimate.total_cycles / (clock_mhz * 1e6)


@dataclass(frozen=True)
class SweepPoint:
    value: int
    cycles: int
    seconds: float | None = None


def sweep(
    axis: str,
    values: Iterable[int],
    *,
    n: int | None = None,
    m: int | None = None,
    iterations_per_sample: int = 650,
    f_overhead: int = DEFAULT_OVERHEAD,
    clock_mhz: float | None = None,
) -> list[SweepPoint]:
    """Cycle counts along ``m`` (fixed ``n``) or ``n`` (fixed ``m``).

    ``L`` is always ``iterations_per_sample * n``.
    """
    values = [int(x) for x in values]
    if not values:
        raise ValueError("empty sweep range")
    if axis == "m":
        if n is None:
            raise ValueError("an m sweep needs a fixed n")
        configs = [(n, x) for x in values]
    elif axis == "n":
        if m is None:
            raise ValueError("an n sweep needs a fixed m")
        configs = [(x, m) for x in values]
    else:
        raise ValueError("axis must be 'm' or 'n'")
    points = []
    for x, (nn, mm) in zip(values, configs):
        est = estimate_cycles(nn, mm, iterations_per_sample * nn, f_overhead)
        secs = estimate_time(est, clock_mhz) if clock_mhz else None
        points.append(SweepPoint(x, est.total_cycles, secs))
    return points


def sweep_to_csv(points: list[SweepPoint], axis: str) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([axis, "cycles", "seconds"])
    for p in points:
        writer.writerow([p.value, p.cycles, "" if p.seconds is None else repr(p.seconds)])
    return buf.getvalue()


# -- device presets ----------------------------------------------------------


@dataclass(frozen=True)
class DevicePreset:
    key: str
    name: str
    max_bram_banks: int
    clock_frequency_by_m: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.max_bram_banks < 1:
            raise ValueError("max_bram_banks must be positive")
        if any(f <= 0 for f in self.clock_frequency_by_m.values()):
            raise ValueError("clock frequencies must be positive")

    def check_banks(self, m: int) -> bool:
        """Warn (but allow) bank counts above what the device offers."""
        if m > self.max_bram_banks:
            warnings.warn(f"{self.name}: m={m} exceeds the {self.max_bram_banks} available banks", stacklevel=2)
            return False
        return True

    def processing_time(self, n: int, m: int, l: int, f_overhead: int = DEFAULT_OVERHEAD) -> float:
        if m not in self.clock_frequency_by_m:
            raise KeyError(f"{self.name} has no clock figure for m={m}")
        self.check_banks(m)
        return estimate_time(estimate_cycles(n, m, l, f_overhead), self.clock_frequency_by_m[m])


def load_presets(path: str | Path | None = None) -> dict[str, DevicePreset]:
    """Read device presets from an INI file (the bundled one by default).

    Each device has a ``[key]`` section with ``name`` and ``max_bram_banks``
    and a ``[key.fmax_mhz]`` section mapping bank count to clock frequency.
    """
    parser = configparser.ConfigParser()
    if path is None:
        parser.read_string(resources.files("trendbreak.data").joinpath("devices.ini").read_text())
    else:
        with open(path) as fh:
            parser.read_file(fh)
    presets = {}
    for section in parser.sections():
        if "." in section:
            continue
        body = parser[section]
        freqs_section = f"{section}.fmax_mhz"
        freqs = {}
        if parser.has_section(freqs_section):
            freqs = {int(k): float(v) for k, v in parser[freqs_section].items()}
        presets[section] = DevicePreset(section, body.get("name", section), body.getint("max_bram_banks"), freqs)
    return presets
