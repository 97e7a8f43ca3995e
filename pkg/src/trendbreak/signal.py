"""Measurement series, step-candidate dictionary and synthetic testbenches.

The dictionary ``A`` is the N x N lower-triangular matrix of ones: column
``j`` is a unit level shift starting at sample ``j``. It is never stored;
``A @ beta`` is the prefix sum of ``beta``.

Indices are 1-based at every public boundary (profiles, reports, files).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "Signal",
    "BreakProfile",
    "EstimationError",
    "candidate_matvec",
    "candidate_matrix",
    "synthesize_profile",
    "generate_testbench",
    "scale_signal",
    "squared_error",
    "read_signal_csv",
    "write_signal_csv",
]


@dataclass(frozen=True)
class Signal:
    samples: np.ndarray
    scale_factor: float = 1.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size < 1:
            raise ValueError("a signal needs a 1-d array of at least one sample")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def n(self) -> int:
        return self.samples.size

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other) -> bool:
        if not isinstance(other, Signal):
            return NotImplemented
        return self.scale_factor == other.scale_factor and np.array_equal(self.samples, other.samples)

    __hash__ = None

    def descaled(self) -> np.ndarray:
        return self.samples * self.scale_factor

    def to_dict(self) -> dict:
        return {"n": self.n, "scale_factor": self.scale_factor, "samples": self.samples.tolist()}

    @classmethod
    def from_dict(cls, record: Mapping) -> "Signal":
        sig = cls(np.asarray(record["samples"], dtype=np.float64), float(record.get("scale_factor", 1.0)))
        if "n" in record and int(record["n"]) != sig.n:
            raise ValueError(f"record says n={record['n']} but holds {sig.n} samples")
        return sig


@dataclass(frozen=True)
class BreakProfile:
    """Sparse level-shift profile; ``breaks`` maps 1-based index to magnitude."""

    n: int
    breaks: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        clean = {}
        for idx, mag in self.breaks.items():
            idx = int(idx)
            if not 1 <= idx <= self.n:
                raise ValueError(f"break index {idx} outside [1, {self.n}]")
            if idx in clean:
                raise ValueError(f"duplicate break index {idx}")
            clean[idx] = float(mag)
        object.__setattr__(self, "breaks", dict(sorted(clean.items())))

    @property
    def support(self) -> list[int]:
        return [i for i, mag in self.breaks.items() if mag != 0.0]

    def dense(self) -> np.ndarray:
        beta = np.zeros(self.n)
        for idx, mag in self.breaks.items():
            beta[idx - 1] = mag
        return beta

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "breaks": [{"index": i, "magnitude": m} for i, m in self.breaks.items()],
        }

    @classmethod
    def from_dict(cls, record: Mapping) -> "BreakProfile":
        return cls(int(record["n"]), {int(b["index"]): float(b["magnitude"]) for b in record["breaks"]})


@dataclass(frozen=True)
class EstimationError:
    squared_error_norm: float

    def __float__(self) -> float:
        return self.squared_error_norm


def candidate_matvec(beta: Sequence[float]) -> np.ndarray:
    """``A @ beta`` without forming ``A``: the running sum of ``beta``."""
    beta = np.asarray(beta)
    if beta.ndim != 1 or beta.size == 0:
        raise ValueError("beta must be a non-empty 1-d sequence")
    return np.cumsum(beta)


def candidate_matrix(n: int, columns: Sequence[int] | None = None) -> np.ndarray:
    """Dense ``A`` (or the listed 1-based columns of it). Meant for small n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rows = np.arange(1, n + 1)[:, None]
    cols = np.arange(1, n + 1) if columns is None else np.asarray(columns, dtype=int)
    return (rows >= cols[None, :]).astype(np.float64)


def synthesize_profile(profile: BreakProfile, noise_sigma: float, seed: int | np.random.SeedSequence) -> Signal:
    """Noisy measurement of a break profile: ``A @ beta_ideal`` plus white noise."""
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be nonnegative")
    clean = candidate_matvec(profile.dense())
    if noise_sigma == 0:
        return Signal(clean)
    rng = np.random.default_rng(seed)
    return Signal(clean + rng.normal(0.0, noise_sigma, size=profile.n))


def generate_testbench(
    n: int,
    num_breaks: int,
    magnitude_range: tuple[float, float] = (0.5, 1.5),
    noise_sigma: float = 0.05,
    seed: int = 0,
) -> tuple[BreakProfile, Signal]:
    """Random sparse profile plus its noisy measurement.

    Break positions are uniform without replacement over ``[1, n]``;
    magnitudes are uniform over ``magnitude_range`` with a random sign.
    """
    if not 0 <= num_breaks <= n:
        raise ValueError(f"num_breaks must lie in [0, n={n}], got {num_breaks}")
    lo, hi = magnitude_range
    if not 0 <= lo <= hi:
        raise ValueError("magnitude_range must satisfy 0 <= low <= high")
    profile_seed, noise_seed = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.default_rng(profile_seed)
    positions = rng.choice(n, size=num_breaks, replace=False) + 1
    magnitudes = rng.uniform(lo, hi, size=num_breaks) * rng.choice([-1.0, 1.0], size=num_breaks)
    profile = BreakProfile(n, dict(zip(positions.tolist(), magnitudes.tolist())))
    return profile, synthesize_profile(profile, noise_sigma, noise_seed)


def scale_signal(y: Signal) -> Signal:
    """Divide by the largest absolute sample so that ``max |y| == 1``."""
    peak = float(np.max(np.abs(y.samples)))
    if peak == 0.0:
        raise ValueError("cannot scale an all-zero signal")
    return Signal(y.samples / peak, y.scale_factor * peak)


def squared_error(est: Sequence[float], ideal: BreakProfile) -> EstimationError:
    est = np.asarray(est, dtype=np.float64)
    if est.shape != (ideal.n,):
        raise ValueError(f"estimate has length {est.size}, profile has n={ideal.n}")
    diff = est - ideal.dense()
    return EstimationError(float(diff @ diff))


# -- files -------------------------------------------------------------------


def read_signal_csv(path: str | Path) -> Signal:
    """One sample per row (first column); a non-numeric first row is a header."""
    values = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh)):
            if not row or not row[0].strip():
                continue
            try:
                values.append(float(row[0]))
            except ValueError:
                if lineno == 0 and not values:
                    continue
                raise ValueError(f"{path}:{lineno + 1}: not a number: {row[0]!r}") from None
    if not values:
        raise ValueError(f"{path}: no samples")
    return Signal(np.array(values))


def write_signal_csv(signal: Signal, path: str | Path, header: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write("y\n")
        for value in signal.samples:
            fh.write(f"{float(value)!r}\n")


def write_json(record: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


def read_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
