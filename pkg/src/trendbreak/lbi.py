"""Linearized Bregman iterations for level-shift detection.

One iteration uses a single row ``k`` of the step dictionary, cycling
``k = ((i - 1) mod N) + 1``::

    e    = y[k] - (beta[1] + ... + beta[k])
    d    = (1/k) * e
    v[j] += d,  beta[j] = shrink(v[j], lam)      for j = 1..k

Entries past ``k`` are left alone. The solver runs in double precision or on
raw fixed-point integers (bit-true golden model for the hardware simulator).
In the fixed domain the beta sum is formed exactly and fitted into the word
format once, when the error ``e`` is produced.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from numba import njit

from .fixed import (
    DEFAULT_FORMAT,
    FixedFormat,
    dequantize_array,
    quantize,
    quantize_array,
    raw_fit,
    raw_shift_round,
    raw_shrink,
    reciprocal_table,
)
from .signal import Signal, scale_signal

__all__ = [
    "SolverConfig",
    "CoefficientState",
    "BreakReport",
    "shrink",
    "initial_state",
    "iterate_once",
    "iterate",
    "solve",
    "extract_support",
    "ols_debias",
    "build_report",
    "detect",
]

DOMAINS = ("double", "fixed")


@dataclass(frozen=True)
class SolverConfig:
    """``lam`` is mandatory; give exactly one of the two iteration budgets."""

    lam: float
    total_iterations: int | None = None
    iterations_per_sample: int | None = None
    domain: str = "double"
    fmt: FixedFormat = DEFAULT_FORMAT

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if (self.total_iterations is None) == (self.iterations_per_sample is None):
            raise ValueError("give exactly one of total_iterations or iterations_per_sample")
        budget = self.total_iterations if self.total_iterations is not None else self.iterations_per_sample
        if budget < 1:
            raise ValueError("the iteration budget must be >= 1")
        if self.domain not in DOMAINS:
            raise ValueError(f"domain must be one of {DOMAINS}")
        if self.domain == "fixed":
            self.fmt.check_kernel_width()

    def iterations(self, n: int) -> int:
        if self.total_iterations is not None:
            return self.total_iterations
        return self.iterations_per_sample * n

    def lam_raw(self) -> int:
        return quantize(self.lam, self.fmt).raw


@dataclass
class CoefficientState:
    """Iterate pair plus counters.

    ``i`` is the 1-based index of the next iteration and ``k`` the row it
    will use. In the fixed domain ``beta`` and ``v`` hold int64 raws.
    """

    beta: np.ndarray
    v: np.ndarray
    i: int = 1
    k: int = 1
    domain: str = "double"
    fmt: FixedFormat = DEFAULT_FORMAT
    saturation_events: int = 0
    max_abs_sum: float = 0.0

    @property
    def n(self) -> int:
        return self.beta.size

    @property
    def iterations_done(self) -> int:
        return self.i - 1

    def beta_values(self) -> np.ndarray:
        if self.domain == "fixed":
            return dequantize_array(self.beta, self.fmt)
        return self.beta.copy()

    def v_values(self) -> np.ndarray:
        if self.domain == "fixed":
            return dequantize_array(self.v, self.fmt)
        return self.v.copy()

    def copy(self) -> "CoefficientState":
        return replace(self, beta=self.beta.copy(), v=self.v.copy())


@dataclass
class BreakReport:
    support: list[int]
    magnitudes: list[float]
    beta_raw: np.ndarray
    scale_factor: float = 1.0
    iterations: int | None = None
    lam: float | None = None
    domain: str | None = None
    saturation_events: int = 0
    debiased: bool = True

    def dense(self, n: int | None = None) -> np.ndarray:
        """De-scaled estimate on the full index range (zero off-support)."""
        n = self.beta_raw.size if n is None else n
        est = np.zeros(n)
        for idx, mag in zip(self.support, self.magnitudes):
            est[idx - 1] = mag
        return est

    def to_dict(self) -> dict:
        return {
            "support": list(self.support),
            "magnitudes": [float(m) for m in self.magnitudes],
            "scale_factor": float(self.scale_factor),
            "iterations": self.iterations,
            "lambda": self.lam,
            "domain": self.domain,
            "saturation_events": int(self.saturation_events),
            "debiased": self.debiased,
        }


def shrink(v, lam):
    """Soft threshold ``max(|v| - lam, 0) * sign(v)``; works on arrays too."""
    if np.any(np.asarray(lam) < 0):
        raise ValueError("lam must be nonnegative")
    return np.sign(v) * np.maximum(np.abs(v) - lam, 0.0)


# -- kernels -----------------------------------------------------------------


@njit(cache=True)
def _run_double(y, beta, v, lam, i0, n_iter, max_abs):
    n = y.shape[0]
    for it in range(n_iter):
        k = (i0 - 1 + it) % n + 1
        s = 0.0
        for j in range(k):
            s += beta[j]
        if abs(s) > max_abs:
            max_abs = abs(s)
        mu = 1.0 / k
        d = mu * (y[k - 1] - s)
        for j in range(k):
            vj = v[j] + d
            v[j] = vj
            mag = abs(vj) - lam
            if mag > 0.0:
                beta[j] = mag if vj > 0.0 else -mag
            else:
                beta[j] = 0.0
    return max_abs


@njit(cache=True)
def _run_fixed(y, beta, v, lam, recip, i0, n_iter, lo, hi, frac, rounding, wrap, max_abs):
    n = y.shape[0]
    events = 0
    for it in range(n_iter):
        k = (i0 - 1 + it) % n + 1
        s = np.int64(0)
        for j in range(k):
            s += beta[j]
        if abs(s) > max_abs:
            max_abs = abs(s)
        e, hit = raw_fit(y[k - 1] - s, lo, hi, wrap)
        events += hit
        d, hit = raw_fit(raw_shift_round(recip[k - 1] * e, frac, rounding), lo, hi, wrap)
        events += hit
        for j in range(k):
            vj, hit = raw_fit(v[j] + d, lo, hi, wrap)
            events += hit
            v[j] = vj
            beta[j] = raw_shrink(vj, lam)
    return events, max_abs


# -- public API --------------------------------------------------------------


def _prepare_y(y: Signal | Sequence[float], cfg: SolverConfig) -> np.ndarray:
    samples = y.samples if isinstance(y, Signal) else np.asarray(y, dtype=np.float64)
    if cfg.domain == "fixed":
        return quantize_array(samples, cfg.fmt)
    return np.ascontiguousarray(samples, dtype=np.float64)


def initial_state(n: int, cfg: SolverConfig, beta_start=None, v_start=None) -> CoefficientState:
    """Starting state; starts are real values (quantized in the fixed domain)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    vecs = []
    for start in (beta_start, v_start):
        arr = np.zeros(n) if start is None else np.asarray(start, dtype=np.float64)
        if arr.shape != (n,):
            raise ValueError(f"start vectors must have length {n}")
        vecs.append(quantize_array(arr, cfg.fmt) if cfg.domain == "fixed" else arr.copy())
    return CoefficientState(vecs[0], vecs[1], domain=cfg.domain, fmt=cfg.fmt)


def _advance(state: CoefficientState, y_arr: np.ndarray, cfg: SolverConfig, n_iter: int) -> None:
    n = state.n
    if y_arr.shape != (n,):
        raise ValueError(f"signal has length {y_arr.size}, state has n={n}")
    if state.domain != cfg.domain or (cfg.domain == "fixed" and state.fmt != cfg.fmt):
        raise ValueError("state and config disagree on the scalar domain")
    if cfg.domain == "double":
        state.max_abs_sum = _run_double(y_arr, state.beta, state.v, float(cfg.lam), state.i, n_iter, state.max_abs_sum)
    else:
        fmt = cfg.fmt
        events, max_raw = _run_fixed(
            y_arr, state.beta, state.v, np.int64(cfg.lam_raw()), reciprocal_table(n, fmt),
            state.i, n_iter, fmt.raw_min, fmt.raw_max, fmt.fraction_bits,
            fmt.rounding_code, fmt.wraps, np.int64(round(state.max_abs_sum / fmt.resolution)),
        )
        state.saturation_events += int(events)
        state.max_abs_sum = float(max_raw) * fmt.resolution
    state.i += n_iter
    state.k = (state.i - 1) % n + 1


def iterate_once(state: CoefficientState, y: Signal, cfg: SolverConfig) -> CoefficientState:
    """One iteration on a copy of ``state``."""
    new = state.copy()
    _advance(new, _prepare_y(y, cfg), cfg, 1)
    return new


def iterate(state: CoefficientState, y: Signal, cfg: SolverConfig, n_iter: int) -> CoefficientState:
    """``n_iter`` iterations on a copy of ``state``."""
    if n_iter < 0:
        raise ValueError("n_iter must be >= 0")
    new = state.copy()
    if n_iter:
        _advance(new, _prepare_y(y, cfg), cfg, n_iter)
    return new


def solve(y: Signal, cfg: SolverConfig, beta_start=None, v_start=None) -> CoefficientState:
    """Run the full iteration budget (exactly ``L`` iterations)."""
    state = initial_state(y.n, cfg, beta_start, v_start)
    _advance(state, _prepare_y(y, cfg), cfg, cfg.iterations(y.n))
    return state


def extract_support(state: CoefficientState, threshold: float = 0.0, relative: bool = False) -> list[int]:
    """1-based indices with ``|beta| > threshold``.

    With ``relative=True`` the threshold is a fraction of ``max |beta|``.
    """
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    mags = np.abs(state.beta_values())
    if relative:
        threshold = threshold * (mags.max() if mags.size else 0.0)
    return (np.flatnonzero(mags > threshold) + 1).tolist()


def ols_debias(y: Signal, support: Sequence[int], beta_raw=None) -> BreakReport:
    """Least-squares refit of ``y`` on the step columns in ``support``.

    The step columns factor as ``P @ U`` with ``P`` the (mutually orthogonal)
    segment indicators between consecutive breaks and ``U`` upper-triangular
    ones, so the thin QR factorization is known in closed form: the fitted
    level of each segment is its sample mean and the coefficients are the
    level increments. Magnitudes are returned in the units of the unscaled
    data.
    """
    support = [int(s) for s in support]
    if not support:
        raise ValueError("OLS needs a non-empty support")
    if len(set(support)) != len(support):
        raise ValueError("support has duplicate indices (rank-deficient design)")
    if min(support) < 1 or max(support) > y.n:
        raise ValueError(f"support indices must lie in [1, {y.n}]")
    support = sorted(support)
    edges = [s - 1 for s in support] + [y.n]
    levels = np.array([y.samples[a:b].mean() for a, b in zip(edges[:-1], edges[1:])])
    coef = np.diff(levels, prepend=0.0)
    beta_raw = np.zeros(y.n) if beta_raw is None else np.asarray(beta_raw, dtype=np.float64)
    return BreakReport(support, (coef * y.scale_factor).tolist(), beta_raw, y.scale_factor)


def build_report(
    y: Signal,
    state: CoefficientState,
    cfg: SolverConfig,
    support: Sequence[int],
    ols: bool = True,
    prune: float = 0.0,
) -> BreakReport:
    """Report for a finished run.

    With OLS, refit magnitudes at or below ``prune`` (in scaled units) are
    dropped and the remaining support is refit. Without OLS the shrunk LBI
    values are reported.
    """
    beta = state.beta_values()
    support = list(support)
    if ols and support:
        report = ols_debias(y, support, beta)
        while prune > 0 and report.support:
            keep = [s for s, m in zip(report.support, report.magnitudes) if abs(m) > prune * y.scale_factor]
            if len(keep) == len(report.support):
                break
            report = ols_debias(y, keep, beta) if keep else BreakReport([], [], beta, y.scale_factor)
    else:
        mags = beta[np.asarray(support, dtype=int) - 1] * y.scale_factor
        report = BreakReport(support, mags.tolist(), beta, y.scale_factor, debiased=False)
    report.iterations = state.iterations_done
    report.lam = cfg.lam
    report.domain = cfg.domain
    report.saturation_events = state.saturation_events
    return report


def detect(
    y: Signal,
    cfg: SolverConfig,
    scale: bool = True,
    ols: bool = True,
    threshold: float = 0.0,
    relative_threshold: bool = False,
    prune: float = 0.0,
) -> BreakReport:
    """Scale, solve, extract the support and (optionally) refit by OLS."""
    yy = scale_signal(y) if scale else y
    state = solve(yy, cfg)
    return build_report(yy, state, cfg, extract_support(state, threshold, relative_threshold), ols, prune)
