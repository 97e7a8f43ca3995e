"""Paired fixed-vs-double accuracy study over random testbenches.

Each trial draws one profile and runs both scalar domains on the same
scaled signal. Iteration budgets are visited in increasing order on a single
solver run per domain, which gives the same state as independent runs.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .fixed import DEFAULT_FORMAT, FixedFormat
from .lbi import SolverConfig, extract_support, initial_state, iterate, ols_debias
from .signal import generate_testbench, scale_signal, squared_error

ESTIMATORS = ("ols", "lbi")


@dataclass(frozen=True)
class AccuracySetup:
    n: int = 500
    trials: int = 50
    iterations_per_sample: tuple[int, ...] = (50, 150, 300, 450, 650)
    noise_sigma: float = 0.05
    magnitude_range: tuple[float, float] = (0.5, 1.5)
    num_breaks: int = 10
    lam: float = 1.0
    seed: int = 0
    fmt: FixedFormat = DEFAULT_FORMAT

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.iterations_per_sample or min(self.iterations_per_sample) < 1:
            raise ValueError("iterations_per_sample needs positive entries")
        object.__setattr__(self, "iterations_per_sample", tuple(sorted(set(self.iterations_per_sample))))

    def trial_seeds(self) -> list[int]:
        return np.random.SeedSequence(self.seed).generate_state(self.trials).tolist()


@dataclass
class TrialResult:
    seed: int
    # errors[(domain, ips, estimator)] -> squared error norm
    errors: dict = field(default_factory=dict)
    saturation_events: int = 0
    max_abs_sum: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AccuracyCell:
    domain: str
    iterations_per_sample: int
    estimator: str
    mean: float
    std: float
    trials: int


def run_trial(setup: AccuracySetup, seed: int) -> TrialResult:
    profile, y = generate_testbench(setup.n, setup.num_breaks, setup.magnitude_range, setup.noise_sigma, seed)
    ys = scale_signal(y)
    result = TrialResult(seed)
    for domain in ("double", "fixed"):
        cfg = SolverConfig(setup.lam, total_iterations=1, domain=domain, fmt=setup.fmt)
        state = initial_state(setup.n, cfg)
        for ips in setup.iterations_per_sample:
            state = iterate(state, ys, cfg, ips * setup.n - state.iterations_done)
            raw = state.beta_values() * ys.scale_factor
            support = extract_support(state)
            refit = ols_debias(ys, support).dense(setup.n) if support else np.zeros(setup.n)
            result.errors[(domain, ips, "lbi")] = squared_error(raw, profile).squared_error_norm
            result.errors[(domain, ips, "ols")] = squared_error(refit, profile).squared_error_norm
        result.max_abs_sum[domain] = state.max_abs_sum
        if domain == "fixed":
            result.saturation_events = state.saturation_events
    return result


def _run_trial_args(args):
    return run_trial(*args)


def run_trials(setup: AccuracySetup, workers: int = 1) -> list[TrialResult]:
    jobs = [(setup, s) for s in setup.trial_seeds()]
    if workers <= 1:
        return [run_trial(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_trial_args, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def summarize(setup: AccuracySetup, trials: list[TrialResult]) -> list[AccuracyCell]:
    cells = []
    for estimator in ESTIMATORS:
        for domain in ("double", "fixed"):
            for ips in setup.iterations_per_sample:
                errs = np.array([t.errors[(domain, ips, estimator)] for t in trials])
                std = float(errs.std(ddof=1)) if errs.size > 1 else 0.0
                cells.append(AccuracyCell(domain, ips, estimator, float(errs.mean()), std, errs.size))
    return cells


def cell(cells: list[AccuracyCell], domain: str, ips: int, estimator: str = "ols") -> AccuracyCell:
    for c in cells:
        if (c.domain, c.iterations_per_sample, c.estimator) == (domain, ips, estimator):
            return c
    raise KeyError((domain, ips, estimator))


def cells_to_csv(cells: list[AccuracyCell]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["estimator", "domain", "iterations_per_sample", "mean_squared_error", "std_squared_error", "trials"])
    for c in cells:
        writer.writerow([c.estimator, c.domain, c.iterations_per_sample, repr(c.mean), repr(c.std), c.trials])
    return buf.getvalue()
