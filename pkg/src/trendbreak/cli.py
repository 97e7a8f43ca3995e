"""Batch front end: ``trendbreak <command> [options]``.

Commands: ``detect``, ``simulate-hw``, ``gen-profile``, ``sweep-cycles`` and
``experiment-accuracy``. Each writes its results plus a
``<command>.manifest.json`` into the output directory (``--out-dir``, else
``$TRENDBREAK_OUTPUT_DIR``, else the working directory).

Exit codes: 0 success, 2 bad input, 3 internal consistency failure.
"""

from __future__ import annotations

import argparse
import configparser
import datetime as _dt
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .cycles import estimate_cycles, load_presets, sweep, sweep_to_csv
from .experiment import AccuracySetup, cell, cells_to_csv, run_trials, summarize
from .fixed import FixedFormat, quantize_array
from .hwsim import HwConfig, LbiAccelerator, golden_vectors
from .lbi import SolverConfig, build_report, detect, extract_support, initial_state, iterate_once, solve
from .signal import Signal, generate_testbench, read_signal_csv, scale_signal, write_signal_csv

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INTERNAL = 3
OUTPUT_ENV = "TRENDBREAK_OUTPUT_DIR"
FULL_SCALE_TRIALS = 15000


class InputError(Exception):
    pass


class BitMismatch(Exception):
    def __init__(self, diagnostic: dict):
        super().__init__(f"simulator diverged from the golden model at iteration {diagnostic['iteration']}")
        self.diagnostic = diagnostic


@dataclass
class RunManifest:
    command: str
    parameters: dict
    seed: int | None
    version: str = __version__
    started: str = ""
    finished: str = ""
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "parameters": self.parameters,
            "seed": self.seed,
            "version": self.version,
            "started": self.started,
            "finished": self.finished,
            "inputs": self.inputs,
            "outputs": self.outputs,
        }


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class _Writer:
    """Every output file of a command goes through here."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        out_dir.mkdir(parents=True, exist_ok=True)
        self.files: dict[str, str] = {}

    def text(self, name: str, content: str) -> Path:
        path = self.out_dir / name
        path.write_text(content)
        self.files[name] = _digest(path)
        return path

    def json(self, name: str, record) -> Path:
        return self.text(name, json.dumps(record, indent=2, sort_keys=True) + "\n")


def _format(args) -> FixedFormat:
    try:
        return FixedFormat.parse(args.format, rounding=args.rounding, overflow=args.overflow)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _solver_config(args, domain: str | None = None) -> SolverConfig:
    if args.iterations is not None and args.iterations_per_sample is not None:
        raise InputError("give either --iterations or --iterations-per-sample")
    ips = args.iterations_per_sample
    if args.iterations is None and ips is None:
        ips = 650
    return SolverConfig(
        args.lam,
        total_iterations=args.iterations,
        iterations_per_sample=ips,
        domain=domain or args.domain,
        fmt=_format(args),
    )


def _read_input(path: str) -> Signal:
    try:
        if path.endswith(".json"):
            return Signal.from_dict(json.loads(Path(path).read_text()))
        return read_signal_csv(path)
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from None


# -- commands ------------------------------------------------------------------


def cmd_detect(args, writer: _Writer, manifest: RunManifest) -> None:
    y = _read_input(args.input)
    manifest.inputs[args.input] = _digest(Path(args.input))
    cfg = _solver_config(args)
    try:
        report = detect(y, cfg, scale=not args.no_scale, ols=args.ols, threshold=args.threshold,
                        relative_threshold=args.relative_threshold, prune=args.prune)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    writer.json(args.output, report.to_dict())


def _first_divergence(y_raw: np.ndarray, hw: HwConfig, cfg: SolverConfig, iterations: int, sim_cls=None) -> dict:
    sim = (sim_cls or LbiAccelerator)(hw, cfg.lam)
    sim.load_memory(y_raw)
    y = Signal(y_raw * cfg.fmt.resolution)
    state = initial_state(hw.n, cfg)
    for it in range(1, iterations + 1):
        sim.run_iteration()
        state = iterate_once(state, y, cfg)
        beta, v = sim.read_back("beta"), sim.read_back("v")
        if not (np.array_equal(beta, state.beta) and np.array_equal(v, state.v)):
            bad = int(np.flatnonzero((beta != state.beta) | (v != state.v))[0])
            return {
                "iteration": it,
                "k": (it - 1) % hw.n + 1,
                "first_index": bad + 1,
                "simulator": golden_vectors(beta, v, cfg.fmt),
                "golden": golden_vectors(state.beta, state.v, cfg.fmt),
            }
    return {"iteration": None}


def simulate_hw(y: Signal, m: int, cfg: SolverConfig, sim_cls=None):
    """Run simulator and golden model on the same raws; raise on mismatch."""
    sim_cls = sim_cls or LbiAccelerator
    n = y.n
    iterations = cfg.iterations(n)
    hw = HwConfig(m=m, n=n, word_format=cfg.fmt)
    y_raw = quantize_array(y.samples, cfg.fmt)
    sim = sim_cls(hw, cfg.lam)
    sim.load_memory(y_raw)
    beta_hw, trace = sim.run(iterations)
    golden = solve(y, cfg)
    if not (np.array_equal(beta_hw, golden.beta) and np.array_equal(sim.read_back("v"), golden.v)):
        raise BitMismatch(_first_divergence(y_raw, hw, cfg, iterations, sim_cls))
    return sim, golden, trace


def cmd_simulate_hw(args, writer: _Writer, manifest: RunManifest) -> None:
    if args.input:
        y = _read_input(args.input)
        manifest.inputs[args.input] = _digest(Path(args.input))
    else:
        try:
            _, y = generate_testbench(args.n, args.breaks, (args.mag_low, args.mag_high), args.sigma, args.seed)
        except ValueError as exc:
            raise InputError(str(exc)) from None
    if not args.no_scale:
        try:
            y = scale_signal(y)
        except ValueError as exc:
            raise InputError(str(exc)) from None
    cfg = _solver_config(args, domain="fixed")
    sim, golden, trace = simulate_hw(y, args.m, cfg)
    predicted = estimate_cycles(y.n, args.m, cfg.iterations(y.n)).total_cycles
    report = build_report(y, golden, cfg, extract_support(golden, args.threshold), args.ols, args.prune)
    record = report.to_dict()
    record["cycles"] = {"simulated": trace.total_cycles, "predicted": predicted,
                        "match": trace.total_cycles == predicted}
    record["bit_equal"] = True
    record["m"] = args.m
    writer.json("report.json", record)
    writer.text("trace.csv", trace.to_csv())
    writer.json("trace_summary.json", trace.summary())
    writer.json("golden.json", golden_vectors(golden.beta, golden.v, cfg.fmt))


def cmd_gen_profile(args, writer: _Writer, manifest: RunManifest) -> None:
    try:
        profile, y = generate_testbench(args.n, args.breaks, (args.mag_low, args.mag_high), args.sigma, args.seed)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    writer.json("profile.json", profile.to_dict())
    writer.json("signal.json", y.to_dict())
    path = writer.out_dir / "signal.csv"
    write_signal_csv(y, path)
    writer.files["signal.csv"] = _digest(path)


def cmd_sweep_cycles(args, writer: _Writer, manifest: RunManifest) -> None:
    if args.values:
        values = args.values
    else:
        values = list(range(args.start, args.stop + 1, args.step))
    clock = args.clock_mhz
    if args.device:
        presets = load_presets(args.presets)
        if args.device not in presets:
            raise InputError(f"unknown device {args.device!r}; known: {sorted(presets)}")
        if clock is None and args.axis == "n" and args.m in presets[args.device].clock_frequency_by_m:
            clock = presets[args.device].clock_frequency_by_m[args.m]
    try:
        points = sweep(args.axis, values, n=args.n, m=args.m, iterations_per_sample=args.iterations_per_sample,
                       f_overhead=args.overhead, clock_mhz=clock)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    writer.text(args.output, sweep_to_csv(points, args.axis))


def cmd_experiment_accuracy(args, writer: _Writer, manifest: RunManifest) -> None:
    trials = FULL_SCALE_TRIALS if args.full else args.trials
    try:
        setup = AccuracySetup(
            n=args.n, trials=trials, iterations_per_sample=tuple(args.iterations_per_sample),
            noise_sigma=args.sigma, magnitude_range=(args.mag_low, args.mag_high), num_breaks=args.breaks,
            lam=args.lam, seed=args.seed, fmt=_format(args),
        )
    except ValueError as exc:
        raise InputError(str(exc)) from None
    results = run_trials(setup, workers=args.workers)
    cells = summarize(setup, results)
    writer.text(args.output, cells_to_csv(cells))
    ips = setup.iterations_per_sample
    writer.json("accuracy_summary.json", {
        "saturation_events": sum(t.saturation_events for t in results),
        "max_abs_beta_sum": max(max(t.max_abs_sum.values()) for t in results),
        "relative_domain_gap": {
            str(i): abs(cell(cells, "fixed", i).mean - cell(cells, "double", i).mean) / cell(cells, "double", i).mean
            for i in ips if cell(cells, "double", i).mean > 0
        },
    })


# -- parser --------------------------------------------------------------------


def _add_solver_options(p: argparse.ArgumentParser, domain: bool = True) -> None:
    p.add_argument("--lam", type=float, required=True, help="l1 weight (on scaled data)")
    p.add_argument("--iterations", type=int, default=None, help="total iteration count L")
    p.add_argument("--iterations-per-sample", type=int, default=None, help="L / N (default 650)")
    if domain:
        p.add_argument("--domain", choices=("double", "fixed"), default="double")
    _add_format_options(p)


def _add_format_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", default="s4.16", help="fixed-point format sI.F")
    p.add_argument("--rounding", choices=("nearest", "truncate"), default="nearest")
    p.add_argument("--overflow", choices=("saturate", "wrap"), default="saturate")


def _add_testbench_options(p: argparse.ArgumentParser, n: int) -> None:
    p.add_argument("--n", type=int, default=n)
    p.add_argument("--breaks", type=int, default=10)
    p.add_argument("--mag-low", type=float, default=0.5)
    p.add_argument("--mag-high", type=float, default=1.5)
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trendbreak", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="INI file; [<command>] sections override defaults")
    parser.add_argument("--out-dir", default=None, help=f"output directory (default ${OUTPUT_ENV} or .)")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", default=argparse.SUPPRESS, help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", parents=[common], help="find level shifts in a CSV/JSON signal")
    p.add_argument("input")
    _add_solver_options(p)
    p.add_argument("--no-scale", action="store_true")
    p.add_argument("--ols", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--threshold", type=float, default=0.0)
    p.add_argument("--prune", type=float, default=1e-9,
                   help="drop OLS magnitudes at or below this fraction of max |y|, then refit")
    p.add_argument("--relative-threshold", action="store_true")
    p.add_argument("--output", default="report.json")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("simulate-hw", parents=[common], help="cycle-accurate accelerator run checked against the golden model")
    p.add_argument("input", nargs="?", default=None)
    p.add_argument("--m", type=int, required=True, help="number of BRAM banks")
    _add_solver_options(p, domain=False)
    _add_testbench_options(p, n=100)
    p.add_argument("--no-scale", action="store_true")
    p.add_argument("--ols", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--threshold", type=float, default=0.0)
    p.add_argument("--prune", type=float, default=1e-9,
                   help="drop OLS magnitudes at or below this fraction of max |y|, then refit")
    p.set_defaults(func=cmd_simulate_hw)

    p = sub.add_parser("gen-profile", parents=[common], help="write a random testbench profile and signal")
    _add_testbench_options(p, n=500)
    p.set_defaults(func=cmd_gen_profile)

    p = sub.add_parser("sweep-cycles", parents=[common], help="cycle estimates along m or n")
    p.add_argument("--axis", choices=("m", "n"), required=True)
    p.add_argument("--values", type=int, nargs="+", default=None)
    p.add_argument("--start", type=int, default=1)
    p.add_argument("--stop", type=int, default=2048)
    p.add_argument("--step", type=int, default=1)
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--m", type=int, default=2000)
    p.add_argument("--iterations-per-sample", type=int, default=650)
    p.add_argument("--overhead", type=int, default=21)
    p.add_argument("--clock-mhz", type=float, default=None)
    p.add_argument("--device", default=None, help="preset key, e.g. stratix-v")
    p.add_argument("--presets", default=None, help="alternative presets INI file")
    p.add_argument("--output", default="sweep.csv")
    p.set_defaults(func=cmd_sweep_cycles)

    p = sub.add_parser("experiment-accuracy", parents=[common], help="paired fixed-vs-double estimation error study")
    _add_testbench_options(p, n=500)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--full", action="store_true", help=f"{FULL_SCALE_TRIALS} trials")
    p.add_argument("--iterations-per-sample", type=int, nargs="+", default=[50, 150, 300, 450, 650])
    p.add_argument("--lam", type=float, default=1.0)
    _add_format_options(p)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--output", default="accuracy.csv")
    p.set_defaults(func=cmd_experiment_accuracy)
    return parser


def _truthy(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise InputError(f"not a boolean: {text!r}")


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    # a throwaway parser, so that options the config may supply are not yet required
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if not known.config:
        return
    commands = parser._subparsers._group_actions[0].choices
    command = next((token for token in rest if token in commands), None)
    cp = configparser.ConfigParser()
    if not cp.read(known.config):
        raise InputError(f"cannot read config {known.config}")
    if command is None or not cp.has_section(command):
        return
    subparser = commands[command]
    actions = {a.dest: a for a in subparser._actions}
    overrides = {}
    for key, text in cp[command].items():
        dest = key.replace("-", "_")
        action = actions.get(dest)
        if action is None:
            raise InputError(f"config key {key!r} is not an option of {command}")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction, argparse.BooleanOptionalAction)):
            value = _truthy(text)
        else:
            conv = action.type or str
            value = [conv(t) for t in text.replace(",", " ").split()] if action.nargs == "+" else conv(text)
        overrides[dest] = value
        action.required = False
    subparser.set_defaults(**overrides)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:
        return int(exc.code or 0)
    out_dir = Path(args.out_dir or os.environ.get(OUTPUT_ENV) or ".")
    params = {k: v for k, v in vars(args).items() if k not in ("func", "config", "out_dir")}
    manifest = RunManifest(args.command, params, getattr(args, "seed", None), started=_now())
    writer = _Writer(out_dir)
    try:
        args.func(args, writer, manifest)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except BitMismatch as exc:
        path = out_dir / "divergence.json"
        path.write_text(json.dumps(exc.diagnostic, indent=2) + "\n")
        print(f"internal error: {exc}; diagnostic dump in {path}", file=sys.stderr)
        return EXIT_INTERNAL
    manifest.finished = _now()
    manifest.outputs = dict(writer.files)
    (out_dir / f"{args.command}.manifest.json").write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
