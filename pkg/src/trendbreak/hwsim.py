"""Cycle-stepped model of the LBI accelerator datapath.

Memory is ``M`` dual-port block RAMs. Entry ``g`` (1-based) of each vector
sits in bank ``(g - 1) % M + 1`` at row ``(g - 1) // M`` of that vector's
slice; slices for beta, y and v start at ``beta_ap = 0``, ``y_ap = T`` and
``v_ap = 2T`` with ``T = ceil(N / M)``. One address therefore reads a whole
*parallel row* of ``M`` entries.

One iteration on row ``k`` with ``t_hat = ceil(k / M)``:

read phase (``t_hat + ceil(log2 M) + 2`` cycles)
    beta rows ``0..t_hat-1`` stream through port B into the adder tree; the
    last row is masked with a thermometer code. The y row holding ``y[k]``
    is read through port A alongside the last beta row and travels through
    the multiplexer tree with the same latency. An accumulator sums the tree
    outputs, then one cycle subtracts and one multiplies by ``1/k``.

store phase (``2 t_hat + 4`` cycles)
    two handshake cycles hand the address bus to the writer. Then per row:
    port B reads the v row, the adder adds ``d`` (shrink with lam = 0 passes
    it through), port A writes v the next cycle while the shrink output is
    registered, and port A writes beta on the cycle after that. Row ``t+1``
    is read while row ``t``'s v is written, giving two cycles per row plus
    one fill and one drain cycle.

The run starts with ``F`` overhead cycles, during which the reciprocal
pipeline is pre-filled.
"""

from __future__ import annotations

import csv
import io
import json
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .cycles import DEFAULT_OVERHEAD, ceil_log2
from .fixed import DEFAULT_FORMAT, FixedFormat, quantize, quantize_array, reciprocal_q

__all__ = [
    "HwConfig",
    "BramBank",
    "BramArray",
    "PortCollisionError",
    "ParallelAdderTree",
    "PipelinedMuxTree",
    "ReciprocalPipeline",
    "IterationRecord",
    "CycleTrace",
    "LbiAccelerator",
    "thermometer",
    "check_thermometer",
    "locate",
    "pat_reduce",
    "pmt_select",
    "golden_vectors",
]

VECTORS = ("beta", "y", "v")


class PortCollisionError(AssertionError):
    """Illegal use of a BRAM port within one cycle."""


@dataclass(frozen=True)
class HwConfig:
    m: int
    n: int
    word_format: FixedFormat = DEFAULT_FORMAT
    f_overhead: int = DEFAULT_OVERHEAD
    cordic_depth: int = 16
    y_ap: int | None = None
    v_ap: int | None = None

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not 1 <= self.cordic_depth <= self.f_overhead:
            raise ValueError("the reciprocal pipeline must be pre-filled within the F overhead cycles")
        self.word_format.check_kernel_width()
        t = self.t_rows
        if self.y_ap is None:
            object.__setattr__(self, "y_ap", t)
        if self.v_ap is None:
            object.__setattr__(self, "v_ap", 2 * t)
        for ap in (self.y_ap, self.v_ap):
            if ap % t or not t <= ap <= 2 * t:
                raise ValueError("y_ap and v_ap must be T or 2T")
        if self.y_ap == self.v_ap:
            raise ValueError("y_ap and v_ap must differ")

    @property
    def t_rows(self) -> int:
        return -(-self.n // self.m)

    @property
    def beta_ap(self) -> int:
        return 0

    @property
    def bank_depth(self) -> int:
        return 3 * self.t_rows

    @property
    def tree_depth(self) -> int:
        return ceil_log2(self.m)

    def pointer(self, vector: str) -> int:
        return {"beta": self.beta_ap, "y": self.y_ap, "v": self.v_ap}[vector]

    def address(self, vector: str, index: int) -> tuple[int, int]:
        """(1-based bank, absolute address) of ``vector[index]``."""
        if not 1 <= index <= self.n:
            raise IndexError(f"index {index} outside [1, {self.n}]")
        bank, row = locate(index, self.m)
        return bank, self.pointer(vector) + row

    def owner(self, bank: int, address: int) -> tuple[str, int] | None:
        """Inverse of :meth:`address`; ``None`` for padding cells."""
        if not (1 <= bank <= self.m and 0 <= address < self.bank_depth):
            raise IndexError("cell outside the memory")
        t = self.t_rows
        slice_start = (address // t) * t
        vector = {self.beta_ap: "beta", self.y_ap: "y", self.v_ap: "v"}[slice_start]
        index = (address - slice_start) * self.m + bank
        return (vector, index) if index <= self.n else None


def locate(index: int, m: int) -> tuple[int, int]:
    """(1-based bank, 0-based parallel row) of 1-based ``index``."""
    if index < 1:
        raise IndexError("indices are 1-based")
    row, lane = divmod(index - 1, m)
    return lane + 1, row


def thermometer(ones: int, width: int) -> np.ndarray:
    if not 0 <= ones <= width:
        raise ValueError("thermometer code needs 0 <= ones <= width")
    mask = np.zeros(width, dtype=bool)
    mask[:ones] = True
    return mask


def check_thermometer(mask) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    ones = int(mask.sum())
    if not mask[:ones].all():
        raise ValueError(f"mask {mask.astype(int).tolist()} is not a thermometer code")
    return mask


# -- memory ------------------------------------------------------------------


@dataclass
class BramBank:
    """One bank: a view onto a column of the shared storage."""

    index: int
    cells: np.ndarray


class BramArray:
    """``M`` dual-port banks sharing row addresses.

    Port ``"A"`` and port ``"B"`` may each do one access per cycle. Two
    accesses to the same address in one cycle, at least one a write, raise
    :class:`PortCollisionError`.
    """

    def __init__(self, m: int, depth: int):
        self.m = m
        self.depth = depth
        self.cells = np.zeros((depth, m), dtype=np.int64)
        self._ops: dict[str, tuple[str, int]] = {}
        self.reads = 0
        self.writes = 0

    def bank(self, index: int) -> BramBank:
        return BramBank(index, self.cells[:, index - 1])

    @property
    def banks(self) -> list[BramBank]:
        return [self.bank(b) for b in range(1, self.m + 1)]

    def begin_cycle(self) -> None:
        self._ops.clear()

    def _claim(self, port: str, kind: str, address: int) -> None:
        if port not in ("A", "B"):
            raise ValueError("ports are 'A' and 'B'")
        if port in self._ops:
            raise PortCollisionError(f"port {port} accessed twice in one cycle")
        if not 0 <= address < self.depth:
            raise PortCollisionError(f"address {address} outside bank depth {self.depth}")
        for other_kind, other_addr in self._ops.values():
            if other_addr == address and "w" in (kind, other_kind):
                raise PortCollisionError(f"ports collide on address {address}")
        self._ops[port] = (kind, address)

    def read(self, port: str, address: int) -> np.ndarray:
        self._claim(port, "r", address)
        self.reads += 1
        return self.cells[address].copy()

    def write(self, port: str, address: int, values: np.ndarray, enable: np.ndarray | None = None) -> None:
        self._claim(port, "w", address)
        self.writes += 1
        if enable is None:
            self.cells[address] = values
        else:
            self.cells[address, enable] = values[enable]


# -- pipelined trees ---------------------------------------------------------


class ParallelAdderTree:
    """Pairwise adder tree with ``ceil(log2 M)`` register stages.

    Lanes are padded with zeros to a power of two. Adders carry guard bits,
    so the sum is exact. ``clock`` returns what the output register shows
    during the current cycle, then advances the pipeline.
    """

    def __init__(self, m: int):
        self.m = m
        self.depth = ceil_log2(m)
        self.lanes = 1 << self.depth
        self._stages: list[np.ndarray | None] = [None] * self.depth

    def pad(self, values: np.ndarray) -> np.ndarray:
        if values.size == self.lanes:
            return values
        out = np.zeros(self.lanes, dtype=np.int64)
        out[: values.size] = values
        return out

    def clock(self, values: np.ndarray | None) -> int | None:
        if self.depth == 0:
            return None if values is None else int(values[0])
        stages = self._stages
        last = stages[-1]
        out = None if last is None else int(last[0])
        for s in range(self.depth - 1, 0, -1):
            prev = stages[s - 1]
            stages[s] = None if prev is None else prev[0::2] + prev[1::2]
        stages[0] = None if values is None else values[0::2] + values[1::2]
        return out

    @property
    def busy(self) -> bool:
        return any(s is not None for s in self._stages)


class PipelinedMuxTree:
    """Binary selector tree with the same stage count as the adder tree.

    Stage ``s`` keeps, from each lane pair, the element chosen by bit ``s``
    of the lane key, which travels with the data.
    """

    def __init__(self, m: int):
        self.m = m
        self.depth = ceil_log2(m)
        self.lanes = 1 << self.depth
        self._stages: list[tuple[np.ndarray, int] | None] = [None] * self.depth

    @staticmethod
    def _select(values: np.ndarray, key: int, level: int) -> np.ndarray:
        return values[(key >> level) & 1:: 2]

    def clock(self, values: np.ndarray | None, key: int = 0) -> int | None:
        if self.depth == 0:
            return None if values is None else int(values[0])
        stages = self._stages
        last = stages[-1]
        out = None if last is None else int(last[0][0])
        for s in range(self.depth - 1, 0, -1):
            prev = stages[s - 1]
            stages[s] = None if prev is None else (self._select(prev[0], prev[1], s), prev[1])
        stages[0] = None if values is None else (self._select(values, key, 0), key)
        return out


def pat_reduce(row_values, mask) -> tuple[int, int]:
    """Masked sum of one parallel row through a fresh adder tree.

    Returns ``(sum, latency)`` where latency counts the cycles between the
    row entering the tree and the sum appearing at its output.
    """
    values = np.asarray(row_values, dtype=np.int64)
    mask = check_thermometer(mask)
    if mask.size != values.size:
        raise ValueError("mask and row differ in width")
    tree = ParallelAdderTree(values.size)
    out = tree.clock(tree.pad(np.where(mask, values, 0)))
    latency = 0
    while out is None:
        out = tree.clock(None)
        latency += 1
    return out, latency


def pmt_select(y_row_values, k: int, row: int) -> tuple[int, int]:
    """Pick ``y[k]`` out of parallel row ``row``; returns ``(value, latency)``."""
    values = np.asarray(y_row_values, dtype=np.int64)
    m = values.size
    if (k - 1) // m != row or k < 1:
        raise ValueError(f"k={k} is not in parallel row {row} (M={m})")
    tree = PipelinedMuxTree(m)
    padded = np.zeros(tree.lanes, dtype=np.int64)
    padded[:m] = values
    out = tree.clock(padded, (k - 1) % m)
    latency = 0
    while out is None:
        out = tree.clock(None)
        latency += 1
    return out, latency


class ReciprocalPipeline:
    """Shift pipeline delivering exactly rounded ``1/k`` raws.

    Pre-filled with ``depth`` entries before the first iteration; one stage
    propagates per iteration, so the head always matches the current ``k``.
    """

    def __init__(self, n: int, depth: int, fmt: FixedFormat):
        self.n = n
        self.depth = depth
        self.fmt = fmt
        self._stages: deque[tuple[int, int]] = deque()
        self._next_k = 1

    def _push(self) -> None:
        k = self._next_k
        self._stages.append((k, reciprocal_q(k, self.fmt).raw))
        self._next_k = k % self.n + 1

    def prefill_step(self) -> None:
        if len(self._stages) >= self.depth:
            raise RuntimeError("reciprocal pipeline already full")
        self._push()

    @property
    def ready(self) -> bool:
        return len(self._stages) == self.depth

    def head(self) -> tuple[int, int]:
        if not self.ready:
            raise RuntimeError("reciprocal pipeline not pre-filled")
        return self._stages[0]

    def advance(self) -> None:
        self._stages.popleft()
        self._push()


# -- trace -------------------------------------------------------------------


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    k: int
    t_hat: int
    c_read: int
    c_store: int
    c_total: int


@dataclass
class CycleTrace:
    total_cycles: int = 0
    f_consumed: int = 0
    per_iteration: list[IterationRecord] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["iteration", "k", "t_hat", "c_read", "c_store", "c_total"])
        for rec in self.per_iteration:
            writer.writerow([rec.iteration, rec.k, rec.t_hat, rec.c_read, rec.c_store, rec.c_total])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "total_cycles": self.total_cycles,
            "f_consumed": self.f_consumed,
            "iterations": len(self.per_iteration),
            "iteration_cycles": sum(r.c_total for r in self.per_iteration),
        }


# -- the accelerator ---------------------------------------------------------


class LbiAccelerator:
    """Cycle-stepped simulator; one instance is one device run."""

    def __init__(self, config: HwConfig, lam: float):
        if lam < 0:
            raise ValueError("lam must be nonnegative")
        self.config = config
        fmt = config.word_format
        self.lam_raw = quantize(lam, fmt).raw
        self._lo, self._hi = fmt.raw_min, fmt.raw_max
        self.bram = BramArray(config.m, config.bank_depth)
        self.pat = ParallelAdderTree(config.m)
        self.pmt = PipelinedMuxTree(config.m)
        self.reciprocal = ReciprocalPipeline(config.n, config.cordic_depth, fmt)
        self.cycle = 0
        self.i = 1
        self.saturation_events = 0
        self.trace = CycleTrace()
        self._loaded = False
        self._initialized = False

    # memory

    def load_memory(self, y_raw, beta0=None, v0=None) -> None:
        """Place raw vectors into their slices (host-side, outside the clock)."""
        cfg = self.config
        vectors = {"y": y_raw, "beta": beta0, "v": v0}
        for name, values in vectors.items():
            arr = np.zeros(cfg.n, dtype=np.int64) if values is None else np.asarray(values)
            if arr.shape != (cfg.n,):
                raise ValueError(f"{name} must have length {cfg.n}")
            if not np.issubdtype(arr.dtype, np.integer):
                raise TypeError(f"{name} must hold raw integers; quantize first")
            if arr.min(initial=0) < self._lo or arr.max(initial=0) > self._hi:
                raise ValueError(f"{name} has raws outside {cfg.word_format}")
            padded = np.zeros(cfg.t_rows * cfg.m, dtype=np.int64)
            padded[: cfg.n] = arr
            start = cfg.pointer(name)
            self.bram.cells[start: start + cfg.t_rows] = padded.reshape(cfg.t_rows, cfg.m)
        self._loaded = True

    def load_signal(self, samples, beta0=None, v0=None) -> None:
        """Quantize real-valued vectors and load them."""
        fmt = self.config.word_format
        q = lambda x: None if x is None else quantize_array(x, fmt)
        self.load_memory(q(samples), q(beta0), q(v0))

    def read_back(self, vector: str) -> np.ndarray:
        cfg = self.config
        start = cfg.pointer(vector)
        return self.bram.cells[start: start + cfg.t_rows].ravel()[: cfg.n].copy()

    def peek(self, vector: str, index: int) -> int:
        bank, address = self.config.address(vector, index)
        return int(self.bram.cells[address, bank - 1])

    # clocking

    def _tick(self) -> None:
        self.cycle += 1
        self.bram.begin_cycle()

    def _fit(self, value: int, count: bool = True) -> int:
        if value > self._hi or value < self._lo:
            if count:
                self.saturation_events += 1
            return self.config.word_format.fit(value)
        return value

    def initialize(self) -> None:
        """Consume the ``F`` overhead cycles, pre-filling the reciprocal pipeline."""
        if not self._loaded:
            raise RuntimeError("load memory before running")
        for c in range(self.config.f_overhead):
            self._tick()
            if c < self.reciprocal.depth:
                self.reciprocal.prefill_step()
        self.trace.f_consumed += self.config.f_overhead
        self.trace.total_cycles = self.cycle
        self._initialized = True

    def _read_phase(self, t_hat: int, lane: int, mask: np.ndarray) -> int:
        """Stream beta and y, return the error ``e`` after subtract."""
        cfg = self.config
        bram, pat, pmt = self.bram, self.pat, self.pmt
        acc = 0
        rows_in = 0
        y_k = None
        r = 0
        while rows_in < t_hat:
            self._tick()
            r += 1
            beta_in = y_in = None
            if r <= t_hat:
                t = r - 1
                row = bram.read("B", cfg.beta_ap + t)
                if t == t_hat - 1:
                    row = np.where(mask, row, 0)
                    y_in = pat.pad(bram.read("A", cfg.y_ap + t))
                beta_in = pat.pad(row)
            tree_out = pat.clock(beta_in)
            sel_out = pmt.clock(y_in, lane)
            # accumulator and y hold register load at the end of the cycle
            if tree_out is not None:
                acc += tree_out
                rows_in += 1
            if sel_out is not None:
                y_k = sel_out
        if pat.busy or y_k is None:
            raise AssertionError("adder and selector trees out of step")
        self._tick()
        return self._fit(y_k - acc)

    def _store_phase(self, t_hat: int, d: int, mask: np.ndarray) -> None:
        cfg = self.config
        fmt = cfg.word_format
        bram = self.bram
        lam = self.lam_raw
        full = np.ones(cfg.m, dtype=bool)

        def enable(t):
            return mask if t == t_hat - 1 else full

        for _ in range(2):  # handshake
            self._tick()
        v_reg = None  # (row, updated v) awaiting write
        b_reg = None  # (row, beta) awaiting write
        written = 0
        self._tick()
        bram_v = cfg.v_ap
        read_data = (0, bram.read("B", bram_v))  # (row, values) read last cycle
        next_read = 1
        while written < t_hat:
            self._tick()
            issue = False
            if b_reg is not None:
                t, values = b_reg
                bram.write("A", cfg.beta_ap + t, values, enable(t))
                b_reg = None
                written += 1
            elif v_reg is not None:
                t, values = v_reg
                bram.write("A", bram_v + t, values, enable(t))
                # shrink now runs with lam on the registered v
                b_reg = (t, np.where(values > lam, values - lam, np.where(values < -lam, values + lam, 0)))
                v_reg = None
                issue = True
            if read_data is not None:
                t, values = read_data
                raw = values + d
                en = enable(t)
                over = (raw > self._hi) | (raw < self._lo)
                if over.any():
                    self.saturation_events += int((over & en).sum())
                    raw = np.array([fmt.fit(int(x)) for x in raw], dtype=np.int64)
                v_reg = (t, raw)
                read_data = None
            if issue and next_read < t_hat:
                read_data = (next_read, bram.read("B", bram_v + next_read))
                next_read += 1

    def run_iteration(self) -> IterationRecord:
        if not self._initialized:
            self.initialize()
        cfg = self.config
        fmt = cfg.word_format
        k = (self.i - 1) % cfg.n + 1
        t_hat = -(-k // cfg.m)
        lane = (k - 1) % cfg.m
        mask = thermometer(lane + 1, cfg.m)
        mu_k, mu = self.reciprocal.head()
        if mu_k != k:
            raise AssertionError(f"reciprocal pipeline holds 1/{mu_k}, iteration needs 1/{k}")

        start = self.cycle
        e = self._read_phase(t_hat, lane, mask)
        self._tick()
        d = self._fit(fmt.shift_round(mu * e, fmt.fraction_bits))
        c_read = self.cycle - start
        self._store_phase(t_hat, d, mask)
        c_total = self.cycle - start

        self.reciprocal.advance()
        record = IterationRecord(self.i, k, t_hat, c_read, c_total - c_read, c_total)
        self.trace.per_iteration.append(record)
        self.trace.total_cycles = self.cycle
        self.i += 1
        return record

    def run(self, iterations: int) -> tuple[np.ndarray, CycleTrace]:
        if iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not self._initialized:
            self.initialize()
        for _ in range(iterations):
            self.run_iteration()
        return self.read_back("beta"), self.trace


def golden_vectors(beta_raw, v_raw, fmt: FixedFormat = DEFAULT_FORMAT) -> dict:
    """Per-index raw dump for cross-checks against other implementations."""
    beta_raw = np.asarray(beta_raw, dtype=np.int64)
    v_raw = np.asarray(v_raw, dtype=np.int64)
    return {
        "format": str(fmt),
        "n": int(beta_raw.size),
        "beta": beta_raw.tolist(),
        "v": v_raw.tolist(),
    }


def write_golden(path: str | Path, beta_raw, v_raw, fmt: FixedFormat = DEFAULT_FORMAT) -> None:
    Path(path).write_text(json.dumps(golden_vectors(beta_raw, v_raw, fmt)) + "\n")


def trace_summary_json(trace: CycleTrace) -> str:
    return json.dumps(trace.summary(), sort_keys=True)


def record_dict(record: IterationRecord) -> dict:
    return asdict(record)
