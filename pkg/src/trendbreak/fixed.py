"""Signed fixed-point arithmetic with configurable rounding and overflow.

Values are stored as raw two's-complement integers; the real value of a raw
``r`` in a format with ``f`` fraction bits is ``r * 2**-f``. Every result is
renormalized into its format before it is observable.

Two implementations of the same semantics live here:

* :class:`FixedScalar`, the module-level :func:`add`, :func:`sub`, :func:`mul`
  and :meth:`FixedFormat.fit` / :meth:`FixedFormat.shift_round` operate on
  Python integers (arbitrary width); the hardware simulator uses these.
* ``raw_*`` helpers and ``*_raw`` array functions are numba kernels on int64,
  used by the vectorized solver. They require ``width <= 32`` so that a full
  product fits in 63 bits.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np
from numba import njit

__all__ = [
    "FixedFormat",
    "FixedScalar",
    "DEFAULT_FORMAT",
    "quantize",
    "dequantize",
    "add",
    "sub",
    "mul",
    "reciprocal_q",
    "quantize_array",
    "dequantize_array",
    "reciprocal_table",
    "add_raw",
    "sub_raw",
    "mul_raw",
]

ROUNDING_MODES = ("nearest", "truncate")
OVERFLOW_MODES = ("saturate", "wrap")

# integer codes passed into numba kernels
NEAREST, TRUNCATE = 0, 1
SATURATE, WRAP = 0, 1

_FORMAT_RE = re.compile(r"^[sS](\d+)\.(\d+)$")


@dataclass(frozen=True)
class FixedFormat:
    """Signed fixed-point format ``s<integer_bits>.<fraction_bits>``.

    ``integer_bits`` includes the sign bit. The default ``s4.16`` is a 20-bit
    word with range [-8, 8) and resolution 2**-16.
    """

    integer_bits: int = 4
    fraction_bits: int = 16
    rounding: str = "nearest"
    overflow: str = "saturate"

    def __post_init__(self):
        if self.integer_bits < 1:
            raise ValueError("integer_bits must be >= 1 (it includes the sign bit)")
        if self.fraction_bits < 0:
            raise ValueError("fraction_bits must be >= 0")
        if self.rounding not in ROUNDING_MODES:
            raise ValueError(f"rounding must be one of {ROUNDING_MODES}")
        if self.overflow not in OVERFLOW_MODES:
            raise ValueError(f"overflow must be one of {OVERFLOW_MODES}")

    @classmethod
    def parse(cls, text: str, **policies) -> "FixedFormat":
        """Parse ``"s4.16"``-style strings."""
        match = _FORMAT_RE.match(text.strip())
        if match is None:
            raise ValueError(f"cannot parse fixed-point format {text!r}; expected e.g. 's4.16'")
        return cls(int(match.group(1)), int(match.group(2)), **policies)

    def __str__(self) -> str:
        return f"s{self.integer_bits}.{self.fraction_bits}"

    @property
    def width(self) -> int:
        return self.integer_bits + self.fraction_bits

    @property
    def raw_min(self) -> int:
        return -(1 << (self.width - 1))

    @property
    def raw_max(self) -> int:
        return (1 << (self.width - 1)) - 1

    @property
    def resolution(self) -> float:
        return 2.0 ** -self.fraction_bits

    @property
    def rounding_code(self) -> int:
        return NEAREST if self.rounding == "nearest" else TRUNCATE

    @property
    def wraps(self) -> bool:
        return self.overflow == "wrap"

    def check_kernel_width(self) -> None:
        if self.width > 32:
            raise ValueError(f"vectorized kernels support words up to 32 bits, got {self.width}")

    # -- integer-level normalization (Python ints, arbitrary width) --------

    def fit(self, raw: int) -> int:
        """Bring an integer into range using the overflow policy."""
        lo, hi = self.raw_min, self.raw_max
        if lo <= raw <= hi:
            return raw
        if self.overflow == "wrap":
            span = 1 << self.width
            return (raw - lo) % span + lo
        return hi if raw > hi else lo

    def shift_round(self, value: int, shift: int) -> int:
        """Divide ``value`` by ``2**shift`` using the rounding policy."""
        if shift <= 0:
            return value << -shift
        if self.rounding == "truncate":
            return value >> shift
        half = 1 << (shift - 1)
        if value >= 0:
            return (value + half) >> shift
        return -((-value + half) >> shift)


DEFAULT_FORMAT = FixedFormat()


@dataclass(frozen=True)
class FixedScalar:
    """Immutable fixed-point value."""

    raw: int
    format: FixedFormat = DEFAULT_FORMAT

    def __post_init__(self):
        if not self.format.raw_min <= self.raw <= self.format.raw_max:
            raise ValueError(f"raw value {self.raw} out of range for {self.format}")

    def __float__(self) -> float:
        return self.raw * self.format.resolution

    @property
    def value(self) -> float:
        return float(self)

    def __add__(self, other: "FixedScalar") -> "FixedScalar":
        return add(self, other)

    def __sub__(self, other: "FixedScalar") -> "FixedScalar":
        return sub(self, other)

    def __mul__(self, other: "FixedScalar") -> "FixedScalar":
        return mul(self, other)

    def __repr__(self) -> str:
        return f"FixedScalar({float(self)!r}, raw={self.raw}, format={self.format})"


def _round_scaled(scaled: float, rounding: str) -> int:
    """Round a float that is already multiplied by 2**f."""
    if rounding == "truncate":
        return math.floor(scaled)
    mag = abs(scaled)
    whole = math.floor(mag)
    # explicit fraction test; floor(mag + 0.5) misrounds just below one half
    if mag - whole >= 0.5:
        whole += 1
    return int(whole) if scaled >= 0 else -int(whole)


def quantize(x: float, fmt: FixedFormat = DEFAULT_FORMAT) -> FixedScalar:
    """Round ``x`` into ``fmt``; out-of-range values saturate (or wrap)."""
    if math.isnan(x):
        raise ValueError("cannot quantize NaN")
    if math.isinf(x):
        if fmt.overflow == "wrap":
            raise ValueError("cannot wrap an infinite value")
        return FixedScalar(fmt.raw_max if x > 0 else fmt.raw_min, fmt)
    raw = _round_scaled(math.ldexp(x, fmt.fraction_bits), fmt.rounding)
    return FixedScalar(fmt.fit(raw), fmt)


def dequantize(q: FixedScalar) -> float:
    return float(q)


def _same_format(a: FixedScalar, b: FixedScalar) -> FixedFormat:
    if a.format != b.format:
        raise ValueError(f"format mismatch: {a.format} vs {b.format}")
    return a.format


def add(a: FixedScalar, b: FixedScalar) -> FixedScalar:
    fmt = _same_format(a, b)
    return FixedScalar(fmt.fit(a.raw + b.raw), fmt)


def sub(a: FixedScalar, b: FixedScalar) -> FixedScalar:
    fmt = _same_format(a, b)
    return FixedScalar(fmt.fit(a.raw - b.raw), fmt)


def mul(a: FixedScalar, b: FixedScalar) -> FixedScalar:
    """Full-precision product, rounded back to ``fraction_bits`` then fitted."""
    fmt = _same_format(a, b)
    return FixedScalar(fmt.fit(fmt.shift_round(a.raw * b.raw, fmt.fraction_bits)), fmt)


def reciprocal_q(k: int, fmt: FixedFormat = DEFAULT_FORMAT) -> FixedScalar:
    """Exactly rounded ``1/k`` in ``fmt`` (the step size of row ``k``)."""
    if k < 1:
        raise ValueError("reciprocal_q requires k >= 1")
    num = 1 << fmt.fraction_bits
    if fmt.rounding == "truncate":
        raw = num // k
    else:
        # nearest, ties away from zero; k > 0 so the value is positive
        raw = (2 * num + k) // (2 * k)
    return FixedScalar(fmt.fit(raw), fmt)


# -- vectorized helpers ------------------------------------------------------


def quantize_array(x, fmt: FixedFormat = DEFAULT_FORMAT) -> np.ndarray:
    """Vectorized :func:`quantize` returning int64 raws."""
    fmt.check_kernel_width()
    x = np.asarray(x, dtype=np.float64)
    if np.isnan(x).any():
        raise ValueError("cannot quantize NaN")
    scaled = np.ldexp(x, fmt.fraction_bits)
    if fmt.rounding == "truncate":
        rounded = np.floor(scaled)
    else:
        mag = np.abs(scaled)
        whole = np.floor(mag)
        whole = whole + (mag - whole >= 0.5)
        rounded = np.copysign(whole, scaled)
    if fmt.wraps:
        if np.isinf(rounded).any():
            raise ValueError("cannot wrap an infinite value")
        raw = np.array([fmt.fit(int(r)) for r in rounded.ravel()], dtype=np.int64)
        return raw.reshape(x.shape)
    return np.clip(rounded, fmt.raw_min, fmt.raw_max).astype(np.int64)


def dequantize_array(raw, fmt: FixedFormat = DEFAULT_FORMAT) -> np.ndarray:
    return np.ldexp(np.asarray(raw, dtype=np.float64), -fmt.fraction_bits)


def reciprocal_table(n: int, fmt: FixedFormat = DEFAULT_FORMAT) -> np.ndarray:
    """Raws of ``1/k`` for ``k = 1..n`` (index ``k-1``)."""
    fmt.check_kernel_width()
    return np.array([reciprocal_q(k, fmt).raw for k in range(1, n + 1)], dtype=np.int64)


# -- numba kernels (int64 raws) ----------------------------------------------


@njit(cache=True)
def raw_fit(value, lo, hi, wrap):
    """Return ``(fitted, overflowed)`` for an int64 ``value``."""
    if value > hi or value < lo:
        if wrap:
            span = hi - lo + 1
            return (value - lo) % span + lo, True
        if value > hi:
            return hi, True
        return lo, True
    return value, False


@njit(cache=True)
def raw_shift_round(value, shift, rounding):
    if shift == 0:
        return value
    if rounding == 1:
        return value >> shift
    half = np.int64(1) << (shift - 1)
    if value >= 0:
        return (value + half) >> shift
    return -((-value + half) >> shift)


@njit(cache=True)
def raw_shrink(v, lam):
    """Soft threshold on raws; magnitude only shrinks, so no overflow."""
    if v > lam:
        return v - lam
    if v < -lam:
        return v + lam
    return np.int64(0)


@njit(cache=True)
def _binary_kernel(a, b, op, lo, hi, frac, rounding, wrap):
    out = np.empty(a.shape[0], dtype=np.int64)
    events = 0
    for i in range(a.shape[0]):
        if op == 0:
            r = a[i] + b[i]
        elif op == 1:
            r = a[i] - b[i]
        else:
            r = raw_shift_round(a[i] * b[i], frac, rounding)
        out[i], hit = raw_fit(r, lo, hi, wrap)
        events += hit
    return out, events


def _binary(a, b, op: int, fmt: FixedFormat) -> np.ndarray:
    fmt.check_kernel_width()
    a = np.ascontiguousarray(a, dtype=np.int64).ravel()
    b = np.ascontiguousarray(b, dtype=np.int64).ravel()
    if a.shape != b.shape:
        raise ValueError("operand arrays differ in length")
    out, _ = _binary_kernel(a, b, op, fmt.raw_min, fmt.raw_max, fmt.fraction_bits, fmt.rounding_code, fmt.wraps)
    return out


def add_raw(a, b, fmt: FixedFormat = DEFAULT_FORMAT) -> np.ndarray:
    """Element-wise :func:`add` on int64 raw arrays."""
    return _binary(a, b, 0, fmt)


def sub_raw(a, b, fmt: FixedFormat = DEFAULT_FORMAT) -> np.ndarray:
    return _binary(a, b, 1, fmt)


def mul_raw(a, b, fmt: FixedFormat = DEFAULT_FORMAT) -> np.ndarray:
    return _binary(a, b, 2, fmt)
