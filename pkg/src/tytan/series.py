"""Taylor coefficient tables and Horner-form evaluation.

Two arithmetic modes are supported. ``Precision.SINGLE`` mirrors the FP32
datapath: inputs and coefficients are rounded to binary32 and every multiply
and add result is rounded to binary32. ``Precision.DOUBLE`` runs the same
recurrence in binary64 and additionally carries the rounding error of each
MAC step (error-free transformations), so the result is as accurate as the
truncated polynomial itself even where alternating terms cancel.
"""
from __future__ import annotations

import enum
import functools
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import BoundsError, DomainError

MAX_TERMS = 64

# Veltkamp splitter for binary64.
_SPLITTER = float(2**27 + 1)


class SeriesKind(str, enum.Enum):
    EXP = "exp"
    LOG1P = "log1p"


class Precision(str, enum.Enum):
    DOUBLE = "double"
    SINGLE = "single"

    @property
    def dtype(self) -> type:
        return np.float64 if self is Precision.DOUBLE else np.float32

    @property
    def eps(self) -> float:
        return float(np.finfo(self.dtype).eps)

    def cast(self, values) -> np.ndarray:
        """Round ``values`` to this precision (round-to-nearest-even)."""
        return np.asarray(values, dtype=np.float64).astype(self.dtype)


@dataclass(frozen=True)
class CoefficientTable:
    kind: SeriesKind
    coefficients: tuple[float, ...]

    def __post_init__(self) -> None:
        n = len(self.coefficients)
        if not 1 <= n <= MAX_TERMS:
            raise BoundsError(f"coefficient table needs 1..{MAX_TERMS} entries, got {n}")

    @property
    def n_terms(self) -> int:
        return len(self.coefficients)

    def as_array(self, precision: Precision) -> np.ndarray:
        return precision.cast(self.coefficients)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "coefficients": list(self.coefficients)}

    def to_json(self) -> str:
        # json emits float repr, i.e. shortest round-trip decimal.
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "CoefficientTable":
        try:
            kind = SeriesKind(doc["kind"])
            coeffs = tuple(float(c) for c in doc["coefficients"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DomainError(f"malformed coefficient table: {exc}") from exc
        return cls(kind, coeffs)

    @classmethod
    def from_json(cls, text: str) -> "CoefficientTable":
        return cls.from_dict(json.loads(text))


@functools.lru_cache(maxsize=None)
def gen_coefficients(kind: SeriesKind | str, n_terms: int) -> CoefficientTable:
    """Return the first ``n_terms`` Taylor coefficients of ``kind``.

    ``exp``: c_k = 1/k!, built by the recurrence c_k = c_{k-1}/k.
    ``log1p``: log(1+y) about y=0, c_0 = 0 and c_k = (-1)^(k+1)/k.
    """
    kind = SeriesKind(kind)
    if not isinstance(n_terms, (int, np.integer)) or not 1 <= n_terms <= MAX_TERMS:
        raise BoundsError(f"n_terms must be an integer in [1, {MAX_TERMS}], got {n_terms!r}")
    if kind is SeriesKind.EXP:
        coeffs = [1.0]
        for k in range(1, n_terms):
            coeffs.append(coeffs[-1] / k)
    else:
        coeffs = [0.0] + [(-1.0 if k % 2 == 0 else 1.0) / k for k in range(1, n_terms)]
    return CoefficientTable(kind, tuple(coeffs))


def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _split(a):
    c = _SPLITTER * a
    hi = c - (c - a)
    return hi, a - hi


def _two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    return p, al * bl - (((p - ah * bh) - al * bh) - ah * bl)


def mac_step(acc, err, x, c, precision: Precision):
    """One MAC of the Horner recurrence: ``acc * x + c``.

    Operands must already carry the dtype of ``precision``. Returns the new
    accumulator and, in double mode, the running compensation term (always
    zero in single mode).
    """
    if precision is Precision.SINGLE:
        return acc * x + c, err
    p, perr = _two_prod(acc, x)
    s, serr = _two_sum(p, c)
    return s, err * x + (perr + serr)


def mac_finish(acc, err, precision: Precision):
    """Fold the compensation term into the accumulator."""
    if precision is Precision.SINGLE:
        return acc
    out = acc + err
    # overflowed accumulators leave NaN compensation terms behind
    if isinstance(out, float):
        return out if math.isfinite(out) else acc
    return np.where(np.isfinite(out), out, acc)


def _scalar_operands(table: CoefficientTable, x: float, precision: Precision):
    # Python floats are binary64 with the same IEEE semantics as float64
    # arrays and are much faster for one-off evaluation.
    if precision is Precision.DOUBLE:
        return float(x), table.coefficients, 0.0
    return np.float32(x), table.as_array(precision), np.float32(0.0)


def horner_array(table: CoefficientTable, x, precision: Precision = Precision.DOUBLE) -> np.ndarray:
    """Vectorised Horner evaluation; ``x`` is rounded to ``precision`` first."""
    xv = precision.cast(x)
    if not np.all(np.isfinite(xv)):
        raise DomainError("series argument must be finite")
    return horner_raw(table, xv, precision)


def horner_raw(table: CoefficientTable, xv: np.ndarray, precision: Precision) -> np.ndarray:
    """Horner evaluation of an array already in ``precision``, unchecked."""
    coeffs = table.as_array(precision)
    acc = np.zeros_like(xv)
    err = np.zeros_like(xv)
    for c in coeffs[::-1]:
        acc, err = mac_step(acc, err, xv, c, precision)
    return mac_finish(acc, err, precision)


def horner_eval(table: CoefficientTable, x: float, precision: Precision = Precision.DOUBLE) -> float:
    """Evaluate c_0 + x(c_1 + x(c_2 + ...)) innermost-first."""
    if not math.isfinite(x):
        raise DomainError(f"series argument must be finite, got {x!r}")
    if precision is Precision.DOUBLE:
        return _compensated_horner(table.coefficients, float(x))
    xv, coeffs, acc = _scalar_operands(table, x, precision)
    for c in coeffs[::-1]:
        acc = acc * xv + c
    return float(acc)


def _compensated_horner(coeffs: tuple[float, ...], x: float) -> float:
    # mac_step with the helpers inlined and x split once; same operations,
    # same rounding, several times faster for scalar calls
    t = _SPLITTER * x
    xh = t - (t - x)
    xl = x - xh
    acc = err = 0.0
    for c in reversed(coeffs):
        p = acc * x
        t = _SPLITTER * acc
        ah = t - (t - acc)
        al = acc - ah
        perr = al * xl - (((p - ah * xh) - al * xh) - ah * xl)
        s = p + c
        bb = s - p
        err = err * x + (perr + ((p - (s - bb)) + (c - bb)))
        acc = s
    out = acc + err
    return out if math.isfinite(out) else acc


def horner_intermediates(table: CoefficientTable, x: float, precision: Precision) -> list[float]:
    """Accumulator value after every MAC step, outermost coefficient first."""
    xv, coeffs, acc = _scalar_operands(table, x, precision)
    err = acc
    out = []
    for c in coeffs[::-1]:
        acc, err = mac_step(acc, err, xv, c, precision)
        out.append(float(acc))
    return out


def power_sum_eval(table: CoefficientTable, x: float) -> float:
    """Reference value of sum c_k x^k, term by term with explicit powers.

    Terms are accumulated exactly as rationals (every double is a dyadic
    rational) and rounded to double once, so the result is the correctly
    rounded value of the truncated polynomial. Intended for tests.
    """
    if not math.isfinite(x):
        raise DomainError(f"series argument must be finite, got {x!r}")
    num, den = x.as_integer_ratio()
    xshift = den.bit_length() - 1
    terms = []
    for k, (cnum, cshift) in enumerate(_dyadic(table.coefficients)):
        if cnum:
            terms.append((cnum * num**k, cshift + xshift * k))
    if not terms:
        return 0.0
    top = max(shift for _, shift in terms)
    total = sum(n << (top - shift) for n, shift in terms)
    # int / int is correctly rounded
    return total / (1 << top)


@functools.lru_cache(maxsize=256)
def _dyadic(coefficients: tuple[float, ...]) -> tuple[tuple[int, int], ...]:
    out = []
    for c in coefficients:
        n, d = float(c).as_integer_ratio()
        out.append((n, d.bit_length() - 1))
    return tuple(out)
