"""Reference activations and their series-based approximations.

Every approximated activation is one exp-series evaluation followed by a
small post-operation (the engine's "mode"). By default the exp series is
always evaluated at a non-negative argument and the sign is folded back in
by the post-op, e.g. sigmoid(x) = 1/(1 + T(-x)) for x < 0. Mathematically
this is the same rational composition, but the truncated series then
converges monotonically from below instead of oscillating through poles of
the post-op for negative inputs. ``literal=True`` evaluates the formulas
exactly as printed (series at the raw argument, Swish/GELU without the
sigmoid denominator, Softplus as log-series of exp-series).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import BoundsError, DomainError
from .series import CoefficientTable, Precision, SeriesKind, gen_coefficients, horner_raw

SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772
GELU_SCALE = 1.702

DEFAULT_GRID = (-5.0, 5.0, 0.01)


class ActivationKind(str, enum.Enum):
    SELU = "selu"
    SIGMOID = "sigmoid"
    SWISH = "swish"
    GELU = "gelu"
    TANH = "tanh"
    SOFTPLUS = "softplus"


class PostOp(str, enum.Enum):
    IDENTITY = "identity"
    RATIONAL_SIGMOID = "rational_sigmoid"
    RATIONAL_TANH = "rational_tanh"
    MUL_BY_INPUT = "mul_by_input"
    SELU_NEG_BRANCH = "selu_neg_branch"
    SOFTPLUS_COMPOSE = "softplus_compose"


POST_OPS = {
    ActivationKind.SELU: PostOp.SELU_NEG_BRANCH,
    ActivationKind.SIGMOID: PostOp.RATIONAL_SIGMOID,
    ActivationKind.SWISH: PostOp.MUL_BY_INPUT,
    ActivationKind.GELU: PostOp.MUL_BY_INPUT,
    ActivationKind.TANH: PostOp.RATIONAL_TANH,
    ActivationKind.SOFTPLUS: PostOp.SOFTPLUS_COMPOSE,
}


@dataclass(frozen=True)
class ActivationSpec:
    kind: ActivationKind
    lam: float = SELU_LAMBDA
    alpha: float = SELU_ALPHA
    gelu_scale: float = field(default=GELU_SCALE, init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ActivationKind(self.kind))
        if not (self.lam > 0 and self.alpha > 0):
            raise DomainError("SELU lambda and alpha must be positive")

    @property
    def post_op(self) -> PostOp:
        return POST_OPS[self.kind]

    def params(self) -> dict:
        if self.kind is ActivationKind.SELU:
            return {"lambda": self.lam, "alpha": self.alpha}
        return {}

    @classmethod
    def from_name(cls, name: str, params: Optional[dict] = None) -> "ActivationSpec":
        params = params or {}
        try:
            kind = ActivationKind(name.lower())
        except ValueError:
            raise DomainError(f"unsupported activation {name!r}") from None
        if kind is ActivationKind.SELU:
            return cls(kind, float(params.get("lambda", SELU_LAMBDA)), float(params.get("alpha", SELU_ALPHA)))
        return cls(kind)


def _check_finite(x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise DomainError("activation input must be finite")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def reference_array(spec: ActivationSpec, x) -> np.ndarray:
    """Exact activation in double precision (GELU in its sigmoid form)."""
    x = np.asarray(x, dtype=np.float64)
    _check_finite(x)
    kind = spec.kind
    if kind is ActivationKind.SIGMOID:
        return _sigmoid(x)
    if kind is ActivationKind.SWISH:
        return x * _sigmoid(x)
    if kind is ActivationKind.GELU:
        return x * _sigmoid(spec.gelu_scale * x)
    if kind is ActivationKind.TANH:
        return np.tanh(x)
    if kind is ActivationKind.SELU:
        return spec.lam * np.where(x > 0, x, spec.alpha * np.expm1(np.minimum(x, 0.0)))
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def reference(spec: ActivationSpec, x: float) -> float:
    return float(reference_array(spec, x))


# -- shared arithmetic kernel -------------------------------------------------
#
# series_argument() and post_op() are used both by the vectorised direct path
# and by the cycle-level engine, so the two stay bit-identical. All arrays
# passed in must already carry the dtype of ``precision``.


def series_argument(spec: ActivationSpec, x: np.ndarray, precision: Precision,
                    literal: bool = False) -> np.ndarray:
    """Argument fed to the exp series for input ``x``."""
    dt = precision.dtype
    kind = spec.kind
    if kind is ActivationKind.TANH:
        u = dt(2.0) * x
    elif kind is ActivationKind.GELU:
        u = dt(spec.gelu_scale) * x
    else:
        u = x
    if literal:
        return u
    return np.abs(u)


def _rational_sigmoid(u: np.ndarray, y: np.ndarray, dt, literal: bool) -> np.ndarray:
    one = dt(1.0)
    if literal:
        return y / (y + one)
    # y = T(|u|); sigmoid(u) = y/(y+1) for u >= 0 and 1/(y+1) otherwise
    return np.where(u >= 0, y, one) / (y + one)


def post_op(spec: ActivationSpec, x: np.ndarray, y: np.ndarray, n_terms: int,
            precision: Precision, literal: bool = False) -> np.ndarray:
    """Map the exp-series output ``y`` for input ``x`` to the activation value."""
    dt = precision.dtype
    one = dt(1.0)
    kind = spec.kind
    if kind is ActivationKind.SIGMOID:
        return _rational_sigmoid(x, y, dt, literal)
    if kind is ActivationKind.TANH:
        r = (y - one) / (y + one)
        return r if literal else np.copysign(r, x)
    if kind in (ActivationKind.SWISH, ActivationKind.GELU):
        if literal:
            return x * y
        u = x if kind is ActivationKind.SWISH else dt(spec.gelu_scale) * x
        return x * _rational_sigmoid(u, y, dt, literal)
    if kind is ActivationKind.SELU:
        # y = T(x) literally, y = T(-x) = 1/e^x after folding
        e = y if literal else one / y
        neg = dt(spec.lam) * dt(spec.alpha) * (e - one)
        return np.where(x > 0, dt(spec.lam) * x, neg)
    log_table = gen_coefficients(SeriesKind.LOG1P, n_terms)
    if literal:
        return horner_raw(log_table, y, precision)
    # softplus(x) = max(x, 0) - log(1 - sigmoid(-|x|)) and sigmoid(-|x|) <= 1/2,
    # which keeps the log1p series argument well inside its radius
    z = one / (y + one)
    s = -horner_raw(log_table, -z, precision)
    return np.where(x > 0, x + s, s)


def approx_activation_array(spec: ActivationSpec, x, n_terms: int,
                            precision: Precision = Precision.DOUBLE,
                            literal: bool = False,
                            table: Optional[CoefficientTable] = None) -> np.ndarray:
    """Vectorised series-based activation."""
    xv = precision.cast(x)
    _check_finite(xv)
    if table is None:
        table = gen_coefficients(SeriesKind.EXP, n_terms)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        y = horner_raw(table, series_argument(spec, xv, precision, literal), precision)
        return post_op(spec, xv, y, n_terms, precision, literal)


def approx_activation(spec: ActivationSpec, x: float, n_terms: int,
                      precision: Precision = Precision.DOUBLE, literal: bool = False) -> float:
    if not math.isfinite(x):
        raise DomainError(f"activation input must be finite, got {x!r}")
    return float(approx_activation_array(spec, x, n_terms, precision, literal))


# -- error sweeps --------------------------------------------------------------


@dataclass(frozen=True)
class SweepResult:
    activation: ActivationSpec
    n_terms: int
    grid_lo: float
    grid_hi: float
    grid_step: float
    max_abs_err: float
    mean_abs_err: float
    argmax_x: float

    CSV_HEADER = ("activation", "n_terms", "grid_lo", "grid_hi", "grid_step",
                  "max_abs_err", "mean_abs_err", "argmax_x")

    def csv_row(self) -> list[str]:
        return [self.activation.kind.value, str(self.n_terms)] + [
            repr(float(v)) for v in (self.grid_lo, self.grid_hi, self.grid_step,
                                     self.max_abs_err, self.mean_abs_err, self.argmax_x)
        ]


def make_grid(grid_lo: float, grid_hi: float, grid_step: float) -> np.ndarray:
    """Inclusive grid lo, lo+step, ..., up to hi."""
    if not (math.isfinite(grid_lo) and math.isfinite(grid_hi)):
        raise DomainError("grid bounds must be finite")
    if not grid_step > 0:
        raise DomainError(f"grid step must be positive, got {grid_step!r}")
    if grid_hi < grid_lo:
        raise DomainError(f"empty grid [{grid_lo}, {grid_hi}]")
    count = int(math.floor((grid_hi - grid_lo) / grid_step + 1e-9)) + 1
    xs = grid_lo + grid_step * np.arange(count, dtype=np.float64)
    # round away representation noise (-5 + 300*0.01 -> -2.0)
    return np.minimum(np.round(xs, 12), grid_hi)


def sweep_error(spec: ActivationSpec, n_terms: int,
                grid_lo: float = DEFAULT_GRID[0], grid_hi: float = DEFAULT_GRID[1],
                grid_step: float = DEFAULT_GRID[2],
                precision: Precision = Precision.DOUBLE, literal: bool = False) -> SweepResult:
    xs = make_grid(grid_lo, grid_hi, grid_step)
    approx = approx_activation_array(spec, xs, n_terms, precision, literal).astype(np.float64)
    err = np.abs(approx - reference_array(spec, xs))
    # a non-finite approximation is an infinite error
    err = np.where(np.isfinite(err), err, np.inf)
    i = int(np.argmax(err))
    return SweepResult(spec, n_terms, grid_lo, grid_hi, grid_step,
                       float(err[i]), float(np.mean(err)), float(xs[i]))


def convergence_threshold(spec: ActivationSpec, tol: float, n_max: int = 64,
                          precision: Precision = Precision.DOUBLE,
                          literal: bool = False) -> Optional[int]:
    """Smallest n <= n_max whose default-grid sweep error is within ``tol``.

    Returns None when no such n exists.
    """
    if not tol > 0:
        raise DomainError(f"tolerance must be positive, got {tol!r}")
    if n_max < 1:
        raise BoundsError(f"n_max must be >= 1, got {n_max}")
    for n in range(1, n_max + 1):
        if sweep_error(spec, n, precision=precision, literal=literal).max_abs_err <= tol:
            return n
    return None
