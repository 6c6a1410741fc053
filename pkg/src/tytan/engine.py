"""Cycle-level model of the series engine datapath.

The engine loads a coefficient table into its FIFO, fills an input buffer,
then for every buffered input runs the Horner MAC once per coefficient,
applies the mode's post-op and emits the result. Arithmetic goes through
the same kernel as :func:`tytan.activations.approx_activation`; cycle
accounting is independent of the data and follows :class:`CycleModelParams`.
"""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .activations import ActivationKind, ActivationSpec, PostOp, post_op, series_argument
from .errors import BoundsError, DomainError, UnderdeterminedError
from .series import CoefficientTable, Precision, SeriesKind, mac_finish, mac_step


class FsmState(str, enum.Enum):
    IDLE = "Idle"
    LOAD_COEFFICIENTS = "LoadCoefficients"
    FILL_INPUT_BUFFER = "FillInputBuffer"
    COMPUTE_MAC = "ComputeMac"
    POST_OP = "PostOp"
    EMIT_OUTPUT = "EmitOutput"
    DONE = "Done"


TRANSITIONS = {
    FsmState.IDLE: {FsmState.LOAD_COEFFICIENTS},
    FsmState.LOAD_COEFFICIENTS: {FsmState.FILL_INPUT_BUFFER},
    FsmState.FILL_INPUT_BUFFER: {FsmState.COMPUTE_MAC},
    FsmState.COMPUTE_MAC: {FsmState.COMPUTE_MAC, FsmState.POST_OP},
    FsmState.POST_OP: {FsmState.EMIT_OUTPUT},
    FsmState.EMIT_OUTPUT: {FsmState.COMPUTE_MAC, FsmState.DONE},
    FsmState.DONE: set(),
}


@dataclass(frozen=True)
class CycleModelParams:
    """Linear latency model; defaults reproduce the measured tanh table."""

    fill_cycles_per_value: int = 4
    cycles_per_term: int = 24
    per_output_overhead: int = 27
    full_op_overhead: int = 64

    def __post_init__(self) -> None:
        for name, value in asdict(self).items():
            if value < 0:
                raise BoundsError(f"{name} must be >= 0, got {value}")


@dataclass(frozen=True)
class CycleReport:
    fill_cycles: int
    per_output_cycles: int
    total_without_buffers: int
    total_with_buffers: int
    buffered: bool = field(default=True, compare=False)

    @property
    def total(self) -> int:
        return self.total_with_buffers if self.buffered else self.total_without_buffers

    def to_dict(self) -> dict:
        return {
            "fill": self.fill_cycles,
            "per_output": self.per_output_cycles,
            "total_no_buf": self.total_without_buffers,
            "total_buf": self.total_with_buffers,
        }


class TraceEntry(NamedTuple):
    step: int
    state: FsmState
    accumulator: float


@dataclass
class EngineRun:
    inputs: Sequence[float]
    table: CoefficientTable
    post_op: PostOp = PostOp.IDENTITY
    spec: Optional[ActivationSpec] = None
    precision: Precision = Precision.DOUBLE
    trace_enabled: bool = False
    literal: bool = False

    def validate(self) -> None:
        if len(self.inputs) == 0:
            raise BoundsError("engine run needs at least one input")
        if not all(math.isfinite(float(v)) for v in self.inputs):
            raise DomainError("engine inputs must be finite")
        op = PostOp(self.post_op)
        if op is PostOp.IDENTITY:
            return
        if self.spec is None:
            raise DomainError(f"post-op {op.value} needs an activation spec")
        if self.spec.post_op is not op:
            raise DomainError(f"post-op {op.value} does not realise {self.spec.kind.value}")
        if self.table.kind is not SeriesKind.EXP:
            raise DomainError("activation post-ops consume an exp-series table")


class EngineResult(NamedTuple):
    outputs: list[float]
    report: CycleReport
    trace: Optional[list[TraceEntry]]


def predict_cycles(n_inputs: int, n_terms: int, with_buffers: bool = True,
                   params: CycleModelParams = CycleModelParams()) -> CycleReport:
    """Closed-form cycle count; no simulation."""
    if n_inputs < 1 or n_terms < 1:
        raise BoundsError(f"n_inputs and n_terms must be >= 1, got {n_inputs}, {n_terms}")
    fill = params.fill_cycles_per_value * n_inputs
    per_output = params.cycles_per_term * n_terms + params.per_output_overhead
    no_buf = n_inputs * per_output + params.full_op_overhead
    return CycleReport(fill, per_output, no_buf, no_buf + fill, buffered=with_buffers)


class _Fsm:
    def __init__(self, trace: Optional[list]):
        self.state = FsmState.IDLE
        self.steps = 0
        self.trace = trace
        if trace is not None:
            trace.append(TraceEntry(0, self.state, 0.0))

    def goto(self, state: FsmState, acc: float = 0.0) -> None:
        assert state in TRANSITIONS[self.state], f"illegal transition {self.state} -> {state}"
        self.state = state
        self.steps += 1
        if self.trace is not None:
            self.trace.append(TraceEntry(self.steps, state, float(acc)))


def run_engine(run: EngineRun, params: CycleModelParams = CycleModelParams()) -> EngineResult:
    """Simulate one engine pass over ``run.inputs``.

    Cycles are charged per state: the constant operation overhead on
    coefficient load, ``fill_cycles_per_value`` per buffered input,
    ``cycles_per_term`` per MAC and ``per_output_overhead`` per post-op.
    """
    run.validate()
    precision = run.precision
    dt = precision.dtype
    op = PostOp(run.post_op)
    trace: Optional[list[TraceEntry]] = [] if run.trace_enabled else None
    fsm = _Fsm(trace)
    compute_cycles = 0
    fill_cycles = 0

    fsm.goto(FsmState.LOAD_COEFFICIENTS)
    fifo = run.table.as_array(precision)[::-1]
    compute_cycles += params.full_op_overhead

    fsm.goto(FsmState.FILL_INPUT_BUFFER)
    buffer = precision.cast([float(v) for v in run.inputs])
    fill_cycles += params.fill_cycles_per_value * len(buffer)

    outputs: list[float] = []
    n_terms = run.table.n_terms
    for i in range(len(buffer)):
        x = buffer[i:i + 1]
        arg = x if op is PostOp.IDENTITY else series_argument(run.spec, x, precision, run.literal)
        acc = np.zeros(1, dtype=dt)
        err = np.zeros(1, dtype=dt)
        # first coefficient enters on a zero accumulator
        for c in fifo:
            acc, err = mac_step(acc, err, arg, c, precision)
            fsm.goto(FsmState.COMPUTE_MAC, acc[0])
            compute_cycles += params.cycles_per_term
        fsm.goto(FsmState.POST_OP, acc[0])
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            y = mac_finish(acc, err, precision)
            if op is not PostOp.IDENTITY:
                y = post_op(run.spec, x, y, n_terms, precision, run.literal)
        compute_cycles += params.per_output_overhead
        fsm.goto(FsmState.EMIT_OUTPUT, y[0])
        outputs.append(float(y[0]))
    fsm.goto(FsmState.DONE)

    report = CycleReport(
        fill_cycles=fill_cycles,
        per_output_cycles=params.cycles_per_term * n_terms + params.per_output_overhead,
        total_without_buffers=compute_cycles,
        total_with_buffers=compute_cycles + fill_cycles,
    )
    return EngineResult(outputs, report, trace)


def params_from_latency_table(n_inputs: int, n_terms: int, fill: int, per_output: int,
                              total_without_buffers: int, total_with_buffers: int,
                              cycles_per_term: int = 24) -> CycleModelParams:
    """Derive model parameters from a single measured latency table.

    A single shape cannot separate the per-term slope from the per-output
    overhead, so ``cycles_per_term`` must be supplied; the rest is forced.
    """
    if total_with_buffers - total_without_buffers != fill:
        raise DomainError("with/without-buffer totals differ by something other than the fill")
    if fill % n_inputs:
        raise DomainError(f"fill cycles {fill} are not a multiple of {n_inputs} inputs")
    return CycleModelParams(
        fill_cycles_per_value=fill // n_inputs,
        cycles_per_term=cycles_per_term,
        per_output_overhead=per_output - cycles_per_term * n_terms,
        full_op_overhead=total_without_buffers - n_inputs * per_output,
    )


def calibrate_cycle_model(observations: Sequence[Sequence[int]],
                          base: CycleModelParams = CycleModelParams()) -> CycleModelParams:
    """Least-squares fit of the cycle model to measured totals.

    Each observation is ``(n_inputs, n_terms, total_without_buffers)`` or
    ``(n_inputs, n_terms, total_without_buffers, total_with_buffers)``.
    The fill rate is fitted from four-element observations when present and
    taken from ``base`` otherwise.
    """
    obs = [tuple(int(v) for v in o) for o in observations]
    if len(obs) < 4:
        raise UnderdeterminedError(f"need at least 4 observations, got {len(obs)}")
    if any(len(o) not in (3, 4) for o in obs):
        raise DomainError("observations are (n_inputs, n_terms, total[, total_with_buffers])")
    n_in = np.array([o[0] for o in obs], dtype=np.float64)
    n_t = np.array([o[1] for o in obs], dtype=np.float64)
    totals = np.array([o[2] for o in obs], dtype=np.float64)
    if np.any(n_in < 1) or np.any(n_t < 1):
        raise BoundsError("observation shapes must be >= 1")

    missing = []
    if len(set(n_t)) < 2:
        missing.append("cycles_per_term vs per_output_overhead (all observations share "
                       f"n_terms={int(n_t[0])})")
    if len(set(n_in)) < 2:
        missing.append("per-output cost vs full_op_overhead (all observations share "
                       f"n_inputs={int(n_in[0])})")
    design = np.column_stack([n_in * n_t, n_in, np.ones_like(n_in)])
    if not missing and np.linalg.matrix_rank(design) < 3:
        missing.append("the (n_inputs*n_terms, n_inputs, 1) design matrix is rank deficient")
    if missing:
        raise UnderdeterminedError("cannot identify " + "; ".join(missing))

    coef, *_ = np.linalg.lstsq(design, totals, rcond=None)
    cpt, overhead, full = (int(round(c)) for c in coef)

    fill_rate = base.fill_cycles_per_value
    buffered = [o for o in obs if len(o) == 4]
    if buffered:
        counts = np.array([o[0] for o in buffered], dtype=np.float64)
        fills = np.array([o[3] - o[2] for o in buffered], dtype=np.float64)
        fill_rate = int(round(float(counts @ fills / (counts @ counts))))
    return CycleModelParams(fill_rate, cpt, overhead, full)
