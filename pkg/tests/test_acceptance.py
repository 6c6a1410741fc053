"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest -m acceptance -s`` to see the summary lines inline;
they are also written to the terminal when output is captured.
"""
import contextlib
import io
import json
import time

import numpy as np
import pytest

from tytan.activations import ActivationKind, ActivationSpec, approx_activation, sweep_error
from tytan.cli import main
from tytan.engine import (CycleModelParams, EngineRun, FsmState, calibrate_cycle_model,
                          predict_cycles, run_engine)
from tytan.nn import bundled_dataset, bundled_model
from tytan.search import SearchConfig, evaluate_model, run_approximator, upper_limit
from tytan.series import Precision, SeriesKind, gen_coefficients, horner_eval, power_sum_eval

pytestmark = pytest.mark.acceptance

ALL = [ActivationSpec(k) for k in ActivationKind]


@pytest.fixture
def verdict(capsys):
    """Print one summary line per criterion, then fail on any broken check."""
    def report(label, failures, elapsed, limit):
        if elapsed >= limit:
            failures = failures + [f"runtime {elapsed:.2f} s >= {limit} s"]
        status = "PASS" if not failures else "FAIL"
        with capsys.disabled():
            print(f"\n[{status}] {label} ({elapsed:.2f} s)" + "".join(f"\n    - {f}" for f in failures))
        assert not failures, failures
    return report


def cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main(list(argv))
    return code, out.getvalue()


def test_cycle_model_goldens(verdict):
    start = time.perf_counter()
    failures = []
    golden = {"fill": 120, "per_output": 747, "total_no_buf": 22474, "total_buf": 22594}
    if predict_cycles(30, 30).to_dict() != golden:
        failures.append(f"predict_cycles gave {predict_cycles(30, 30).to_dict()}")
    code, out = cli("predict-cycles", "--inputs", "30", "--terms", "30", "--buffers")
    if (code, out) != (0, "22594\n"):
        failures.append(f"predict-cycles printed {out!r}")
    code, out = cli("predict-cycles", "--inputs", "30", "--terms", "30")
    if (code, out) != (0, "22474\n"):
        failures.append(f"predict-cycles without buffers printed {out!r}")
    code, out = cli("simulate")
    if code != 0 or json.loads(out)["cycles"] != golden:
        failures.append(f"simulate reported {out!r}")
    verdict("1 cycle-model goldens 120/747/22474/22594", failures, time.perf_counter() - start, 1.0)


def test_oracle_equivalence(verdict):
    rng = np.random.default_rng(20240601)
    xs = rng.uniform(-10, 10, 10_000)
    ns = rng.integers(1, 41, 10_000)
    kinds = [(SeriesKind.EXP, SeriesKind.LOG1P)[i] for i in rng.integers(0, 2, 10_000)]
    start = time.perf_counter()
    failures = []
    for x, n, kind in zip(xs.tolist(), ns.tolist(), kinds):
        table = gen_coefficients(kind, n)
        got, want = horner_eval(table, x), power_sum_eval(table, x)
        ok = abs(got - want) <= (1e-15 if abs(want) < 1e-3 else 1e-12 * abs(want))
        if not ok and len(failures) < 5:
            failures.append(f"{kind.value} n={n} x={x!r}: {got!r} vs {want!r}")
    verdict("2 oracle equivalence, 10000 triples", failures, time.perf_counter() - start, 1.0)


def test_convergence_suite(verdict):
    start = time.perf_counter()
    failures = []
    for spec in ALL:
        errs = [sweep_error(spec, n).max_abs_err for n in range(1, 41)]
        limit = 1e-5 if spec.kind is ActivationKind.TANH else 1e-6
        if errs[-1] > limit:
            failures.append(f"{spec.kind.value}: double error {errs[-1]:.3g} > {limit:g} at n=40")
        rises = [n + 2 for n, (a, b) in enumerate(zip(errs, errs[1:])) if b > a + 1e-13]
        if rises:
            failures.append(f"{spec.kind.value}: error rises at n={rises}")
        single = sweep_error(spec, 40, precision=Precision.SINGLE).max_abs_err
        if single > 1e-2:
            failures.append(f"{spec.kind.value}: single error {single:.3g} > 1e-2 at n=40")
    verdict("3 convergence of all six activations", failures, time.perf_counter() - start, 5.0)


def test_fsm_direct_equivalence(verdict):
    rng = np.random.default_rng(11)
    start = time.perf_counter()
    failures = []
    for i in range(1000):
        spec = ALL[rng.integers(len(ALL))]
        n = int(rng.integers(1, 41))
        precision = Precision.SINGLE if rng.integers(2) else Precision.DOUBLE
        xs = rng.uniform(-8, 8, int(rng.integers(1, 9))).tolist()
        run = EngineRun(xs, gen_coefficients(SeriesKind.EXP, n), spec.post_op, spec, precision,
                        trace_enabled=True)
        result = run_engine(run)
        direct = [approx_activation(spec, x, n, precision) for x in xs]
        states = [e.state for e in result.trace]
        counts_ok = (len(states) == 4 + len(xs) * (n + 2)
                     and states.count(FsmState.COMPUTE_MAC) == len(xs) * n
                     and states.count(FsmState.POST_OP) == len(xs)
                     and states.count(FsmState.EMIT_OUTPUT) == len(xs))
        if (result.outputs != direct or not counts_ok) and len(failures) < 5:
            failures.append(f"run {i}: {spec.kind.value} n={n} {precision.value}")
    verdict("4 FSM/direct equivalence, 1000 runs", failures, time.perf_counter() - start, 5.0)


def test_search_trend(verdict):
    model, data = bundled_model(), bundled_dataset()
    start = time.perf_counter()
    failures = []
    means = []
    for budget in (0.010, 0.005, 0.0025):
        config = SearchConfig(deviation_budget=budget)
        plan = run_approximator(model, data, config)
        means.append(plan.mean_terms)
        if plan.deviation_achieved > budget + 1e-12 and not plan.over_budget:
            failures.append(f"budget {budget}: deviation {plan.deviation_achieved} not flagged")
        for r in plan.records:
            hi = upper_limit(model, r.layer_index, config)
            if not config.lower_limit <= r.n_terms <= hi:
                failures.append(f"budget {budget}: layer {r.layer_index} n={r.n_terms} outside [1, {hi}]")
    if means != sorted(means):
        failures.append(f"mean terms not non-decreasing: {means}")
    verdict(f"5 search trend, mean terms {[round(m, 3) for m in means]}", failures,
            time.perf_counter() - start, 60.0)


def test_search_determinism_and_soundness(verdict, tmp_path):
    model, data = bundled_model(), bundled_dataset()
    start = time.perf_counter()
    failures = []
    for budget in (0.0, 0.0025, 0.005, 0.01, 0.05, 0.5):
        for precision in Precision:
            plan = run_approximator(model, data, SearchConfig(deviation_budget=budget, precision=precision))
            again = evaluate_model(model, data, plan)
            if again != plan.final_accuracy:
                failures.append(f"budget {budget} {precision.value}: {again} != {plan.final_accuracy}")
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    codes = [cli("search", "--budget", "0.01", "--out", str(p))[0] for p in (a, b)]
    if codes != [0, 0] or a.read_bytes() != b.read_bytes():
        failures.append("repeated search invocations differ")
    verdict("6 search determinism and soundness", failures, time.perf_counter() - start, 120.0)


def test_calibration_round_trip(verdict):
    start = time.perf_counter()
    params = CycleModelParams()
    shapes = [(1, 1), (30, 30), (7, 12), (64, 40), (16, 64), (3, 5)]
    obs = []
    for n_inputs, n_terms in shapes:
        r = predict_cycles(n_inputs, n_terms, params=params)
        obs.append((n_inputs, n_terms, r.total_without_buffers, r.total_with_buffers))
    fitted = calibrate_cycle_model(obs)
    failures = [] if fitted == params else [f"recovered {fitted}"]
    verdict("7 calibration round trip", failures, time.perf_counter() - start, 1.0)
