"""Per-layer search for the shortest series meeting an accuracy budget.

For each approximable activation layer, in forward order, the search starts
at the series length where that activation has converged and steps down
towards ``lower_limit`` while the model accuracy (earlier layers already
approximated, later layers exact) stays within the deviation budget of the
exact model. If the assembled model still misses the budget, the per-layer
upper limits are raised and the whole pass is repeated, a bounded number of
times.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

from .activations import convergence_threshold
from .errors import BoundsError, DomainError
from .nn import ApproxModel, Dataset, NetworkModel
from .series import MAX_TERMS, Precision

# Accuracies are ratios of counts; this absorbs the rounding of their difference.
_BUDGET_SLACK = 1e-12

CandidateHook = Callable[[int, int, Sequence["LayerApproxRecord"], float], None]


@dataclass(frozen=True)
class SearchConfig:
    deviation_budget: float = 0.01
    lower_limit: int = 1
    upper_limit_tol: float = 1e-6
    max_recursion_depth: int = 3
    eval_subset_size: Optional[int] = None
    precision: Precision = Precision.DOUBLE
    literal: bool = False

    def __post_init__(self) -> None:
        if not 0 <= self.deviation_budget <= 1:
            raise DomainError(f"deviation budget must lie in [0, 1], got {self.deviation_budget}")
        if not 1 <= self.lower_limit <= MAX_TERMS:
            raise BoundsError(f"lower_limit must lie in [1, {MAX_TERMS}], got {self.lower_limit}")
        if self.max_recursion_depth < 1:
            raise BoundsError("max_recursion_depth must be >= 1")
        if not self.upper_limit_tol > 0:
            raise DomainError("upper_limit_tol must be positive")


@dataclass(frozen=True)
class LayerApproxRecord:
    layer_index: int
    n_terms: int
    est_accuracy: float


@dataclass
class ApproxPlan:
    records: list[LayerApproxRecord]
    baseline_accuracy: float
    final_accuracy: float
    budget: float
    precision: Precision = Precision.DOUBLE
    deviation_achieved: float = field(init=False)

    def __post_init__(self) -> None:
        self.records = sorted(self.records, key=lambda r: r.layer_index)
        self.deviation_achieved = self.baseline_accuracy - self.final_accuracy

    @property
    def over_budget(self) -> bool:
        return self.deviation_achieved > self.budget + _BUDGET_SLACK

    @property
    def n_terms(self) -> dict[int, int]:
        return {r.layer_index: r.n_terms for r in self.records}

    @property
    def mean_terms(self) -> float:
        return sum(r.n_terms for r in self.records) / len(self.records) if self.records else 0.0

    def to_dict(self) -> dict:
        return {
            "budget": self.budget,
            "precision": self.precision.value,
            "baseline_accuracy": self.baseline_accuracy,
            "final_accuracy": self.final_accuracy,
            "deviation_achieved": self.deviation_achieved,
            "over_budget": self.over_budget,
            "records": [asdict(r) for r in self.records],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "ApproxPlan":
        try:
            records = [LayerApproxRecord(int(r["layer_index"]), int(r["n_terms"]),
                                         float(r["est_accuracy"])) for r in doc["records"]]
            return cls(records, float(doc["baseline_accuracy"]), float(doc["final_accuracy"]),
                       float(doc["budget"]), Precision(doc.get("precision", "double")))
        except (KeyError, TypeError, ValueError) as exc:
            raise DomainError(f"malformed plan document: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "ApproxPlan":
        return cls.from_dict(json.loads(Path(path).read_text()))


def list_target_activations(model: NetworkModel) -> list[int]:
    return [i for i, layer in enumerate(model.layers) if layer.activation is not None]


def approximate(model: NetworkModel, records: Sequence[LayerApproxRecord],
                precision: Precision = Precision.DOUBLE, literal: bool = False) -> ApproxModel:
    targets = set(list_target_activations(model))
    for r in records:
        if r.layer_index not in targets:
            raise DomainError(f"layer {r.layer_index} has no approximable activation")
    return ApproxModel(model, {r.layer_index: r.n_terms for r in records}, precision, literal)


def evaluate_model(model: NetworkModel | ApproxModel, data: Dataset,
                   plan: Optional[ApproxPlan] = None,
                   precision: Optional[Precision] = None) -> float:
    """Top-1 accuracy, with ``plan``'s layers approximated when given."""
    if isinstance(model, ApproxModel):
        if plan is not None:
            raise DomainError("pass either an approximated model or a plan, not both")
        return model.accuracy(data)
    if plan is None:
        return ApproxModel(model).accuracy(data)
    if precision is None:
        precision = plan.precision
    return approximate(model, plan.records, precision).accuracy(data)


def upper_limit(model: NetworkModel, layer_index: int, config: SearchConfig) -> int:
    """Series length at which the layer's activation has converged."""
    spec = model.layers[layer_index].activation
    n = convergence_threshold(spec, config.upper_limit_tol, MAX_TERMS, config.precision, config.literal)
    return max(n or MAX_TERMS, config.lower_limit)


def _exceeds(baseline: float, accuracy: float, budget: float) -> bool:
    return baseline - accuracy > budget + _BUDGET_SLACK


def iterative_search_layer(model: NetworkModel, data: Dataset, layer_index: int,
                           partial_plan: Sequence[LayerApproxRecord], config: SearchConfig,
                           baseline: Optional[float] = None, upper: Optional[int] = None,
                           on_candidate: Optional[CandidateHook] = None,
                           workers: int = 1) -> tuple[int, float]:
    """Return ``(n_terms, accuracy)`` for one layer.

    Candidates are visited from ``upper`` downwards; the scan stops at the
    first length that breaks the budget and the last passing length wins.
    If ``upper`` itself breaks the budget it is returned with its accuracy.
    """
    if layer_index not in list_target_activations(model):
        raise DomainError(f"layer {layer_index} has no approximable activation")
    data = data.head(config.eval_subset_size)
    if baseline is None:
        baseline = evaluate_model(model, data)
    if upper is None:
        upper = upper_limit(model, layer_index, config)
    fixed = {r.layer_index: r.n_terms for r in partial_plan}

    def score(n: int) -> float:
        view = ApproxModel(model, {**fixed, layer_index: n}, config.precision, config.literal)
        acc = view.accuracy(data)
        if on_candidate is not None:
            on_candidate(layer_index, n, tuple(partial_plan), acc)
        return acc

    candidates = range(upper, config.lower_limit - 1, -1)
    lookup = score
    if workers > 1:
        # score everything up front; the selection below is unchanged
        with ThreadPoolExecutor(workers) as pool:
            lookup = dict(zip(candidates, pool.map(score, candidates))).__getitem__

    best = (upper, lookup(upper))
    if _exceeds(baseline, best[1], config.deviation_budget):
        return best
    for n in candidates[1:]:
        acc = lookup(n)
        if _exceeds(baseline, acc, config.deviation_budget):
            break
        best = (n, acc)
    return best


def run_approximator(model: NetworkModel, data: Dataset, config: SearchConfig = SearchConfig(),
                     on_candidate: Optional[CandidateHook] = None,
                     workers: int = 1) -> ApproxPlan:
    targets = list_target_activations(model)
    if not targets:
        raise DomainError("model has no activation layers to approximate")
    data = data.head(config.eval_subset_size)
    data.check_compatible(model)
    baseline = evaluate_model(model, data)
    limits = {i: upper_limit(model, i, config) for i in targets}

    best: Optional[ApproxPlan] = None
    for _ in range(config.max_recursion_depth):
        records: list[LayerApproxRecord] = []
        for i in targets:
            n, acc = iterative_search_layer(model, data, i, records, config, baseline,
                                            limits[i], on_candidate, workers)
            records.append(LayerApproxRecord(i, n, acc))
            if _exceeds(baseline, acc, config.deviation_budget):
                break
        final = approximate(model, records, config.precision, config.literal).accuracy(data)
        plan = ApproxPlan(records, baseline, final, config.deviation_budget, config.precision)
        if best is None or plan.deviation_achieved < best.deviation_achieved:
            best = plan
        if not plan.over_budget:
            break
        raised = {i: min(MAX_TERMS, math.ceil(1.5 * n)) for i, n in limits.items()}
        if raised == limits:
            break
        limits = raised
    return best
