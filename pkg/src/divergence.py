"""Kullback-Leibler divergence, partition models, approximation-error bounds
and explicit witnesses for distributions an RBM approximates arbitrarily well."""

from __future__ import annotations

from dataclasses import dataclass
import itertools
import logging
import math
from typing import Any, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp, rel_entr

from coding import max_code_size
from models import (
    DiscreteRBM,
    Distribution,
    ParameterError,
    ThetaMatrix,
    feature_expectations,
    log_marginal_unnormalized,
)
from rbm_settings import DEFAULT_SETTINGS, SURROGATE_MAGNITUDE, Settings
from statespace import State, StateSpace


log = logging.getLogger(__name__)

WITNESS_KINDS = ("disjoint-mixture", "partition", "line-support")


class HypothesisError(ValueError):
    pass


def kl_divergence(p: Distribution, q: Distribution) -> float:
    """D(p || q), infinite when p puts mass where q has none."""
    if p.space != q.space:
        raise ParameterError("divergence needs distributions on the same space")
    return float(np.sum(rel_entr(p.probs, q.probs)))


@dataclass(frozen=True)
class PartitionModel:
    """Block-uniform distributions; blocks fix the variables in `fixed`."""

    space: StateSpace
    fixed: frozenset[int]

    def __post_init__(self):
        fixed = frozenset(int(i) for i in self.fixed)
        if any(not 0 <= i < self.space.n for i in fixed):
            raise ParameterError(f"fixed variables {sorted(fixed)} outside 0..{self.space.n - 1}")
        object.__setattr__(self, "fixed", fixed)

    @property
    def free(self) -> list[int]:
        return [i for i in range(self.space.n) if i not in self.fixed]

    @property
    def block_size(self) -> int:
        return math.prod(self.space.cards[i] for i in self.free)

    @property
    def block_count(self) -> int:
        return self.space.size // self.block_size

    def block_index(self) -> np.ndarray:
        fixed = sorted(self.fixed)
        if not fixed:
            return np.zeros(self.space.size, dtype=int)
        states = self.space.states()[:, fixed]
        return np.ravel_multi_index(states.T, [self.space.cards[i] for i in fixed])

    def block_masses(self, p: Distribution) -> np.ndarray:
        return np.bincount(self.block_index(), weights=p.probs, minlength=self.block_count)

    def mixture_components_needed(self) -> int:
        """Product distributions with disjoint supports needed to express the model."""
        if not self.fixed:
            return 1
        cards = [self.space.cards[i] for i in self.fixed]
        return math.prod(cards) // max(cards)

    def to_json(self) -> dict[str, Any]:
        return {
            "space": self.space.to_json(),
            "fixed": sorted(self.fixed),
            "block_size": self.block_size,
        }


def project_to_partition(p: Distribution, model: PartitionModel) -> Distribution:
    masses = model.block_masses(p)
    return Distribution(p.space, masses[model.block_index()] / model.block_size)


def partition_divergence(p: Distribution, model: PartitionModel) -> float:
    return kl_divergence(p, project_to_partition(p, model))


def hidden_capacity(hidden: StateSpace) -> int:
    """d_Y = 1 + sum_j (|Y_j| - 1)."""
    return hidden.d


@dataclass(frozen=True)
class KLBound:
    value: float
    lambda_set: tuple[int, ...]
    model: PartitionModel

    def to_json(self) -> dict[str, Any]:
        return {
            "value": self.value,
            "lambda": list(self.lambda_set),
            "partition": self.model.to_json(),
        }


def _model_for_lambda(space: StateSpace, lambda_set: Sequence[int]) -> PartitionModel:
    widest = max(lambda_set, key=lambda i: (space.cards[i], -i))
    fixed = (set(range(space.n)) - set(lambda_set)) | {widest}
    return PartitionModel(space, frozenset(fixed))


def kl_upper_bound(visible: StateSpace, hidden: StateSpace) -> KLBound:
    """Smallest log(prod_Lambda / max_Lambda) over Lambda with prod of the rest <= d_Y."""
    capacity = hidden_capacity(hidden)
    best: KLBound | None = None
    for size in range(1, visible.n + 1):
        for lambda_set in itertools.combinations(range(visible.n), size):
            rest = math.prod(visible.cards[i] for i in range(visible.n) if i not in lambda_set)
            if rest > capacity:
                continue
            inside = [visible.cards[i] for i in lambda_set]
            value = math.log(math.prod(inside) / max(inside))
            if best is None or value < best.value:
                best = KLBound(value, lambda_set, _model_for_lambda(visible, lambda_set))
    return best


def best_partition_model(visible: StateSpace, hidden: StateSpace) -> PartitionModel:
    return kl_upper_bound(visible, hidden).model


@dataclass(frozen=True)
class UniversalityVerdict:
    verdict: str
    reason: str
    capacity: int
    threshold: float
    hidden_size: int
    code_size: int

    def to_json(self) -> dict[str, Any]:
        return {
            "verdict": self.verdict,
            "reason": self.reason,
            "d_Y": self.capacity,
            "threshold": self.threshold,
            "hidden_states": self.hidden_size,
            "distance_two_code": self.code_size,
        }


def universality_verdict(visible: StateSpace, hidden: StateSpace) -> UniversalityVerdict:
    capacity = hidden_capacity(hidden)
    threshold = visible.size / visible.max_card
    code_size = max_code_size(visible, 2).value
    if capacity * visible.max_card >= visible.size:
        verdict, reason = "universal", f"d_Y = {capacity} >= |X| / max|X_i| = {threshold:g}"
    elif hidden.size < code_size:
        verdict, reason = (
            "not-universal",
            f"|Y| = {hidden.size} < {code_size}, the largest distance-2 code",
        )
    else:
        verdict, reason = "unknown", "neither the sufficient nor the necessary condition decides"
    return UniversalityVerdict(verdict, reason, capacity, threshold, hidden.size, code_size)


@dataclass(frozen=True)
class ProductComponent:
    weight: float
    marginals: tuple[np.ndarray, ...]

    def support(self, i: int) -> set[int]:
        return set(np.flatnonzero(np.asarray(self.marginals[i]) > 0).tolist())


@dataclass(frozen=True)
class SupportLine:
    """{anchor with coordinate `free` replaced by any value}."""

    free: int
    anchor: State

    def contains(self, state: Sequence[int]) -> bool:
        return all(a == b for i, (a, b) in enumerate(zip(state, self.anchor)) if i != self.free)


@dataclass(frozen=True)
class PartitionTarget:
    model: PartitionModel
    target: Distribution


@dataclass(frozen=True)
class LineSupportTarget:
    target: Distribution
    lines: tuple[SupportLine, ...]


def _check_components(space: StateSpace, components: Sequence[ProductComponent], capacity: int):
    if not components:
        raise HypothesisError("a mixture needs at least one component")
    if len(components) > capacity:
        raise HypothesisError(f"{len(components)} components exceed d_Y = {capacity}")
    total = sum(component.weight for component in components)
    if abs(total - 1.0) > 1e-9 or any(component.weight <= 0 for component in components):
        raise HypothesisError("component weights must be positive and sum to one")
    for component in components:
        if len(component.marginals) != space.n:
            raise HypothesisError("every component needs one marginal per visible variable")
        for marginal, card in zip(component.marginals, space.cards):
            marginal = np.asarray(marginal, dtype=float)
            if marginal.shape != (card,) or np.any(marginal < 0) or abs(marginal.sum() - 1) > 1e-9:
                raise HypothesisError("marginals must be probability vectors of the right length")
    for a, b in itertools.combinations(components, 2):
        if not any(not (a.support(i) & b.support(i)) for i in range(space.n)):
            raise HypothesisError("component supports intersect")


def _log_linear_parameter(space: StateSpace, component: ProductComponent, penalty: float) -> np.ndarray:
    """Parameter whose log-weights are log(w q(x)) on the support, minus `penalty` per violated variable."""
    param = np.zeros(space.d)
    param[0] = math.log(component.weight)
    row = 1
    for marginal, card in zip(component.marginals, space.cards):
        marginal = np.asarray(marginal, dtype=float)
        with np.errstate(divide="ignore"):
            logits = np.where(marginal > 0, np.log(marginal), -penalty)
        param[0] += logits[0]
        param[row:row + card - 1] = logits[1:] - logits[0]
        row += card - 1
    return param


def _mixture_witness(
    visible: StateSpace, hidden: StateSpace, components: Sequence[ProductComponent]
) -> ThetaMatrix:
    """Row 0 carries the first component; row k carries component k minus row 0.

    Hidden states with several active slots only see states outside at least
    all but one support, so the heavier penalty of the later components keeps
    their weight below exp(-SURROGATE_MAGNITUDE).
    """
    capacity = hidden.d
    _check_components(visible, components, capacity)
    ordered = sorted(components, key=lambda component: -component.weight)
    first = ordered[0]
    base_penalty = SURROGATE_MAGNITUDE
    slack = -math.log(first.weight) + sum(
        max(-math.log(float(value)) for value in np.asarray(marginal) if value > 0)
        for marginal in first.marginals
    )
    penalty = SURROGATE_MAGNITUDE * (visible.n + 1) + slack
    base = _log_linear_parameter(visible, first, base_penalty)
    rows = [base]
    for component in ordered[1:]:
        rows.append(_log_linear_parameter(visible, component, penalty) - base)
    unused = np.zeros(visible.d)
    unused[0] = -(SURROGATE_MAGNITUDE + slack)
    rows.extend([unused] * (capacity - len(rows)))
    return ThetaMatrix(np.vstack(rows))


def _partition_components(payload: PartitionTarget) -> list[ProductComponent]:
    model, target = payload.model, payload.target
    if model.space != target.space:
        raise HypothesisError("partition model and target live on different spaces")
    if not np.allclose(project_to_partition(target, model).probs, target.probs, atol=1e-12):
        raise HypothesisError("target is not constant on the partition blocks")
    space = model.space
    uniform = [np.full(card, 1.0 / card) for card in space.cards]
    if not model.fixed:
        return [ProductComponent(1.0, tuple(uniform))]
    widest = max(model.fixed, key=lambda i: (space.cards[i], -i))
    others = sorted(model.fixed - {widest})
    table = target.probs.reshape(space.cards)
    components = []
    for values in itertools.product(*(range(space.cards[i]) for i in others)):
        index: list[Any] = [slice(None)] * space.n
        for i, value in zip(others, values):
            index[i] = value
        sub = table[tuple(index)]
        # sub keeps the axes of the non-fixed-other variables in order
        kept = [i for i in range(space.n) if i not in others]
        axis = kept.index(widest)
        masses = sub.sum(axis=tuple(a for a in range(sub.ndim) if a != axis))
        weight = float(masses.sum())
        if weight <= 0:
            continue
        marginals = list(uniform)
        marginals[widest] = masses / weight
        for i, value in zip(others, values):
            marginals[i] = np.eye(space.cards[i])[value]
        components.append(ProductComponent(weight, tuple(marginals)))
    return _renormalized(components)


def _line_components(payload: LineSupportTarget) -> list[ProductComponent]:
    target, lines = payload.target, payload.lines
    space = target.space
    assigned: list[list[int]] = [[] for _ in lines]
    for x in target.support():
        state = space.state_at(int(x))
        for k, line in enumerate(lines):
            if line.contains(state):
                assigned[k].append(int(x))
                break
        else:
            raise HypothesisError(f"state {state} lies outside every support line")
    components = []
    for line, members in zip(lines, assigned):
        weight = float(target.probs[members].sum()) if members else 0.0
        if weight <= 0:
            continue
        marginals = [np.eye(card)[value] for card, value in zip(space.cards, line.anchor)]
        free = np.zeros(space.cards[line.free])
        for x in members:
            free[space.state_at(x)[line.free]] += target.probs[x]
        marginals[line.free] = free / weight
        components.append(ProductComponent(weight, tuple(marginals)))
    return _renormalized(components)


def _renormalized(components: list[ProductComponent]) -> list[ProductComponent]:
    total = sum(component.weight for component in components)
    return [ProductComponent(c.weight / total, c.marginals) for c in components]


def submodel_witness(
    visible: StateSpace, hidden: StateSpace, kind: str, payload: Any
) -> ThetaMatrix:
    """Explicit parameters whose marginal approximates a representable target."""
    if kind == "disjoint-mixture":
        components = list(payload)
    elif kind == "partition":
        components = _partition_components(payload)
    elif kind == "line-support":
        if len(payload.lines) > hidden.d:
            raise HypothesisError(f"{len(payload.lines)} lines exceed d_Y = {hidden.d}")
        components = _line_components(payload)
    else:
        raise ValueError(f"unknown witness kind {kind!r}; expected one of {WITNESS_KINDS}")
    return _mixture_witness(visible, hidden, components)


def partition_witness(visible: StateSpace, hidden: StateSpace, target: Distribution) -> ThetaMatrix:
    """Witness for the projection of `target` onto the best representable partition model."""
    model = best_partition_model(visible, hidden)
    projection = project_to_partition(target, model)
    return submodel_witness(visible, hidden, "partition", PartitionTarget(model, projection))


def _objective(visible: StateSpace, hidden: StateSpace, target: np.ndarray):
    support = target > 0
    entropy = float(np.sum(target[support] * np.log(target[support])))

    def evaluate(vector: np.ndarray) -> tuple[float, np.ndarray]:
        rbm = DiscreteRBM(visible, hidden, ThetaMatrix.from_vector(vector, hidden.d, visible.d))
        log_weights = log_marginal_unnormalized(rbm)
        log_q = log_weights - logsumexp(log_weights)
        value = entropy - float(np.sum(target[support] * log_q[support]))
        features = feature_expectations(rbm)
        gradient = np.exp(log_q) @ features - target @ features
        return value, gradient

    return evaluate


@dataclass(frozen=True)
class DivergenceFit:
    value: float
    theta: ThetaMatrix


def min_divergence(
    visible: StateSpace,
    hidden: StateSpace,
    target: Distribution,
    restarts: int = 20,
    seed: int = 0,
    max_iter: int = 5000,
    starts: Sequence[ThetaMatrix] = (),
) -> DivergenceFit:
    """Smallest D(target || p_theta) found from the partition witness, `starts` and random draws."""
    rng = np.random.default_rng(seed)
    evaluate = _objective(visible, hidden, target.probs)
    initial = [partition_witness(visible, hidden, target), *starts]
    while len(initial) < restarts + len(starts):
        initial.append(ThetaMatrix.random(hidden.d, visible.d, rng))
    best: DivergenceFit | None = None
    for theta in initial:
        start = theta.vectorize()
        start_value, _ = evaluate(start)
        result = minimize(
            evaluate,
            start,
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": max_iter, "gtol": 1e-8},
        )
        value, vector = (float(result.fun), result.x) if result.fun <= start_value else (start_value, start)
        if best is None or value < best.value:
            best = DivergenceFit(value, ThetaMatrix.from_vector(vector, hidden.d, visible.d))
    return best


@dataclass(frozen=True)
class EmpiricalDivergence:
    value: float
    bound: float
    worst_target: str
    targets: int
    restarts: int

    @property
    def residual(self) -> float:
        return self.value - self.bound

    def to_json(self) -> dict[str, Any]:
        return {
            "value": self.value,
            "bound": self.bound,
            "residual": self.residual,
            "worst_target": self.worst_target,
            "targets": self.targets,
            "restarts": self.restarts,
        }


def empirical_max_divergence(
    visible: StateSpace,
    hidden: StateSpace,
    targets: int = 20,
    restarts: int | None = None,
    seed: int = 0,
    settings: Settings = DEFAULT_SETTINGS,
) -> EmpiricalDivergence:
    """Worst fitted divergence over every point mass plus Dirichlet(1) draws."""
    restarts = settings.optimizer_restarts if restarts is None else restarts
    rng = np.random.default_rng(seed)
    candidates = [
        (f"delta:{visible.label(visible.state_at(x))}", Distribution.point_mass(visible, visible.state_at(x)))
        for x in range(visible.size)
    ]
    for k in range(targets):
        candidates.append((f"dirichlet:{k}", Distribution(visible, rng.dirichlet(np.ones(visible.size)))))
    worst_value, worst_label = -math.inf, ""
    for index, (label, target) in enumerate(candidates):
        fit = min_divergence(
            visible, hidden, target, restarts, seed + index, settings.optimizer_max_iter
        )
        if fit.value > worst_value:
            worst_value, worst_label = fit.value, label
    bound = kl_upper_bound(visible, hidden).value
    log.info(
        "empirical max divergence %.6f (bound %.6f) over %d targets",
        worst_value, bound, len(candidates),
    )
    return EmpiricalDivergence(worst_value, bound, worst_label, len(candidates), restarts)
