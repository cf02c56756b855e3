"""Dimension of discrete RBM models: counting, Jacobian rank, the Hadamard
upper bound and code-based certificates.

The certified lower bound comes from the tropical rank; the Jacobian rank is
numerical evidence. Every report checks tropical <= Jacobian <= expected.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
from typing import Any, Callable

import numpy as np

from coding import (
    ball_packing,
    gilbert_varshamov,
    max_code_size,
    min_covering_size,
    prime_power,
)
from models import (
    DiscreteRBM,
    Distribution,
    ThetaMatrix,
    feature_expectations,
    log_marginal_unnormalized,
)
from rbm_settings import DEFAULT_SETTINGS, RANK_GAP, RANK_RELATIVE_THRESHOLD, Settings
from statespace import StateSpace, check_exact_size
from tropical import TropicalDimension, tropical_dimension


log = logging.getLogger(__name__)

MAX_REDRAWS = 3

VERDICTS = ("expected-dimension", "full-dimensional", "defective", "undetermined")


class DimensionChainError(RuntimeError):
    pass


def exponential_dimension(visible: StateSpace, hidden: StateSpace) -> int:
    return visible.d * hidden.d - 1


def expected_dimension(visible: StateSpace, hidden: StateSpace) -> int:
    return min(exponential_dimension(visible, hidden), visible.size - 1)


@dataclass(frozen=True)
class JacobianRank:
    rank: int
    singular_values: tuple[float, ...]
    gap: float
    seed: int
    samples: int
    uncertain: bool

    def to_json(self) -> dict[str, Any]:
        return {
            "rank": self.rank,
            "singular_values": list(self.singular_values),
            "gap": self.gap,
            "seed": self.seed,
            "samples": self.samples,
            "uncertain": self.uncertain,
        }


def jacobian_matrix(rbm: DiscreteRBM) -> np.ndarray:
    """Rows d log p(x) / d theta, one per visible state."""
    features = feature_expectations(rbm)
    p = Distribution.from_log_weights(rbm.visible, log_marginal_unnormalized(rbm)).probs
    return features - p @ features


def _numerical_rank(singular_values: np.ndarray) -> tuple[int, float]:
    if singular_values.size == 0 or singular_values[0] == 0:
        return 0, math.inf
    rank = int(np.sum(singular_values > RANK_RELATIVE_THRESHOLD * singular_values[0]))
    if rank >= singular_values.size:
        return rank, math.inf
    below = singular_values[rank]
    gap = math.inf if below == 0 else float(singular_values[rank - 1] / below)
    return rank, gap


def jacobian_rank(
    visible: StateSpace,
    hidden: StateSpace,
    samples: int = 5,
    seed: int = 0,
    cap: int | None = None,
) -> JacobianRank:
    """Max numerical rank of the log-marginal Jacobian over random standard-normal draws."""
    check_exact_size(visible.size, cap or DEFAULT_SETTINGS.exact_cap)
    rng = np.random.default_rng(seed)
    confident: list[tuple[int, float, np.ndarray]] = []
    doubtful: list[tuple[int, float, np.ndarray]] = []
    for _ in range(samples):
        for _ in range(1 + MAX_REDRAWS):
            theta = ThetaMatrix.random(hidden.d, visible.d, rng)
            jacobian = jacobian_matrix(DiscreteRBM(visible, hidden, theta))
            singular_values = np.linalg.svd(jacobian, compute_uv=False)
            rank, gap = _numerical_rank(singular_values)
            if gap >= RANK_GAP:
                confident.append((rank, gap, singular_values))
                break
            doubtful.append((rank, gap, singular_values))
    pool = confident or doubtful
    rank, gap, singular_values = max(pool, key=lambda item: (item[0], item[1]))
    return JacobianRank(
        rank=rank,
        singular_values=tuple(float(value) for value in singular_values),
        gap=gap,
        seed=seed,
        samples=samples,
        uncertain=not confident,
    )


def mixture_dimension_closed_form(space: StateSpace, k: int) -> int | None:
    """Known dimensions of k-component naive Bayes models; None when no formula applies."""
    if k < 1:
        raise ValueError("a mixture needs at least one component")
    if k == 1:
        return space.d - 1
    if space.n == 1:
        return space.cards[0] - 1
    if space.n == 2:
        rows, cols = space.cards
        if k < min(rows, cols):
            return k * (rows + cols - k) - 1
        return rows * cols - 1
    if set(space.cards) == {2}:
        if (space.n, k) == (4, 3):
            return 13
        return min(space.n * k + k - 1, space.size - 1)
    return None


def mixture_dimension(space: StateSpace, k: int, samples: int = 5, seed: int = 0) -> int:
    closed = mixture_dimension_closed_form(space, k)
    if closed is not None:
        return closed
    return jacobian_rank(space, StateSpace((k,)), samples, seed).rank


@dataclass(frozen=True)
class HadamardBound:
    value: int
    per_unit: tuple[int, ...]
    expected: int

    @property
    def defective(self) -> bool:
        return self.value < self.expected

    def to_json(self) -> dict[str, Any]:
        return {
            "value": self.value,
            "per_unit": list(self.per_unit),
            "defective": self.defective,
        }


def hadamard_upper_bound(
    visible: StateSpace,
    hidden: StateSpace,
    mixture_dims: Callable[[StateSpace, int], int] | None = None,
) -> HadamardBound:
    """Unit i keeps all its states, every other unit drops one and adds a scale."""
    if mixture_dims is None:
        mixture_dims = mixture_dimension
    cards = hidden.cards
    per_unit = []
    for i, s in enumerate(cards):
        bound = mixture_dims(visible, s)
        bound += sum(mixture_dims(visible, t - 1) for j, t in enumerate(cards) if j != i)
        per_unit.append(bound + len(cards) - 1)
    return HadamardBound(min(per_unit), tuple(per_unit), expected_dimension(visible, hidden))


@dataclass(frozen=True)
class ConditionCheck:
    name: str
    fired: bool
    claim: int | None
    detail: str

    def to_json(self) -> dict[str, Any]:
        return {"name": self.name, "fired": self.fired, "claim": self.claim, "detail": self.detail}


@dataclass(frozen=True, eq=False)
class DimensionReport:
    visible: StateSpace
    hidden: StateSpace
    expected: int
    exponential: int
    jacobian: JacobianRank
    tropical: TropicalDimension
    tropical_lower: int
    hadamard: HadamardBound
    conditions: tuple[ConditionCheck, ...]
    verdict: str
    trace: tuple[str, ...] = field(default=())

    def to_json(self) -> dict[str, Any]:
        return {
            "visible": self.visible.to_json(),
            "hidden": self.hidden.to_json(),
            "expected": self.expected,
            "exponential_family_dimension": self.exponential,
            "ambient_dimension": self.visible.size - 1,
            "jacobian": self.jacobian.to_json(),
            "tropical": self.tropical.to_json(),
            "tropical_lower": self.tropical_lower,
            "hadamard_upper": self.hadamard.to_json(),
            "conditions": [condition.to_json() for condition in self.conditions],
            "verdict": self.verdict,
            "trace": list(self.trace),
        }

    def table_row(self) -> list[object]:
        return [
            ",".join(map(str, self.visible.cards)),
            ",".join(map(str, self.hidden.cards)),
            self.expected,
            self.tropical_lower,
            self.jacobian.rank,
            self.hadamard.value,
            self.verdict,
        ]


TABLE_HEADERS = ["visible", "hidden", "expected", "tropical", "jacobian", "hadamard", "verdict"]


def _hamming_length(q: int, n: int) -> int | None:
    r = 2
    while (q ** r - 1) // (q - 1) <= n:
        if (q ** r - 1) // (q - 1) == n:
            return r
        r += 1
    return None


def distance_three_lower_bound(space: StateSpace, node_budget: int) -> tuple[int, str]:
    """A proven lower bound on the largest distance-3 code."""
    if space.n < 3:
        return 1, "single-word"
    candidates = []
    if len(set(space.cards)) == 1:
        q = space.cards[0]
        if prime_power(q) is not None:
            r = _hamming_length(q, space.n)
            if r is not None:
                return q ** (space.n - r), "hamming-code"
        candidates.append((gilbert_varshamov(q, space.n, 3), "gilbert-varshamov"))
    if space.size <= 1024:
        found = max_code_size(space, 3, node_budget)
        candidates.append((found.value, found.method))
    return max(candidates)


def _closed_form_conditions(
    visible: StateSpace, hidden: StateSpace, node_budget: int
) -> list[ConditionCheck]:
    expected = expected_dimension(visible, hidden)
    ambient = visible.size - 1
    m = hidden.n
    checks = []
    binary_hidden = set(hidden.cards) == {2}
    if binary_hidden:
        bound, method = distance_three_lower_bound(visible, node_budget)
        fired = m + 1 <= bound
        checks.append(ConditionCheck(
            "binary-hidden-packing",
            fired,
            expected if fired else None,
            f"m + 1 = {m + 1}, distance-3 code of size {bound} ({method})",
        ))
    radii = [2 * s - 3 for s in hidden.cards]
    if all(radius <= visible.n for radius in radii):
        packing = ball_packing(visible, radii, node_budget)
        fired = packing is not None and packing.complement_full_rank
        checks.append(ConditionCheck(
            "ball-packing",
            fired,
            expected if fired else None,
            f"radii {radii}: " + (
                "not found" if packing is None
                else f"centers {[list(c) for c in packing.centers]}, "
                f"complement full rank {packing.complement_full_rank}"
            ),
        ))
    if ambient not in [check.claim for check in checks]:
        cover = min_covering_size(visible, 1, node_budget)
        allowed = m + 1 if binary_hidden else m
        fired = cover.value <= allowed
        checks.append(ConditionCheck(
            "ball-cover",
            fired,
            ambient if fired else None,
            f"radius-one covering of size {cover.value} ({cover.method}), {allowed} balls available",
        ))
    return checks


def dimension_certificate(
    visible: StateSpace,
    hidden: StateSpace,
    settings: Settings = DEFAULT_SETTINGS,
    seed: int = 0,
) -> DimensionReport:
    expected = expected_dimension(visible, hidden)
    exponential = exponential_dimension(visible, hidden)
    ambient = visible.size - 1
    node_budget = min(settings.code_search_nodes, 200_000)
    trace = [f"expected dimension min({exponential}, {ambient}) = {expected}"]

    conditions = _closed_form_conditions(visible, hidden, node_budget)
    claims = [condition.claim for condition in conditions if condition.fired]
    for condition in conditions:
        trace.append(f"{condition.name}: {'fires' if condition.fired else 'does not fire'}; {condition.detail}")

    tropical = tropical_dimension(
        visible, hidden, settings.search_budget, seed, node_budget, settings.exact_cap
    )
    trace.append(f"tropical search: {tropical.value} ({tropical.label}, {tropical.family})")
    lower = max([tropical.value, *claims])

    jacobian = jacobian_rank(visible, hidden, settings.jacobian_samples, seed, settings.exact_cap)
    trace.append(
        f"jacobian rank {jacobian.rank} over {settings.jacobian_samples} draws"
        + (" (rank uncertain)" if jacobian.uncertain else "")
    )
    if not lower <= jacobian.rank <= expected:
        raise DimensionChainError(
            f"tropical {lower} <= jacobian {jacobian.rank} <= expected {expected} fails"
            f" for {list(visible.cards)} x {list(hidden.cards)}"
        )

    hadamard = hadamard_upper_bound(
        visible,
        hidden,
        lambda space, k: mixture_dimension(space, k, settings.jacobian_samples, seed),
    )
    trace.append(f"hadamard upper bound {hadamard.value}")

    confident = not jacobian.uncertain
    if lower >= expected or (confident and jacobian.rank == expected):
        source = "certified" if lower >= expected else "numerical"
        if expected == ambient and ambient < exponential:
            verdict = "full-dimensional"
        else:
            verdict = "expected-dimension"
        trace.append(f"{verdict} ({source})")
    elif hadamard.defective or (confident and jacobian.rank < expected):
        verdict = "defective"
        trace.append(
            "defective: "
            + ("hadamard bound below expected" if hadamard.defective else "jacobian rank below expected")
        )
    else:
        verdict = "undetermined"
        trace.append("undetermined: no certificate and no confident rank")
    log.info("dimension of %s x %s: %s", list(visible.cards), list(hidden.cards), verdict)
    return DimensionReport(
        visible=visible,
        hidden=hidden,
        expected=expected,
        exponential=exponential,
        jacobian=jacobian,
        tropical=tropical,
        tropical_lower=lower,
        hadamard=hadamard,
        conditions=tuple(conditions),
        verdict=verdict,
        trace=tuple(trace),
    )
