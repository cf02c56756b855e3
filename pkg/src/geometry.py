"""Normal fans, slicings, inference functions and strong modes."""

from __future__ import annotations

from dataclasses import dataclass
import itertools
import logging
import math
from typing import Any, Callable, Sequence

import numpy as np
from scipy.optimize import brentq, linprog

from coding import Code
from models import DiscreteRBM, Distribution, ThetaMatrix, rbm_marginal
from rbm_settings import GENERICITY_MARGIN
from statespace import (
    State,
    StateSpace,
    StateSpaceError,
    build_statistics,
)


log = logging.getLogger(__name__)

_LP_BOUND = 1e3


class NonGenericError(ValueError):
    def __init__(self, message: str, state: State | None = None):
        super().__init__(message)
        self.state = state


class CodeDistanceError(ValueError):
    pass


def _statistics_matrix(space: StateSpace) -> np.ndarray:
    return build_statistics(space).matrix.astype(float)


def normal_cone_contains(
    space: StateSpace, x: Sequence[int], v: np.ndarray, strict: bool = False
) -> bool:
    v = np.asarray(v, dtype=float)
    if v.shape != (space.d,):
        raise StateSpaceError(f"vector has length {v.size}, expected {space.d}")
    scores = v @ _statistics_matrix(space)
    index = space.index_of(x)
    others = np.delete(scores, index)
    if strict:
        return bool(np.all(scores[index] > others))
    return bool(np.all(scores[index] >= others))


@dataclass(frozen=True, eq=False)
class NormalCone:
    """Cone of v maximizing <v, A_x> at the apex; cut out by the Hamming edges."""

    space: StateSpace
    apex: State
    facets: np.ndarray

    def contains(self, v: np.ndarray, strict: bool = False) -> bool:
        values = self.facets @ np.asarray(v, dtype=float)
        return bool(np.all(values > 0)) if strict else bool(np.all(values >= 0))


def normal_cone(space: StateSpace, x: Sequence[int]) -> NormalCone:
    apex = space.validate(x)
    stats = build_statistics(space)
    column = stats.column(apex).astype(float)
    facets = []
    for i, card in enumerate(space.cards):
        for value in range(card):
            if value != apex[i]:
                neighbor = list(apex)
                neighbor[i] = value
                facets.append(column - stats.column(neighbor))
    return NormalCone(space, apex, np.array(facets))


@dataclass(frozen=True)
class ParallelRealizer:
    """Scores lambda(x) * r_y - b_y with lambda(x) = offset + scale * <v, A_x>."""

    r: tuple[float, ...]
    b: tuple[float, ...]
    scale: float = 1.0
    offset: float = 0.0

    def to_json(self) -> dict[str, Any]:
        return {"r": list(self.r), "b": list(self.b), "scale": self.scale, "offset": self.offset}


@dataclass(frozen=True, eq=False)
class Slicing:
    visible: StateSpace
    hidden: StateSpace
    assignment: np.ndarray
    theta: ThetaMatrix | None = None
    realizer: ParallelRealizer | None = None

    def __post_init__(self):
        assignment = np.array(self.assignment, dtype=int)
        if assignment.shape != (self.visible.size,):
            raise StateSpaceError("a slicing assigns exactly one cell to every visible state")
        if np.any(assignment < 0) or np.any(assignment >= self.hidden.size):
            raise StateSpaceError("cell labels must be hidden state indices")
        assignment.setflags(write=False)
        object.__setattr__(self, "assignment", assignment)

    def cells(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.assignment == y) for y in range(self.hidden.size)]

    def key(self) -> tuple[int, ...]:
        return tuple(int(y) for y in self.assignment)

    def to_json(self) -> dict[str, Any]:
        return {
            "theta": None if self.theta is None else self.theta.to_json(),
            "cells": {str(y): cell.tolist() for y, cell in enumerate(self.cells())},
        }


def slicing_from_map(visible: StateSpace, hidden: StateSpace, theta: ThetaMatrix) -> Slicing:
    if theta.shape != (hidden.d, visible.d):
        raise StateSpaceError(f"theta has shape {theta.shape}, expected {(hidden.d, visible.d)}")
    projected = theta.entries @ _statistics_matrix(visible)
    scores = _statistics_matrix(hidden).T @ projected
    ordered = np.sort(scores, axis=0)
    gaps = ordered[-1] - ordered[-2]
    margins = GENERICITY_MARGIN * np.maximum(np.linalg.norm(projected, axis=0), 1.0)
    for x in np.flatnonzero(gaps <= margins):
        state = visible.state_at(int(x))
        raise NonGenericError(f"state {state} lies on a cone boundary", state)
    return Slicing(visible, hidden, np.argmax(scores, axis=0), theta)


def inference_function(
    rbm: DiscreteRBM, x: Sequence[int], single: bool = False
) -> list[State] | State:
    """Most likely hidden states given x; single=True keeps the lowest index."""
    projected = rbm.theta.entries @ rbm.visible_statistics.column(x).astype(float)
    tolerance = GENERICITY_MARGIN * max(float(np.linalg.norm(projected)), 1.0)
    per_unit = []
    for j in range(rbm.m):
        values = np.concatenate([[0.0], projected[rbm.unit_rows(j)]])
        per_unit.append(np.flatnonzero(values >= values.max() - tolerance).tolist())
    if single:
        return tuple(best[0] for best in per_unit)
    return [tuple(y) for y in itertools.product(*per_unit)]


def interval_realizer(r: Sequence[float], b: Sequence[float]) -> list[tuple[float, float]]:
    """For each y the open interval of lambda where lambda * r_y - b_y is the unique max."""
    r = [float(value) for value in r]
    b = [float(value) for value in b]
    intervals = []
    for y in range(len(r)):
        lo, hi = -math.inf, math.inf
        for z in range(len(r)):
            if z == y:
                continue
            if r[z] < r[y]:
                lo = max(lo, (b[y] - b[z]) / (r[y] - r[z]))
            elif r[z] > r[y]:
                hi = min(hi, (b[z] - b[y]) / (r[z] - r[y]))
            elif b[y] >= b[z]:
                lo, hi = math.inf, -math.inf
        intervals.append((lo, hi))
    return intervals


def concave_realizer(
    k: int, f: Callable[[float], float], b: Sequence[float] | None = None
) -> tuple[tuple[float, ...], tuple[float, ...]]:
    b = tuple(float(value) for value in (range(k) if b is None else b))
    if len(b) != k or any(lo >= hi for lo, hi in zip(b, b[1:])):
        raise ValueError("b must be k strictly increasing values")
    r = tuple(float(f(value)) for value in b)
    slopes = [(r[y + 1] - r[y]) / (b[y + 1] - b[y]) for y in range(k - 1)]
    if any(slope <= 0 for slope in slopes) or any(s1 <= s2 for s1, s2 in zip(slopes, slopes[1:])):
        raise ValueError("f must be strictly increasing and strictly concave on b")
    return r, b


def _derivative(f: Callable[[float], float], at: float, step: float = 1e-6) -> float:
    return (f(at + step) - f(at - step)) / (2 * step)


def _concave_steps(
    f: Callable[[float], float], breakpoints: Sequence[float]
) -> list[float] | None:
    """b with secant ratios (b_{y+1} - b_y) / (f(b_{y+1}) - f(b_y)) equal to the breakpoints."""
    b = [0.0]
    for target in breakpoints:
        start = b[-1]
        base = f(start)

        def ratio_gap(candidate: float) -> float:
            return (candidate - start) / (f(candidate) - base) - target

        slope = _derivative(f, start)
        if slope <= 0 or target <= 1.0 / slope * (1 + 1e-9):
            return None
        low, high = start + 1e-6, start + 1.0
        if ratio_gap(low) >= 0:
            return None
        for _ in range(60):
            if ratio_gap(high) > 0:
                break
            high = start + 2 * (high - start)
        else:
            return None
        b.append(brentq(ratio_gap, low, high, xtol=1e-12))
    return b


def parallel_slicing(
    space: StateSpace,
    k: int,
    direction: np.ndarray,
    thresholds: Sequence[float],
    f: Callable[[float], float] | None = None,
) -> Slicing:
    direction = np.asarray(direction, dtype=float)
    thresholds = [float(t) for t in thresholds]
    if direction.shape != (space.d,) or not np.any(direction):
        raise StateSpaceError("direction must be a nonzero vector of length d_X")
    if len(thresholds) != k - 1 or any(lo >= hi for lo, hi in zip(thresholds, thresholds[1:])):
        raise ValueError(f"need {k - 1} strictly increasing thresholds")
    projections = direction @ _statistics_matrix(space)
    scale = max(float(np.abs(projections).max()), 1.0)
    for x, value in enumerate(projections):
        if any(abs(value - t) <= GENERICITY_MARGIN * scale for t in thresholds):
            state = space.state_at(x)
            raise NonGenericError(f"state {state} lies on a slicing hyperplane", state)

    if f is None:
        r = tuple(float(y) for y in range(k))
        b = tuple(float(sum(thresholds[:y])) for y in range(k))
        realizer = ParallelRealizer(r, b)
    else:
        realizer = _concave_parallel_realizer(k, thresholds, f)

    e0 = np.zeros(space.d)
    e0[0] = 1.0
    rows = [
        realizer.scale * r_y * direction + (r_y * realizer.offset - b_y) * e0
        for r_y, b_y in zip(realizer.r, realizer.b)
    ]
    entries = np.vstack([rows[0]] + [row - rows[0] for row in rows[1:]])
    hidden = StateSpace((k,))
    theta = ThetaMatrix(entries)
    slicing = slicing_from_map(space, hidden, theta)
    expected = np.searchsorted(np.array(thresholds), projections)
    if not np.array_equal(slicing.assignment, expected):
        raise NonGenericError("parallel slicing realizer does not reproduce the threshold cells")
    return Slicing(space, hidden, slicing.assignment, theta, realizer)


def _concave_parallel_realizer(
    k: int, thresholds: list[float], f: Callable[[float], float]
) -> ParallelRealizer:
    if k == 1:
        return ParallelRealizer((float(f(0.0)),), (0.0,))
    slope = _derivative(f, 0.0)
    if slope <= 0:
        raise ValueError("f must be strictly increasing")
    base = 2.0 / slope
    scale = 1.0
    for _ in range(80):
        breakpoints = [base + scale * (t - thresholds[0]) for t in thresholds]
        b = _concave_steps(f, breakpoints)
        if b is not None:
            r = tuple(float(f(value)) for value in b)
            return ParallelRealizer(r, tuple(b), scale, base - scale * thresholds[0])
        scale *= 2.0
    raise ValueError("could not fit a concave realizer to these thresholds")


def is_realizable(slicing: Slicing) -> ThetaMatrix | None:
    """LP feasibility of the cell assignment; returns a realizing theta or None."""
    visible, hidden = slicing.visible, slicing.hidden
    a_x = _statistics_matrix(visible)
    hidden_stats = build_statistics(hidden)
    a_y = hidden_stats.matrix.astype(float)
    rows = []
    for x in range(visible.size):
        y_state = hidden.state_at(int(slicing.assignment[x]))
        for j, card in enumerate(hidden.cards):
            for value in range(card):
                if value == y_state[j]:
                    continue
                neighbor = list(y_state)
                neighbor[j] = value
                difference = a_y[:, hidden.index_of(y_state)] - a_y[:, hidden.index_of(neighbor)]
                rows.append(-np.kron(a_x[:, x], difference))
    size = visible.d * hidden.d
    result = linprog(
        np.zeros(size),
        A_ub=np.array(rows),
        b_ub=-np.ones(len(rows)),
        bounds=[(-_LP_BOUND, _LP_BOUND)] * size,
        method="highs",
    )
    if result.status != 0:
        return None
    return ThetaMatrix.from_vector(result.x, hidden.d, visible.d)


def enumerate_slicings(
    space: StateSpace, hidden_card: int, budget: int, seed: int = 0
) -> list[Slicing]:
    hidden = StateSpace((hidden_card,))
    rng = np.random.default_rng(seed)
    a_x = _statistics_matrix(space)
    found: dict[tuple[int, ...], Slicing] = {}
    for attempt in range(budget):
        try:
            if attempt % 2 == 0:
                theta = ThetaMatrix.random(hidden.d, space.d, rng)
                slicing = slicing_from_map(space, hidden, theta)
            else:
                direction = rng.standard_normal(space.d)
                levels = np.unique(direction @ a_x)
                midpoints = (levels[:-1] + levels[1:]) / 2
                if hidden_card - 1 <= midpoints.size:
                    picks = rng.choice(midpoints.size, size=hidden_card - 1, replace=False)
                    thresholds = np.sort(midpoints[picks])
                else:
                    pads = levels[-1] + np.arange(1, hidden_card - midpoints.size)
                    thresholds = np.concatenate([midpoints, pads])
                slicing = parallel_slicing(space, hidden_card, direction, thresholds)
        except NonGenericError:
            continue
        found.setdefault(slicing.key(), slicing)
    log.debug("found %d distinct slicings in %d candidates", len(found), budget)
    return list(found.values())


def strong_modes(p: Distribution) -> list[State]:
    table = p.probs.reshape(p.space.cards)
    neighbors = np.zeros_like(table)
    for axis in range(p.space.n):
        neighbors += table.sum(axis=axis, keepdims=True) - table
    return [p.space.state_at(int(x)) for x in np.flatnonzero(table.ravel() > neighbors.ravel())]


def _neighbors(space: StateSpace, state: State) -> list[State]:
    result = []
    for i, card in enumerate(space.cards):
        for value in range(card):
            if value != state[i]:
                result.append(state[:i] + (value,) + state[i + 1:])
    return result


def strong_modes_by_scan(p: Distribution) -> list[State]:
    result = []
    for x in range(p.space.size):
        state = p.space.state_at(x)
        total = sum(p.prob(z) for z in _neighbors(p.space, state))
        if p.probs[x] > total:
            result.append(state)
    return result


def modes(p: Distribution) -> list[State]:
    result = []
    for x in range(p.space.size):
        state = p.space.state_at(x)
        if all(p.probs[x] > p.prob(z) for z in _neighbors(p.space, state)):
            result.append(state)
    return result


def component_modes(rbm: DiscreteRBM) -> list[State]:
    """For every hidden state y the visible state maximizing <Theta^T A_y, A_x>."""
    a_y = rbm.hidden_statistics.matrix.astype(float)
    result = []
    for y in range(rbm.hidden.size):
        weights = rbm.theta.entries.T @ a_y[:, y]
        state = []
        for i in range(rbm.visible.n):
            logits = np.concatenate([[0.0], weights[rbm.visible_columns(i)]])
            state.append(int(np.argmax(logits)))
        result.append(tuple(state))
    return result


def covers_code(rbm: DiscreteRBM, code: Code) -> bool:
    return set(code.words) <= set(component_modes(rbm))


@dataclass(frozen=True, eq=False)
class ModeCertificate:
    visible: StateSpace
    hidden: StateSpace
    theta: ThetaMatrix
    assignment: tuple[State, ...]
    scale: float
    strong_modes: tuple[State, ...]

    def to_json(self) -> dict[str, Any]:
        return {
            "visible": self.visible.to_json(),
            "hidden": self.hidden.to_json(),
            "theta": self.theta.to_json(),
            "assignment": [list(state) for state in self.assignment],
            "scale": self.scale,
            "strong_modes": [list(state) for state in self.strong_modes],
        }


def _random_surjection(
    hidden_size: int, words: Sequence[State], rng: np.random.Generator
) -> list[State]:
    order = rng.permutation(hidden_size)
    targets = [words[int(c)] for c in rng.integers(len(words), size=hidden_size)]
    for slot, word in zip(order, words):
        targets[int(slot)] = word
    return targets


def _equal_height_lp(
    visible: StateSpace, hidden: StateSpace, targets: Sequence[State]
) -> ThetaMatrix | None:
    a_x = build_statistics(visible)
    a_y = _statistics_matrix(hidden)
    size = visible.d * hidden.d
    equalities, inequalities = [], []
    for y, target in enumerate(targets):
        peak = a_x.column(target).astype(float)
        row = np.append(np.kron(peak, a_y[:, y]), -1.0)
        equalities.append(row)
        for neighbor in _neighbors(visible, target):
            difference = peak - a_x.column(neighbor)
            inequalities.append(np.append(-np.kron(difference, a_y[:, y]), 0.0))
    bounds = [(-_LP_BOUND, _LP_BOUND)] * size + [(None, None)]
    result = linprog(
        np.zeros(size + 1),
        A_ub=np.array(inequalities) if inequalities else None,
        b_ub=-np.ones(len(inequalities)) if inequalities else None,
        A_eq=np.array(equalities),
        b_eq=np.zeros(len(equalities)),
        bounds=bounds,
        method="highs",
    )
    if result.status != 0:
        return None
    return ThetaMatrix.from_vector(result.x[:size], hidden.d, visible.d)


def find_mode_certificate(
    visible: StateSpace,
    hidden: StateSpace,
    code: Code,
    restarts: int = 200,
    seed: int = 0,
) -> ModeCertificate | None:
    """Search hidden-to-codeword assignments for an RBM whose strong modes are the code.

    Each hidden state's component is forced to peak at its codeword with the
    same height; scaling then separates codewords from their neighbors.
    """
    if code.space != visible:
        raise StateSpaceError("code and visible space differ")
    if code.min_distance is not None and code.min_distance < 2:
        raise CodeDistanceError(f"code has minimum distance {code.min_distance}, need at least 2")
    if hidden.size < len(code):
        return None
    rng = np.random.default_rng(seed)
    max_neighbors = sum(card - 1 for card in visible.cards)
    target_modes = tuple(code.words)
    for restart in range(restarts):
        targets = _random_surjection(hidden.size, code.words, rng)
        theta = _equal_height_lp(visible, hidden, targets)
        if theta is None:
            continue
        scale = math.log(max_neighbors * hidden.size) + 2.0
        for _ in range(8):
            rbm = DiscreteRBM(visible, hidden, theta.scaled(scale))
            found = tuple(strong_modes(rbm_marginal(rbm)))
            if found == target_modes:
                log.info("strong-mode certificate found after %d restarts", restart + 1)
                return ModeCertificate(
                    visible, hidden, rbm.theta, tuple(targets), scale, found
                )
            scale *= 2.0
    log.info("no strong-mode certificate in %d restarts", restarts)
    return None


def strong_mode_certificate(
    visible: StateSpace,
    hidden: StateSpace,
    code: Code,
    restarts: int = 200,
    seed: int = 0,
) -> ThetaMatrix | None:
    certificate = find_mode_certificate(visible, hidden, code, restarts, seed)
    return None if certificate is None else certificate.theta


@dataclass(frozen=True, eq=False)
class OrthantExample:
    visible: StateSpace
    hidden: StateSpace
    theta: ThetaMatrix
    states: tuple[State, ...]
    product: np.ndarray


def example_orthant_map() -> OrthantExample:
    """Triangular prism [3] x [2] mapped into six orthants of the 4-cube fan."""
    interaction = np.array([
        [3, -2, -2, -2],
        [1, -2, -2, 2],
        [1, 2, -2, -2],
        [1, -2, 2, -2],
    ], dtype=float)
    states = ((2, 1), (1, 1), (0, 1), (2, 0), (1, 0), (0, 0))
    product = np.array([
        [-1, -1, 1, 1, 1, 3],
        [1, 1, 3, -1, -1, 1],
        [-3, 1, -1, -1, 3, 1],
        [1, -3, -1, 3, -1, 1],
    ], dtype=float)
    theta = ThetaMatrix(np.vstack([np.zeros((1, 4)), interaction]))
    return OrthantExample(StateSpace((3, 2)), StateSpace.binary(4), theta, states, product)


def hidden_orthants(example: OrthantExample) -> list[State]:
    rbm = DiscreteRBM(example.visible, example.hidden, example.theta)
    return [inference_function(rbm, state, single=True) for state in example.states]

