"""Tropical RBM: the piecewise-linear max-plus marginal, its block matrix and
tropical dimension by rank maximization over slicings.

Ranks are exact; the block matrix only ever holds 0/1 entries.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
import itertools
import logging
from typing import Any, Sequence

import numpy as np

from coding import ball_packing, min_covering_size
from exact_rank import exact_rank
from geometry import NonGenericError, Slicing, parallel_slicing, slicing_from_map
from models import DiscreteRBM, ThetaMatrix
from rbm_settings import DEFAULT_EXACT_CAP, TOL_EXACT
from statespace import (
    StateSpace,
    build_statistics,
    check_exact_size,
    distance_functional,
    hamming_distance,
)


log = logging.getLogger(__name__)


class SlicingMismatchError(ValueError):
    pass


class TropicalConsistencyError(RuntimeError):
    pass


class OverlappingBallsError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class HomogeneousStatistics:
    """One 0/1 row per edge (i, j) and edge state (x_i, h_j), ordered j, h, i, x_i."""

    visible: StateSpace
    hidden: StateSpace
    matrix: np.ndarray

    @property
    def visible_width(self) -> int:
        return sum(self.visible.cards)

    def unit_block(self, j: int) -> np.ndarray:
        start = sum(self.hidden.cards[:j]) * self.visible_width
        return self.matrix[start:start + self.hidden.cards[j] * self.visible_width]

    def state_block(self, j: int, h: int) -> np.ndarray:
        start = (sum(self.hidden.cards[:j]) + h) * self.visible_width
        return self.matrix[start:start + self.visible_width]

    def same_model_as_joint(self) -> bool:
        """Row spaces of [1; A_hom] and A^(X) ⊗ A^(Y) coincide."""
        joint = np.kron(
            build_statistics(self.visible).matrix, build_statistics(self.hidden).matrix
        ).astype(np.int64)
        lifted = np.vstack([np.ones((1, self.matrix.shape[1]), dtype=np.int64), self.matrix])
        rank = exact_rank(joint)
        return rank == exact_rank(lifted) == exact_rank(np.vstack([joint, lifted]))


def homogeneous_statistics(
    visible: StateSpace, hidden: StateSpace, cap: int = DEFAULT_EXACT_CAP
) -> HomogeneousStatistics:
    check_exact_size(visible.size * hidden.size, cap)
    x_states = visible.states()
    y_states = hidden.states()
    # joint column (x, y) sits at x * |Y| + y
    x_of = np.repeat(np.arange(visible.size), hidden.size)
    y_of = np.tile(np.arange(hidden.size), visible.size)
    rows = []
    for j, s in enumerate(hidden.cards):
        for h in range(s):
            hidden_match = y_states[y_of, j] == h
            for i, r in enumerate(visible.cards):
                for x in range(r):
                    rows.append((hidden_match & (x_states[x_of, i] == x)).astype(np.uint8))
    matrix = np.vstack(rows)
    matrix.setflags(write=False)
    return HomogeneousStatistics(visible, hidden, matrix)


def tropical_values(rbm: DiscreteRBM) -> np.ndarray:
    """Phi(v; theta) for every visible state, by per-unit maxima."""
    projected = rbm.theta.entries @ rbm.visible_statistics.matrix
    total = projected[0].copy()
    for j in range(rbm.m):
        unit = projected[rbm.unit_rows(j)]
        total += np.maximum(unit.max(axis=0), 0.0)
    return total


def tropical_value(rbm: DiscreteRBM, v: Sequence[int]) -> float:
    x = rbm.visible.index_of(v)
    projected = rbm.theta.entries @ rbm.visible_statistics.matrix[:, x]
    full = float(np.max(rbm.hidden_statistics.matrix.T @ projected))
    decomposed = float(tropical_values(rbm)[x])
    scale = max(1.0, float(np.abs(projected).sum()))
    if abs(full - decomposed) > TOL_EXACT * scale:
        raise TropicalConsistencyError(
            f"joint maximum {full!r} and per-unit maxima {decomposed!r} disagree at {tuple(v)}"
        )
    return full


def induced_slicings(rbm: DiscreteRBM) -> list[Slicing]:
    slicings = []
    for j, s in enumerate(rbm.hidden.cards):
        rows = np.vstack([np.zeros((1, rbm.visible.d)), rbm.theta.entries[rbm.unit_rows(j)]])
        slicings.append(slicing_from_map(rbm.visible, StateSpace((s,)), ThetaMatrix(rows)))
    return slicings


@dataclass(frozen=True, eq=False)
class TropicalBlockMatrix:
    space: StateSpace
    slicings: tuple[Slicing, ...]
    matrix: np.ndarray

    @cached_property
    def rank(self) -> int:
        return exact_rank(self.matrix.astype(np.int64))

    @cached_property
    def contains_constants(self) -> bool:
        ones = np.ones((self.matrix.shape[0], 1), dtype=np.int64)
        return exact_rank(np.hstack([self.matrix.astype(np.int64), ones])) == self.rank

    @property
    def dimension(self) -> int:
        return self.rank - 1

    def to_json(self) -> dict[str, Any]:
        return {
            "rank": self.rank,
            "dimension": self.dimension,
            "shape": list(self.matrix.shape),
            "slicings": [slicing.to_json() for slicing in self.slicings],
        }


def tropical_matrix(space_v: StateSpace, slicings: Sequence[Slicing]) -> TropicalBlockMatrix:
    transposed = build_statistics(space_v).matrix.T
    blocks = []
    for slicing in slicings:
        if slicing.visible != space_v:
            raise SlicingMismatchError(
                f"slicing of {list(slicing.visible.cards)} used with {list(space_v.cards)}"
            )
        if slicing.hidden.n != 1:
            raise SlicingMismatchError("each slicing must belong to a single hidden unit")
        for cell in range(slicing.hidden.size):
            block = np.zeros_like(transposed)
            members = slicing.assignment == cell
            block[members] = transposed[members]
            blocks.append(block)
    matrix = np.hstack(blocks) if blocks else np.zeros((space_v.size, 0), dtype=np.uint8)
    matrix.setflags(write=False)
    return TropicalBlockMatrix(space_v, tuple(slicings), matrix)


def tropical_coordinates(rbm: DiscreteRBM, delta: ThetaMatrix) -> np.ndarray:
    """delta' with Phi(.; Theta + delta) - Phi(.; Theta) = A delta' on a linearity region.

    The constant row of delta is folded into every block of hidden unit 0.
    """
    if delta.shape != rbm.theta.shape:
        raise SlicingMismatchError(f"delta has shape {delta.shape}, expected {rbm.theta.shape}")
    parts = []
    for j, s in enumerate(rbm.hidden.cards):
        shared = delta.entries[0] if j == 0 else np.zeros(rbm.visible.d)
        parts.append(shared)
        for row in delta.entries[rbm.unit_rows(j)]:
            parts.append(row + shared)
    return np.concatenate(parts)


def _ball_slicing(space: StateSpace, center: Sequence[int], radius: int, cells: int) -> Slicing:
    """Parallel cuts of the distance-to-center functional; inner cells pair up spheres."""
    thresholds = [min(2 * level + 1, radius) + 0.5 for level in range(cells - 2)]
    thresholds.append(radius + 0.5)
    distinct = sorted(set(thresholds))
    padding = itertools.count(1)
    while len(distinct) < cells - 1:
        distinct.append(space.n + 0.5 + next(padding))
    return parallel_slicing(space, cells, distance_functional(space, center), distinct)


def _cells_for_radius(radius: int) -> int:
    return max(2, (radius + 3) // 2)


def ball_slicing_certificate(
    space: StateSpace,
    centers: Sequence[Sequence[int]],
    radii: Sequence[int],
    cells: Sequence[int] | None = None,
) -> list[Slicing] | None:
    if len(centers) != len(radii):
        raise ValueError("need one radius per center")
    if any(radius > space.n for radius in radii):
        return None
    for (a, ra), (b, rb) in itertools.combinations(zip(centers, radii), 2):
        if hamming_distance(a, b, space) <= ra + rb:
            raise OverlappingBallsError(
                f"balls around {tuple(a)} and {tuple(b)} with radii {ra}, {rb} intersect"
            )
    if cells is None:
        cells = [_cells_for_radius(radius) for radius in radii]
    return [
        _ball_slicing(space, center, radius, count)
        for center, radius, count in zip(centers, radii, cells)
    ]


@dataclass(frozen=True, eq=False)
class TropicalDimension:
    value: int
    upper_bound: int
    label: str
    family: str
    block: TropicalBlockMatrix | None

    def to_json(self) -> dict[str, Any]:
        return {
            "value": self.value,
            "upper_bound": self.upper_bound,
            "label": self.label,
            "family": self.family,
            "certificate": None if self.block is None else self.block.to_json(),
        }


def _random_unit_slicing(space: StateSpace, cells: int, rng: np.random.Generator) -> Slicing:
    hidden = StateSpace((cells,))
    for _ in range(100):
        try:
            return slicing_from_map(space, hidden, ThetaMatrix.random(hidden.d, space.d, rng))
        except NonGenericError:
            continue
    raise NonGenericError("could not draw a generic random slicing")


def _structured_candidates(
    visible: StateSpace, hidden: StateSpace, rng: np.random.Generator, node_budget: int
):
    cards = list(hidden.cards)
    radii = [2 * s - 3 for s in cards]
    if all(radius <= visible.n for radius in radii):
        packing = ball_packing(visible, radii, node_budget)
        if packing is not None:
            yield "ball-packing", ball_slicing_certificate(
                visible, packing.centers, packing.radii, cards
            )
    cover = min_covering_size(visible, 1, node_budget, use_closed_form=False)
    if cover.words and len(cover.words) <= len(cards) + 1:
        slicings = []
        for j, s in enumerate(cards):
            if j < len(cover.words):
                slicings.append(_ball_slicing(visible, cover.words[j], 1, s))
            else:
                slicings.append(_random_unit_slicing(visible, s, rng))
        yield "ball-cover", slicings


def tropical_dimension(
    visible: StateSpace,
    hidden: StateSpace,
    budget: int = 2000,
    seed: int = 0,
    node_budget: int = 200_000,
    cap: int = DEFAULT_EXACT_CAP,
) -> TropicalDimension:
    """Largest rank - 1 of the block matrix over structured and random slicings."""
    check_exact_size(visible.size, cap)
    upper = min(visible.d * hidden.d - 1, visible.size - 1)
    rng = np.random.default_rng(seed)
    best_rank, best_block, family = 0, None, "none"

    def consider(name: str, slicings: list[Slicing]) -> None:
        nonlocal best_rank, best_block, family
        block = tropical_matrix(visible, slicings)
        if np.linalg.matrix_rank(block.matrix.astype(float)) <= best_rank:
            return
        if block.rank > best_rank:
            best_rank, best_block, family = block.rank, block, name

    for name, slicings in _structured_candidates(visible, hidden, rng, node_budget):
        consider(name, slicings)
        if best_rank - 1 >= upper:
            break
    attempt = 0
    while best_rank - 1 < upper and attempt < budget:
        attempt += 1
        try:
            if attempt % 2:
                slicings = [_random_unit_slicing(visible, s, rng) for s in hidden.cards]
                name = "random-map"
            else:
                slicings = [_random_sweep(visible, s, rng) for s in hidden.cards]
                name = "random-sweep"
        except NonGenericError:
            continue
        consider(name, slicings)
    value = best_rank - 1
    label = "exact" if value == upper else "lower bound"
    log.info(
        "tropical dimension of %s x %s: %d (%s, %s, %d random candidates)",
        list(visible.cards), list(hidden.cards), value, label, family, attempt,
    )
    return TropicalDimension(value, upper, label, family, best_block)


def _random_sweep(space: StateSpace, cells: int, rng: np.random.Generator) -> Slicing:
    direction = rng.standard_normal(space.d)
    levels = np.unique(direction @ build_statistics(space).matrix)
    midpoints = (levels[:-1] + levels[1:]) / 2
    if cells - 1 <= midpoints.size:
        thresholds = np.sort(rng.choice(midpoints, size=cells - 1, replace=False))
    else:
        thresholds = np.concatenate([midpoints, levels[-1] + np.arange(1, cells - midpoints.size)])
    return parallel_slicing(space, cells, direction, thresholds)

