"""Finite state spaces, joint-state enumeration and sufficient statistics.

Joint states enumerate lexicographically with variable 1 most significant
(numpy C order). The statistics matrix A^(X) has the constant row first,
followed by the indicator rows (i, y) for y = 1..r_i - 1, variables in order.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
import math
from typing import Iterable, Sequence

import numpy as np

from exact_rank import affine_rank
from report_store import csv_bytes
from rbm_settings import DEFAULT_EXACT_CAP


class StateSpaceError(ValueError):
    pass


class InstanceTooLargeError(RuntimeError):
    pass


State = tuple[int, ...]


@dataclass(frozen=True)
class StateSpace:
    cards: tuple[int, ...]

    def __post_init__(self):
        cards = tuple(int(card) for card in self.cards)
        object.__setattr__(self, "cards", cards)
        if not cards:
            raise StateSpaceError("a state space needs at least one variable")
        if any(card < 2 for card in cards):
            raise StateSpaceError(f"every cardinality must be at least 2: {list(cards)}")

    @property
    def n(self) -> int:
        return len(self.cards)

    @property
    def size(self) -> int:
        return math.prod(self.cards)

    @property
    def d(self) -> int:
        return 1 + sum(card - 1 for card in self.cards)

    @property
    def max_card(self) -> int:
        return max(self.cards)

    def validate(self, state: Sequence[int]) -> State:
        state = tuple(int(value) for value in state)
        if len(state) != self.n:
            raise StateSpaceError(f"state {state} has {len(state)} coordinates, expected {self.n}")
        for value, card in zip(state, self.cards):
            if not 0 <= value < card:
                raise StateSpaceError(f"state {state} is outside cards {list(self.cards)}")
        return state

    def index_of(self, state: Sequence[int]) -> int:
        return int(np.ravel_multi_index(self.validate(state), self.cards))

    def state_at(self, index: int) -> State:
        if not 0 <= index < self.size:
            raise StateSpaceError(f"index {index} outside a space of size {self.size}")
        return tuple(int(value) for value in np.unravel_index(index, self.cards))

    def states(self) -> np.ndarray:
        """All joint states as a (|X|, n) integer array in enumeration order."""
        return _states(self.cards)

    def label(self, state: Sequence[int]) -> str:
        separator = "" if self.max_card <= 10 else "."
        return separator.join(str(value) for value in state)

    def labels(self) -> list[str]:
        return [self.label(state) for state in self.states()]

    def to_json(self) -> list[int]:
        return list(self.cards)

    @classmethod
    def from_json(cls, payload: Iterable[int]) -> "StateSpace":
        return cls(tuple(payload))

    @classmethod
    def binary(cls, n: int) -> "StateSpace":
        return cls((2,) * n)


def _states(cards: tuple[int, ...]) -> np.ndarray:
    grids = np.indices(cards).reshape(len(cards), -1)
    return grids.T.copy()


def parse_cards(text: str) -> StateSpace:
    try:
        cards = tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise StateSpaceError(f"cardinalities must be comma-separated integers: {text!r}") from exc
    return StateSpace(cards)


@dataclass(frozen=True, eq=False)
class SufficientStatistics:
    space: StateSpace
    matrix: np.ndarray
    row_labels: tuple[tuple[int, int] | None, ...]

    @property
    def d(self) -> int:
        return self.matrix.shape[0]

    def column(self, state: Sequence[int]) -> np.ndarray:
        return self.matrix[:, self.space.index_of(state)]

    def row_names(self) -> list[str]:
        return [
            "const" if label is None else f"x{label[0] + 1}={label[1]}"
            for label in self.row_labels
        ]


def build_statistics(space: StateSpace) -> SufficientStatistics:
    states = space.states()
    rows = [np.ones(space.size, dtype=np.uint8)]
    labels: list[tuple[int, int] | None] = [None]
    for i, card in enumerate(space.cards):
        for value in range(1, card):
            rows.append((states[:, i] == value).astype(np.uint8))
            labels.append((i, value))
    matrix = np.vstack(rows)
    matrix.setflags(write=False)
    return SufficientStatistics(space=space, matrix=matrix, row_labels=tuple(labels))


@dataclass(frozen=True, eq=False)
class JointStatistics:
    """A^(X) ⊗ A^(Y); column (x, y) sits at x * |Y| + y, row (a, b) at a * d_Y + b."""

    visible: SufficientStatistics
    hidden: SufficientStatistics

    @property
    def shape(self) -> tuple[int, int]:
        return (
            self.visible.d * self.hidden.d,
            self.visible.space.size * self.hidden.space.size,
        )

    @cached_property
    def matrix(self) -> np.ndarray:
        matrix = np.kron(self.visible.matrix, self.hidden.matrix).astype(np.uint8)
        matrix.setflags(write=False)
        return matrix

    def column(self, x_index: int, y_index: int) -> np.ndarray:
        return np.kron(self.visible.matrix[:, x_index], self.hidden.matrix[:, y_index])

    def joint_index(self, x_index: int, y_index: int) -> int:
        return x_index * self.hidden.space.size + y_index


def joint_statistics(
    vis: SufficientStatistics,
    hid: SufficientStatistics,
    cap: int = DEFAULT_EXACT_CAP,
) -> JointStatistics:
    columns = vis.space.size * hid.space.size
    if columns > cap:
        raise InstanceTooLargeError(
            f"|X|*|Y| = {columns} exceeds the exact-mode cap of {cap} joint columns"
        )
    return JointStatistics(visible=vis, hidden=hid)


def check_exact_size(size: int, cap: int = DEFAULT_EXACT_CAP) -> None:
    if size > cap:
        raise InstanceTooLargeError(f"{size} states exceed the exact-mode cap of {cap}")


def hamming_distance(
    x: Sequence[int],
    y: Sequence[int],
    space: StateSpace | None = None,
) -> int:
    if space is not None:
        x = space.validate(x)
        y = space.validate(y)
    if len(x) != len(y):
        raise StateSpaceError(f"states {tuple(x)} and {tuple(y)} come from different spaces")
    return sum(1 for a, b in zip(x, y) if a != b)


def distance_matrix(space: StateSpace) -> np.ndarray:
    states = space.states()
    return (states[:, None, :] != states[None, :, :]).sum(axis=2)


def distances_from(space: StateSpace, center: Sequence[int]) -> np.ndarray:
    center = np.asarray(space.validate(center))
    return (space.states() != center).sum(axis=1)


def hamming_ball(space: StateSpace, center: Sequence[int], radius: int) -> np.ndarray:
    return np.flatnonzero(distances_from(space, center) <= radius)


def hamming_sphere(space: StateSpace, center: Sequence[int], k: int) -> np.ndarray:
    return np.flatnonzero(distances_from(space, center) == k)


def ball_volume(space: StateSpace, radius: int) -> int:
    """Size of a radius ball; independent of the center."""
    sphere_sizes = [1]
    for card in space.cards:
        shifted = sphere_sizes + [0]
        for k in range(len(sphere_sizes), 0, -1):
            shifted[k] += sphere_sizes[k - 1] * (card - 1)
        sphere_sizes = shifted
    return sum(sphere_sizes[: max(radius, -1) + 1])


def distance_functional(space: StateSpace, center: Sequence[int]) -> np.ndarray:
    """Vector delta with <delta, A_x> = d_H(x, center) for every state x."""
    center = space.validate(center)
    delta = np.zeros(space.d)
    row = 1
    for i, card in enumerate(space.cards):
        if center[i] == 0:
            delta[row:row + card - 1] = 1.0
        else:
            delta[0] += 1.0
            delta[row + center[i] - 1] = -1.0
        row += card - 1
    return delta


def affine_dimension(space: StateSpace, indices: Iterable[int]) -> int:
    stats = build_statistics(space)
    indices = list(indices)
    return affine_rank(stats.matrix[1:, indices].astype(np.int64))


def statistics_csv(stats: SufficientStatistics) -> bytes:
    headers = ["row", *stats.space.labels()]
    rows = [
        [name, *stats.matrix[r].tolist()]
        for r, name in enumerate(stats.row_names())
    ]
    return csv_bytes(headers, rows)
