"""Hamming-metric codes: packing and covering sizes, Gilbert-Varshamov
bounds, q-ary Hamming codes and disjoint ball packings."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
import itertools
import logging
import math
from typing import Any, Iterable, Sequence

import numpy as np
from sympy import factorint

from exact_rank import exact_rank
from statespace import (
    State,
    StateSpace,
    StateSpaceError,
    ball_volume,
    build_statistics,
    distance_matrix,
    hamming_distance,
)


log = logging.getLogger(__name__)

DEFAULT_NODE_BUDGET = 2_000_000

# Irreducible moduli for the non-prime fields, coefficients low degree first.
_FIELD_MODULI = {
    4: (2, (1, 1, 1)),
    8: (2, (1, 1, 0, 1)),
    9: (3, (1, 0, 1)),
}


class FieldError(ValueError):
    pass


class _BudgetExceeded(Exception):
    pass


@dataclass(frozen=True, eq=False)
class Code:
    space: StateSpace
    words: tuple[State, ...]

    def __post_init__(self):
        words = sorted({self.space.validate(word) for word in self.words},
                       key=self.space.index_of)
        if not words:
            raise StateSpaceError("a code needs at least one word")
        object.__setattr__(self, "words", tuple(words))

    def __len__(self) -> int:
        return len(self.words)

    def indices(self) -> np.ndarray:
        return np.array([self.space.index_of(word) for word in self.words])

    @cached_property
    def min_distance(self) -> int | None:
        """None for a single word."""
        if len(self.words) < 2:
            return None
        words = np.array(self.words)
        pairwise = (words[:, None, :] != words[None, :, :]).sum(axis=2)
        pairwise[np.diag_indices(len(self.words))] = self.space.n + 1
        return int(pairwise.min())

    @cached_property
    def covering_radius(self) -> int:
        states = self.space.states()
        words = np.array(self.words)
        best = np.full(self.space.size, self.space.n)
        for word in words:
            best = np.minimum(best, (states != word).sum(axis=1))
        return int(best.max())

    def is_perfect(self, radius: int) -> bool:
        if self.min_distance is not None and self.min_distance < 2 * radius + 1:
            return False
        return len(self.words) * ball_volume(self.space, radius) == self.space.size

    def to_json(self) -> dict[str, Any]:
        return {
            "space": self.space.to_json(),
            "words": [list(word) for word in self.words],
            "min_distance": self.min_distance,
            "covering_radius": self.covering_radius,
        }

    @classmethod
    def from_json(cls, payload: Any, space: StateSpace | None = None) -> "Code":
        if isinstance(payload, dict):
            words = payload["words"]
            if space is None:
                space = StateSpace.from_json(payload["space"])
        else:
            words = payload
        if space is None:
            raise StateSpaceError("a bare word list needs an explicit state space")
        return cls(space, tuple(tuple(word) for word in words))


@dataclass(frozen=True)
class CodeBound:
    value: int
    exact: bool
    method: str
    words: tuple[State, ...] = field(default=(), compare=False)

    def to_json(self) -> dict[str, Any]:
        return {
            "value": self.value,
            "exact": self.exact,
            "method": self.method,
            "words": [list(word) for word in self.words],
        }


def prime_power(q: int) -> tuple[int, int] | None:
    if q < 2:
        return None
    factors = factorint(q)
    if len(factors) != 1:
        return None
    ((p, k),) = factors.items()
    return int(p), int(k)


class GaloisField:
    """Table-driven GF(q); elements are 0..q-1, base-p digits of a polynomial."""

    def __init__(self, q: int):
        parts = prime_power(q)
        if parts is None:
            raise FieldError(f"{q} is not a prime power")
        p, k = parts
        if k > 1 and q not in _FIELD_MODULI:
            raise FieldError(f"GF({q}) is not supported; prime powers up to 9 only")
        self.q = q
        self.p = p
        self.k = k
        if k == 1:
            elements = np.arange(q)
            self.add_table = (elements[:, None] + elements[None, :]) % q
            self.mul_table = (elements[:, None] * elements[None, :]) % q
        else:
            self.add_table = np.array(
                [[self._poly_add(a, b) for b in range(q)] for a in range(q)]
            )
            self.mul_table = np.array(
                [[self._poly_mul(a, b) for b in range(q)] for a in range(q)]
            )
        self.neg = np.array([int(np.flatnonzero(self.add_table[a] == 0)[0]) for a in range(q)])

    def _digits(self, a: int) -> list[int]:
        return [(a // self.p ** i) % self.p for i in range(self.k)]

    def _from_digits(self, digits: Iterable[int]) -> int:
        return sum(int(d) * self.p ** i for i, d in enumerate(digits))

    def _poly_add(self, a: int, b: int) -> int:
        return self._from_digits(
            (x + y) % self.p for x, y in zip(self._digits(a), self._digits(b))
        )

    def _poly_mul(self, a: int, b: int) -> int:
        _, modulus = _FIELD_MODULI[self.q]
        product = [0] * (2 * self.k - 1)
        for i, x in enumerate(self._digits(a)):
            for j, y in enumerate(self._digits(b)):
                product[i + j] = (product[i + j] + x * y) % self.p
        for degree in range(len(product) - 1, self.k - 1, -1):
            coefficient = product[degree]
            if coefficient:
                for offset, m in enumerate(modulus):
                    position = degree - self.k + offset
                    product[position] = (product[position] - coefficient * m) % self.p
        return self._from_digits(product[: self.k])

    def add(self, a: int, b: int) -> int:
        return int(self.add_table[a, b])

    def mul(self, a: int, b: int) -> int:
        return int(self.mul_table[a, b])

    def dot(self, a: Sequence[int], b: Sequence[int]) -> int:
        total = 0
        for x, y in zip(a, b):
            total = self.add_table[total, self.mul_table[x, y]]
        return int(total)


def _projective_points(field: GaloisField, r: int) -> list[tuple[int, ...]]:
    """Normalized nonzero vectors (first nonzero entry 1), unit vectors last."""
    units = [tuple(1 if i == j else 0 for i in range(r)) for j in range(r)]
    points = []
    for vector in itertools.product(range(field.q), repeat=r):
        nonzero = [value for value in vector if value]
        if nonzero and nonzero[0] == 1 and vector not in units:
            points.append(vector)
    return points + units


def hamming_code(q: int, r: int) -> Code:
    if r < 2:
        raise ValueError("Hamming codes need r >= 2")
    field = GaloisField(q)
    columns = _projective_points(field, r)
    n = len(columns)
    info = n - r
    parity = [[columns[j][row] for j in range(info)] for row in range(r)]
    words = []
    for message in itertools.product(range(q), repeat=info):
        checks = tuple(int(field.neg[field.dot(parity[row], message)]) for row in range(r))
        words.append(message + checks)
    return Code(StateSpace((q,) * n), tuple(words))


def gilbert_varshamov(q: int, n: int, d: int) -> int:
    if q < 2 or not 1 <= d <= n:
        raise ValueError("gilbert_varshamov needs q >= 2 and 1 <= d <= n")
    total = q ** n
    if d == 1:
        return total
    volume = sum(math.comb(n, j) * (q - 1) ** j for j in range(d))
    bound = -(-total // volume)
    if prime_power(q) is not None:
        denominator = sum(math.comb(n - 1, j) * (q - 1) ** j for j in range(d - 1))
        k = 0
        while k + 1 <= n and q ** (k + 1) * denominator < total:
            k += 1
        if q ** k * denominator < total:
            bound = max(bound, q ** k)
    return bound


def _packing_upper_bound(space: StateSpace, d: int) -> int:
    t = (d - 1) // 2
    sphere = space.size // ball_volume(space, t)
    largest = sorted(space.cards, reverse=True)[: d - 1]
    singleton = space.size // math.prod(largest)
    return min(sphere, singleton)


def _max_clique(
    adjacency: list[int], candidates: int, start: int, ceiling: int, budget: int
) -> tuple[int, bool]:
    """Largest clique containing `start` (bitsets), with a greedy-colouring bound."""
    best = [1 << start, 1]
    nodes = [0]

    def colour_sort(pool: int) -> tuple[list[int], list[int]]:
        order, colours, colour = [], [], 0
        uncoloured = pool
        while uncoloured:
            colour += 1
            available = uncoloured
            while available:
                v = (available & -available).bit_length() - 1
                available &= ~adjacency[v] & ~(1 << v)
                uncoloured &= ~(1 << v)
                order.append(v)
                colours.append(colour)
        return order, colours

    def expand(clique: int, size: int, pool: int) -> None:
        nodes[0] += 1
        if nodes[0] > budget:
            raise _BudgetExceeded
        order, colours = colour_sort(pool)
        for v, colour in zip(reversed(order), reversed(colours)):
            if size + colour <= best[1] or best[1] >= ceiling:
                return
            bit = 1 << v
            narrowed = pool & adjacency[v]
            if narrowed:
                expand(clique | bit, size + 1, narrowed)
            elif size + 1 > best[1]:
                best[0], best[1] = clique | bit, size + 1
            pool &= ~bit

    try:
        expand(1 << start, 1, candidates)
        exact = True
    except _BudgetExceeded:
        exact = False
    return best[0], exact


def _bitset(mask: np.ndarray) -> int:
    bits = 0
    for j in np.flatnonzero(mask):
        bits |= 1 << int(j)
    return bits


def _bits_to_words(space: StateSpace, bits: int) -> tuple[State, ...]:
    return tuple(space.state_at(i) for i in range(space.size) if bits >> i & 1)


def max_code_size(
    space: StateSpace,
    d: int,
    node_budget: int = DEFAULT_NODE_BUDGET,
    use_closed_form: bool = True,
) -> CodeBound:
    if d <= 1:
        return CodeBound(space.size, True, "whole-space")
    if d > space.n:
        return CodeBound(1, True, "single-word", ((0,) * space.n,))
    if d == 2 and use_closed_form:
        widest = int(np.argmax(space.cards))
        r_max = space.cards[widest]
        words = tuple(
            tuple(state) for state in space.states()
            if (sum(state) - state[widest]) % r_max == state[widest]
        )
        return CodeBound(space.size // r_max, True, "parity-closed-form", words)
    distances = distance_matrix(space)
    adjacency = [_bitset(row >= d) for row in distances]
    ceiling = _packing_upper_bound(space, d)
    bits, exact = _max_clique(adjacency, adjacency[0], 0, ceiling, node_budget)
    words = _bits_to_words(space, bits)
    size = len(words)
    method = "clique-search"
    if not exact:
        log.info("code search for d=%d on %s stopped at %d nodes", d, list(space.cards), node_budget)
        if len(set(space.cards)) == 1 and d <= space.n:
            gv = gilbert_varshamov(space.cards[0], space.n, d)
            if gv > size:
                return CodeBound(gv, False, "gilbert-varshamov")
    return CodeBound(size, exact, method, words)


def covering_formula_sst(s: int, t: int) -> int:
    """Minimal radius-one covering of [s] x [s] x [t] for s <= t."""
    if t <= 3 * s:
        return s * s - (3 * s - t) ** 2 // 8
    return s * s


def _greedy_cover(balls: list[int], universe: int) -> list[int]:
    chosen, uncovered = [0], universe & ~balls[0]
    while uncovered:
        best = max(range(len(balls)), key=lambda c: (balls[c] & uncovered).bit_count())
        chosen.append(best)
        uncovered &= ~balls[best]
    return chosen


def min_covering_size(
    space: StateSpace,
    radius: int,
    node_budget: int = DEFAULT_NODE_BUDGET,
    use_closed_form: bool = True,
) -> CodeBound:
    if radius >= space.n:
        return CodeBound(1, True, "single-word", ((0,) * space.n,))
    cards = sorted(space.cards)
    if (
        use_closed_form
        and radius == 1
        and space.n == 3
        and cards[0] == cards[1]
    ):
        return CodeBound(covering_formula_sst(cards[0], cards[2]), True, "sst-closed-form")
    distances = distance_matrix(space)
    balls = [_bitset(row <= radius) for row in distances]
    near = [_bitset(row <= 2 * radius) for row in distances]
    universe = (1 << space.size) - 1
    volume = ball_volume(space, radius)
    incumbent = _greedy_cover(balls, universe)
    best = [len(incumbent), incumbent]
    nodes = [0]

    def packing_bound(uncovered: int) -> int:
        count, remaining = 0, uncovered
        while remaining:
            v = (remaining & -remaining).bit_length() - 1
            count += 1
            # no center covers two states more than 2 * radius apart
            remaining &= ~near[v]
        return count

    def search(uncovered: int, chosen: list[int]) -> None:
        nodes[0] += 1
        if nodes[0] > node_budget:
            raise _BudgetExceeded
        if not uncovered:
            if len(chosen) < best[0]:
                best[0], best[1] = len(chosen), list(chosen)
            return
        missing = uncovered.bit_count()
        lower = max(-(-missing // volume), packing_bound(uncovered))
        if len(chosen) + lower >= best[0]:
            return
        target = (uncovered & -uncovered).bit_length() - 1
        options = np.flatnonzero(distances[target] <= radius)
        options = sorted(options, key=lambda c: -(balls[c] & uncovered).bit_count())
        for center in options:
            chosen.append(int(center))
            search(uncovered & ~balls[center], chosen)
            chosen.pop()

    try:
        search(universe & ~balls[0], [0])
        exact = True
    except _BudgetExceeded:
        exact = False
        log.info("covering search for r=%d on %s stopped at %d nodes", radius, list(space.cards), node_budget)
    words = tuple(space.state_at(index) for index in sorted(set(best[1])))
    return CodeBound(len(words), exact, "set-cover-search", words)


def ball_cover(space: StateSpace, m: int, node_budget: int = DEFAULT_NODE_BUDGET) -> bool | None:
    """Whether m radius-one balls cover the space; None when undecided."""
    bound = min_covering_size(space, 1, node_budget)
    if bound.value <= m:
        return True
    return False if bound.exact else None


@dataclass(frozen=True)
class BallPacking:
    centers: tuple[State, ...]
    radii: tuple[int, ...]
    complement: tuple[int, ...]
    complement_full_rank: bool

    def to_json(self) -> dict[str, Any]:
        return {
            "centers": [list(center) for center in self.centers],
            "radii": list(self.radii),
            "complement_size": len(self.complement),
            "complement_full_rank": self.complement_full_rank,
        }


def _complement_full_rank(space: StateSpace, complement: list[int]) -> bool:
    if len(complement) < space.d:
        return False
    matrix = build_statistics(space).matrix[:, complement].astype(np.int64)
    return exact_rank(matrix) == space.d


def ball_packing(
    space: StateSpace,
    radii: Sequence[int],
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> BallPacking | None:
    radii = tuple(int(radius) for radius in radii)
    if any(radius < 0 for radius in radii):
        raise ValueError("radii must be non-negative")
    if not radii:
        return BallPacking((), (), tuple(range(space.size)), _complement_full_rank(space, list(range(space.size))))
    if sum(ball_volume(space, radius) for radius in radii) > space.size:
        return None
    order = sorted(range(len(radii)), key=lambda k: -radii[k])
    distances = distance_matrix(space)
    fallback: list[BallPacking] = []
    nodes = [0]

    def finish(centers: list[int]) -> BallPacking:
        covered = np.zeros(space.size, dtype=bool)
        placed = [0] * len(radii)
        for slot, center in zip(order, centers):
            covered |= distances[center] <= radii[slot]
            placed[slot] = center
        complement = np.flatnonzero(~covered).tolist()
        return BallPacking(
            tuple(space.state_at(center) for center in placed),
            radii,
            tuple(complement),
            _complement_full_rank(space, complement),
        )

    def place(centers: list[int]) -> BallPacking | None:
        nodes[0] += 1
        if nodes[0] > node_budget:
            raise _BudgetExceeded
        if len(centers) == len(radii):
            packing = finish(centers)
            if packing.complement_full_rank:
                return packing
            if not fallback:
                fallback.append(packing)
            return None
        radius = radii[order[len(centers)]]
        start = 0 if not centers else centers[-1] + 1 if radius == radii[order[len(centers) - 1]] else 0
        for candidate in range(start, space.size):
            if candidate in centers:
                continue
            if all(
                distances[candidate, center] > radius + radii[slot]
                for slot, center in zip(order, centers)
            ):
                found = place(centers + [candidate])
                if found is not None:
                    return found
        return None

    try:
        found = place([0])
    except _BudgetExceeded:
        found = None
        log.info("ball packing search for radii %s stopped at %d nodes", list(radii), node_budget)
    if found is not None:
        return found
    return fallback[0] if fallback else None


def balls_disjoint(space: StateSpace, centers: Sequence[Sequence[int]], radii: Sequence[int]) -> bool:
    for (a, ra), (b, rb) in itertools.combinations(zip(centers, radii), 2):
        if hamming_distance(a, b, space) <= ra + rb:
            return False
    return True
