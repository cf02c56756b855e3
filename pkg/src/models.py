"""Independence models, naive Bayes mixtures and discrete RBMs.

Theta (d_Y x d_X) is the only stored parametrization. The binary (W, B, C)
form and the homogeneous gamma form are converters. Joint states (x, y)
sit at x * |Y| + y and theta vectorizes column by column, so
theta[a * d_Y + b] == Theta[b, a] lines up with the rows of A^(X) ⊗ A^(Y).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
import logging
from typing import Any, Sequence

import numpy as np
from scipy.special import logsumexp

from rbm_settings import DEFAULT_EXACT_CAP, SURROGATE_MAGNITUDE, TOL_EXACT
from report_store import csv_bytes
from statespace import (
    StateSpace,
    SufficientStatistics,
    build_statistics,
    check_exact_size,
    joint_statistics,
)


log = logging.getLogger(__name__)


class ParameterError(ValueError):
    pass


class ZeroNormalizerError(ArithmeticError):
    pass


def _sum_tolerance(size: int) -> float:
    return max(TOL_EXACT, 1e-15 * size)


@dataclass(frozen=True, eq=False)
class Distribution:
    space: StateSpace
    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        if probs.shape != (self.space.size,):
            raise ParameterError(
                f"distribution has shape {probs.shape}, expected ({self.space.size},)"
            )
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise ParameterError("probabilities must be finite and non-negative")
        if abs(probs.sum() - 1.0) > _sum_tolerance(probs.size):
            raise ParameterError(f"probabilities sum to {probs.sum()!r}, not 1")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_weights(cls, space: StateSpace, weights: np.ndarray) -> "Distribution":
        weights = np.asarray(weights, dtype=float)
        total = weights.sum()
        if not total > 0:
            raise ZeroNormalizerError("weights have no positive mass")
        return cls(space, weights / total)

    @classmethod
    def from_log_weights(cls, space: StateSpace, log_weights: np.ndarray) -> "Distribution":
        log_weights = np.asarray(log_weights, dtype=float)
        return cls(space, np.exp(log_weights - logsumexp(log_weights)))

    @classmethod
    def uniform(cls, space: StateSpace) -> "Distribution":
        return cls(space, np.full(space.size, 1.0 / space.size))

    @classmethod
    def point_mass(cls, space: StateSpace, state: Sequence[int]) -> "Distribution":
        probs = np.zeros(space.size)
        probs[space.index_of(state)] = 1.0
        return cls(space, probs)

    def prob(self, state: Sequence[int]) -> float:
        return float(self.probs[self.space.index_of(state)])

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.probs > 0)

    def marginal(self, i: int) -> np.ndarray:
        table = self.probs.reshape(self.space.cards)
        axes = tuple(axis for axis in range(self.space.n) if axis != i)
        return table.sum(axis=axes)

    def product_of_marginals(self) -> np.ndarray:
        result = np.ones(1)
        for i in range(self.space.n):
            result = np.outer(result, self.marginal(i)).ravel()
        return result

    def total_variation(self, other: "Distribution") -> float:
        return 0.5 * float(np.abs(self.probs - other.probs).sum())

    def to_csv(self) -> bytes:
        return csv_bytes(
            ["state", "probability"],
            [[label, repr(float(p))] for label, p in zip(self.space.labels(), self.probs)],
        )

    def to_json(self) -> dict[str, Any]:
        return {"space": self.space.to_json(), "probs": self.probs.tolist()}


@dataclass(frozen=True, eq=False)
class ThetaMatrix:
    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float)
        if entries.ndim != 2:
            raise ParameterError("theta must be a two-dimensional matrix")
        if not np.all(np.isfinite(entries)):
            raise ParameterError("theta entries must be finite")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    def vectorize(self) -> np.ndarray:
        return self.entries.flatten(order="F")

    @classmethod
    def from_vector(cls, theta: np.ndarray, d_y: int, d_x: int) -> "ThetaMatrix":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (d_y * d_x,):
            raise ParameterError(f"theta vector has shape {theta.shape}, expected ({d_y * d_x},)")
        return cls(theta.reshape((d_y, d_x), order="F"))

    @classmethod
    def zeros(cls, d_y: int, d_x: int) -> "ThetaMatrix":
        return cls(np.zeros((d_y, d_x)))

    @classmethod
    def random(
        cls, d_y: int, d_x: int, rng: np.random.Generator, scale: float = 1.0
    ) -> "ThetaMatrix":
        return cls(scale * rng.standard_normal((d_y, d_x)))

    @classmethod
    def from_binary(cls, W: np.ndarray, B: np.ndarray, C: np.ndarray) -> "ThetaMatrix":
        """Embed interaction W (m x n), visible bias B (n) and hidden bias C (m)."""
        W = np.atleast_2d(np.asarray(W, dtype=float))
        B = np.asarray(B, dtype=float).ravel()
        C = np.asarray(C, dtype=float).ravel()
        m, n = W.shape
        if B.shape != (n,) or C.shape != (m,):
            raise ParameterError("bias shapes must match the interaction matrix")
        entries = np.zeros((m + 1, n + 1))
        entries[0, 1:] = B
        entries[1:, 0] = C
        entries[1:, 1:] = W
        return cls(entries)

    def to_binary(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (
            self.entries[1:, 1:].copy(),
            self.entries[0, 1:].copy(),
            self.entries[1:, 0].copy(),
        )

    def scaled(self, alpha: float) -> "ThetaMatrix":
        return ThetaMatrix(alpha * self.entries)

    def to_json(self) -> list[list[float]]:
        return self.entries.tolist()


@dataclass(frozen=True, eq=False)
class DiscreteRBM:
    visible: StateSpace
    hidden: StateSpace
    theta: ThetaMatrix

    def __post_init__(self):
        if not isinstance(self.theta, ThetaMatrix):
            object.__setattr__(self, "theta", ThetaMatrix(self.theta))
        expected = (self.hidden.d, self.visible.d)
        if self.theta.shape != expected:
            raise ParameterError(f"theta has shape {self.theta.shape}, expected {expected}")

    @property
    def m(self) -> int:
        return self.hidden.n

    @cached_property
    def visible_statistics(self) -> SufficientStatistics:
        return build_statistics(self.visible)

    @cached_property
    def hidden_statistics(self) -> SufficientStatistics:
        return build_statistics(self.hidden)

    def unit_rows(self, j: int) -> slice:
        """Rows of Theta belonging to hidden unit j (states 1..s_j - 1)."""
        start = 1 + sum(card - 1 for card in self.hidden.cards[:j])
        return slice(start, start + self.hidden.cards[j] - 1)

    def visible_columns(self, i: int) -> slice:
        start = 1 + sum(card - 1 for card in self.visible.cards[:i])
        return slice(start, start + self.visible.cards[i] - 1)

    def with_theta(self, theta: ThetaMatrix | np.ndarray) -> "DiscreteRBM":
        return DiscreteRBM(self.visible, self.hidden, theta)

    @classmethod
    def zeros(cls, visible: StateSpace, hidden: StateSpace) -> "DiscreteRBM":
        return cls(visible, hidden, ThetaMatrix.zeros(hidden.d, visible.d))

    @classmethod
    def random(
        cls,
        visible: StateSpace,
        hidden: StateSpace,
        rng: np.random.Generator,
        scale: float = 1.0,
    ) -> "DiscreteRBM":
        return cls(visible, hidden, ThetaMatrix.random(hidden.d, visible.d, rng, scale))

    def to_json(self) -> dict[str, Any]:
        return {
            "visible": self.visible.to_json(),
            "hidden": self.hidden.to_json(),
            "theta": self.theta.to_json(),
        }

    @classmethod
    def from_json(cls, payload: dict[str, Any]) -> "DiscreteRBM":
        try:
            return cls(
                StateSpace.from_json(payload["visible"]),
                StateSpace.from_json(payload["hidden"]),
                ThetaMatrix(np.asarray(payload["theta"], dtype=float)),
            )
        except KeyError as exc:
            raise ParameterError(f"model file is missing {exc.args[0]!r}") from exc


@dataclass(frozen=True, eq=False)
class MixtureModelSpec:
    space: StateSpace
    weights: np.ndarray
    components: np.ndarray

    def __post_init__(self):
        weights = np.array(self.weights, dtype=float).ravel()
        components = np.atleast_2d(np.array(self.components, dtype=float))
        if components.shape != (weights.size, self.space.d):
            raise ParameterError(
                f"components have shape {components.shape}, expected ({weights.size}, {self.space.d})"
            )
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise ParameterError("mixture weights must lie in the simplex")
        if not np.all(np.isfinite(components)):
            raise ParameterError("component parameters must be finite")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "components", components)

    @property
    def k(self) -> int:
        return self.weights.size


def log_partition(stats: SufficientStatistics, param: np.ndarray) -> float:
    return float(logsumexp(np.asarray(param, dtype=float) @ stats.matrix))


def exp_family_distribution(stats: SufficientStatistics, param: np.ndarray) -> Distribution:
    param = np.asarray(param, dtype=float)
    if param.shape != (stats.d,):
        raise ParameterError(f"parameter has shape {param.shape}, expected ({stats.d},)")
    return Distribution.from_log_weights(stats.space, param @ stats.matrix)


def joint_log_weights(
    rbm: DiscreteRBM,
    method: str = "roth",
    cap: int = DEFAULT_EXACT_CAP,
) -> np.ndarray:
    """Unnormalized log p(x, y) in joint order.

    "kronecker" evaluates <theta, A^(X,Y)_(x,y)>; "roth" evaluates
    <Theta A^(X)_x, A^(Y)_y> without building the Kronecker product.
    """
    joint = joint_statistics(rbm.visible_statistics, rbm.hidden_statistics, cap=cap)
    if method == "kronecker":
        return rbm.theta.vectorize() @ joint.matrix
    if method == "roth":
        projected = rbm.theta.entries @ rbm.visible_statistics.matrix
        return (rbm.hidden_statistics.matrix.T @ projected).T.ravel()
    raise ValueError(f"unknown method: {method}")


def rbm_joint(rbm: DiscreteRBM, cap: int = DEFAULT_EXACT_CAP) -> Distribution:
    space = StateSpace(rbm.visible.cards + rbm.hidden.cards)
    return Distribution.from_log_weights(space, joint_log_weights(rbm, cap=cap))


def log_marginal_unnormalized(rbm: DiscreteRBM) -> np.ndarray:
    """Visible log-weights as a product of per-unit experts, no sum over Y."""
    projected = rbm.theta.entries @ rbm.visible_statistics.matrix
    result = projected[0].copy()
    for j in range(rbm.m):
        unit = projected[rbm.unit_rows(j)]
        result += logsumexp(np.vstack([np.zeros((1, unit.shape[1])), unit]), axis=0)
    return result


def rbm_marginal(rbm: DiscreteRBM, cap: int = DEFAULT_EXACT_CAP) -> Distribution:
    check_exact_size(rbm.visible.size * rbm.hidden.size, cap)
    return Distribution.from_log_weights(rbm.visible, log_marginal_unnormalized(rbm))


def hidden_expectations(rbm: DiscreteRBM) -> np.ndarray:
    """E[A^(Y) | x] for every visible state, shape (|X|, d_Y)."""
    projected = rbm.theta.entries @ rbm.visible_statistics.matrix
    result = np.ones((rbm.visible.size, rbm.hidden.d))
    for j in range(rbm.m):
        rows = rbm.unit_rows(j)
        logits = np.vstack([np.zeros((1, rbm.visible.size)), projected[rows]])
        probs = np.exp(logits - logsumexp(logits, axis=0, keepdims=True))
        result[:, rows] = probs[1:].T
    return result


def feature_expectations(rbm: DiscreteRBM) -> np.ndarray:
    """Rows E[A^(X,Y)_(x, .) | x] in vectorized-theta order; d log p(x) / d theta = row - mean."""
    visible = rbm.visible_statistics.matrix.astype(float)
    expected = hidden_expectations(rbm)
    return np.einsum("ax,xb->xab", visible, expected).reshape(rbm.visible.size, -1)


def homogeneous_parameters(rbm: DiscreteRBM) -> list[list[np.ndarray]]:
    """Edge parameters theta_hom[j][i] of shape (s_j, r_i).

    Summing theta_hom[j][i][y_j, x_i] over all edges reproduces
    <Theta A^(X)_x, A^(Y)_y> exactly; the constant row and column are
    folded into unit 0 and variable 0 respectively.
    """
    theta = rbm.theta.entries
    result: list[list[np.ndarray]] = []
    for j, s in enumerate(rbm.hidden.cards):
        rows = rbm.unit_rows(j)
        blocks = []
        for i, r in enumerate(rbm.visible.cards):
            cols = rbm.visible_columns(i)
            block = np.zeros((s, r))
            block[1:, 1:] = theta[rows, cols]
            if j == 0:
                block[:, 1:] += theta[0, cols]
            if i == 0:
                block[1:, :] += theta[rows, 0][:, None]
            if i == 0 and j == 0:
                block += theta[0, 0]
            blocks.append(block)
        result.append(blocks)
    return result


def gamma_parameters(rbm: DiscreteRBM) -> list[list[np.ndarray]]:
    return [[np.exp(block) for block in blocks] for blocks in homogeneous_parameters(rbm)]


def rbm_marginal_polynomial(
    rbm: DiscreteRBM,
    gamma: list[list[np.ndarray]] | None = None,
) -> Distribution:
    """p(v) ∝ prod_j sum_{h_j} prod_i gamma[j][i][h_j, v_i]."""
    if gamma is None:
        log_gamma = homogeneous_parameters(rbm)
    else:
        if any(np.any(np.asarray(block) <= 0) for blocks in gamma for block in blocks):
            raise ParameterError("gamma parameters must be strictly positive")
        log_gamma = [[np.log(np.asarray(block, dtype=float)) for block in blocks] for blocks in gamma]
    states = rbm.visible.states()
    total = np.zeros(rbm.visible.size)
    for j, s in enumerate(rbm.hidden.cards):
        acc = np.zeros((s, rbm.visible.size))
        for i in range(rbm.visible.n):
            block = log_gamma[j][i]
            if block.shape != (s, rbm.visible.cards[i]):
                raise ParameterError(f"gamma block ({j}, {i}) has shape {block.shape}")
            acc += block[:, states[:, i]]
        total += logsumexp(acc, axis=0)
    return Distribution.from_log_weights(rbm.visible, total)


def visible_parameter_given_hidden(rbm: DiscreteRBM, y: Sequence[int]) -> np.ndarray:
    return rbm.theta.entries.T @ rbm.hidden_statistics.column(y)


def hidden_parameter_given_visible(rbm: DiscreteRBM, x: Sequence[int]) -> np.ndarray:
    return rbm.theta.entries @ rbm.visible_statistics.column(x)


def conditional_visible_given_hidden(rbm: DiscreteRBM, y: Sequence[int]) -> Distribution:
    return exp_family_distribution(rbm.visible_statistics, visible_parameter_given_hidden(rbm, y))


def conditional_hidden_given_visible(rbm: DiscreteRBM, x: Sequence[int]) -> Distribution:
    return exp_family_distribution(rbm.hidden_statistics, hidden_parameter_given_visible(rbm, x))


def mixture_distribution(spec: MixtureModelSpec) -> Distribution:
    stats = build_statistics(spec.space)
    log_components = spec.components @ stats.matrix
    log_components -= logsumexp(log_components, axis=1, keepdims=True)
    with np.errstate(divide="ignore"):
        log_weights = np.log(spec.weights)
    return Distribution.from_log_weights(
        spec.space, logsumexp(log_components + log_weights[:, None], axis=0)
    )


def hadamard_product(p: Distribution, q: Distribution) -> Distribution:
    if p.space != q.space:
        raise ParameterError("Hadamard product needs distributions on the same space")
    weights = p.probs * q.probs
    if not weights.sum() > 0:
        raise ZeroNormalizerError("distributions have disjoint supports")
    return Distribution.from_weights(p.space, weights)


def _product_parameter(space: StateSpace, per_variable: list[np.ndarray]) -> np.ndarray:
    param = np.zeros(space.d)
    row = 1
    for logits, card in zip(per_variable, space.cards):
        param[row:row + card - 1] = logits[1:] - logits[0]
        row += card - 1
    return param


def hadamard_factors(rbm: DiscreteRBM) -> list[MixtureModelSpec]:
    """The m naive Bayes factors whose Hadamard product is the RBM marginal."""
    factors = []
    for blocks in homogeneous_parameters(rbm):
        s = blocks[0].shape[0]
        log_weights = np.array([
            sum(float(logsumexp(block[h])) for block in blocks) for h in range(s)
        ])
        components = np.vstack([
            _product_parameter(rbm.visible, [block[h] for block in blocks]) for h in range(s)
        ])
        weights = np.exp(log_weights - logsumexp(log_weights))
        factors.append(MixtureModelSpec(rbm.visible, weights, components))
    return factors


def mixture_from_rbm(rbm: DiscreteRBM) -> MixtureModelSpec:
    if rbm.m != 1:
        raise ParameterError("only a single hidden unit corresponds to a naive Bayes model")
    return hadamard_factors(rbm)[0]


def rbm_from_mixture(spec: MixtureModelSpec) -> DiscreteRBM:
    """A one-hidden-unit RBM whose marginal equals the mixture."""
    weights, components = spec.weights, spec.components
    if spec.k == 1:
        weights = np.array([0.5, 0.5])
        components = np.vstack([components, components])
    stats = build_statistics(spec.space)
    rows = []
    for weight, component in zip(weights, components):
        shifted = component.copy()
        log_weight = np.log(weight) if weight > 0 else -np.inf
        shifted[0] += max(log_weight, -SURROGATE_MAGNITUDE) - log_partition(stats, component)
        rows.append(shifted)
    base = rows[0]
    entries = np.vstack([base] + [row - base for row in rows[1:]])
    return DiscreteRBM(spec.space, StateSpace((len(rows),)), ThetaMatrix(entries))


def binary_rbm_energy_marginal(W: np.ndarray, B: np.ndarray, C: np.ndarray) -> Distribution:
    """Direct enumeration of sum_h exp(h'Wv + B'v + C'h) for binary units."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    B = np.asarray(B, dtype=float).ravel()
    C = np.asarray(C, dtype=float).ravel()
    m, n = W.shape
    visible = StateSpace.binary(n)
    hidden_states = StateSpace.binary(m).states()
    log_weights = []
    for v in visible.states():
        energies = hidden_states @ W @ v + B @ v + hidden_states @ C
        log_weights.append(logsumexp(energies))
    return Distribution.from_log_weights(visible, np.array(log_weights))
