import math
from pathlib import Path
import sys

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

import dimension
from dimension import (
    TABLE_HEADERS,
    DimensionChainError,
    JacobianRank,
    dimension_certificate,
    distance_three_lower_bound,
    expected_dimension,
    exponential_dimension,
    hadamard_upper_bound,
    jacobian_matrix,
    jacobian_rank,
    mixture_dimension,
    mixture_dimension_closed_form,
)
from models import DiscreteRBM, Distribution, ThetaMatrix, log_marginal_unnormalized
from rbm_settings import Settings
from statespace import InstanceTooLargeError, StateSpace
from tropical import TropicalDimension, tropical_dimension


FAST = Settings(search_budget=40, jacobian_samples=3, code_search_nodes=20_000)


def test_dimension_counts():
    visible, hidden = StateSpace((2, 2, 2)), StateSpace((3,))

    assert exponential_dimension(visible, hidden) == 4 * 3 - 1
    assert expected_dimension(visible, hidden) == 7
    assert expected_dimension(StateSpace((3, 3, 3)), StateSpace((2,))) == 13


def test_jacobian_matrix_is_derivative_of_log_marginal():
    rng = np.random.default_rng(0)
    rbm = DiscreteRBM.random(StateSpace((3, 2)), StateSpace((2,)), rng)
    jacobian = jacobian_matrix(rbm)
    vector = rbm.theta.vectorize()
    step = 1e-6

    def log_probs(values):
        moved = rbm.with_theta(ThetaMatrix.from_vector(values, rbm.hidden.d, rbm.visible.d))
        return np.log(Distribution.from_log_weights(rbm.visible, log_marginal_unnormalized(moved)).probs)

    for k in range(vector.size):
        shift = np.zeros(vector.size)
        shift[k] = step
        numeric = (log_probs(vector + shift) - log_probs(vector - shift)) / (2 * step)
        assert np.allclose(jacobian[:, k], numeric, atol=1e-6)


@pytest.mark.parametrize(
    "visible, hidden, expected",
    [((2, 2, 2, 2), (3,), 13), ((3, 3), (2,), 7), ((2, 2, 2), (2,), 7), ((2, 2), (2,), 3)],
)
def test_jacobian_rank(visible, hidden, expected):
    found = jacobian_rank(StateSpace(visible), StateSpace(hidden), samples=3, seed=0)

    assert found.rank == expected
    assert not found.uncertain
    space = StateSpace(visible)
    assert len(found.singular_values) == min(space.size, space.d * StateSpace(hidden).d)
    assert found.to_json()["rank"] == expected


def test_jacobian_rank_respects_exact_cap():
    with pytest.raises(InstanceTooLargeError):
        jacobian_rank(StateSpace.binary(5), StateSpace.binary(1), cap=16)


@pytest.mark.parametrize(
    "cards, k, expected",
    [
        ((2, 2, 2), 1, 3),
        ((4,), 3, 3),
        ((3, 4), 2, 9),
        ((3, 4), 3, 11),
        ((3, 4), 5, 11),
        ((2, 2, 2, 2), 3, 13),
        ((2, 2, 2, 2, 2), 2, 11),
        ((2, 2, 2), 3, 7),
        ((3, 3, 3), 2, None),
    ],
)
def test_mixture_dimension_closed_form(cards, k, expected):
    assert mixture_dimension_closed_form(StateSpace(cards), k) == expected


@pytest.mark.parametrize(
    "cards, k",
    [
        ((4,), 3),
        ((3, 4), 2),
        ((3, 4), 3),
        ((3, 4), 5),
        ((2, 2, 2, 2), 3),
        ((2, 2, 2, 2, 2), 2),
        ((2, 2, 2), 3),
        ((2, 2, 2, 2), 2),
        ((2, 2, 2, 2, 2), 3),
    ],
)
def test_mixture_closed_form_agrees_with_jacobian(cards, k):
    space = StateSpace(cards)

    found = jacobian_rank(space, StateSpace((k,)), samples=3, seed=2)

    assert mixture_dimension_closed_form(space, k) == found.rank


def test_mixture_dimension_needs_a_component():
    with pytest.raises(ValueError, match="at least one component"):
        mixture_dimension_closed_form(StateSpace((2, 2)), 0)


def test_mixture_dimension_falls_back_to_jacobian():
    assert mixture_dimension(StateSpace((3, 3, 3)), 2, samples=3) == 13


def test_hadamard_bound_of_single_unit_is_mixture_dimension():
    bound = hadamard_upper_bound(StateSpace((2, 2, 2, 2)), StateSpace((3,)))

    assert bound.value == 13
    assert bound.per_unit == (13,)
    assert bound.defective
    assert bound.to_json() == {"value": 13, "per_unit": [13], "defective": True}


def test_hadamard_bound_combines_units():
    calls = []

    def fake_dims(space, k):
        calls.append(k)
        return 10 * k

    bound = hadamard_upper_bound(StateSpace((2, 2, 2)), StateSpace((3, 2)), fake_dims)

    assert bound.per_unit == (30 + 10 + 1, 20 + 20 + 1)
    assert bound.value == 41
    assert sorted(calls) == [1, 2, 2, 3]


@pytest.mark.parametrize(
    "cards, value, method",
    [((2,) * 7, 16, "hamming-code"), ((2, 2, 2), 2, "hamming-code"), ((2, 2), 1, "single-word")],
)
def test_distance_three_lower_bound(cards, value, method):
    assert distance_three_lower_bound(StateSpace(cards), 20_000) == (value, method)


def test_distance_three_lower_bound_on_five_bits():
    value, _ = distance_three_lower_bound(StateSpace.binary(5), 20_000)

    assert value == 4


def test_defective_single_unit_model():
    report = dimension_certificate(StateSpace((2, 2, 2, 2)), StateSpace((3,)), FAST)

    assert report.expected == 14
    assert report.jacobian.rank == 13
    assert report.hadamard.value == 13
    assert report.verdict == "defective"
    assert report.tropical_lower <= 13


def test_defective_two_by_two_table_model():
    report = dimension_certificate(StateSpace((3, 3)), StateSpace((2,)), FAST)

    assert report.expected == 8
    assert report.jacobian.rank == 7
    assert report.verdict == "defective"
    assert not any(condition.fired for condition in report.conditions)


def test_three_bits_and_one_unit_have_expected_dimension():
    report = dimension_certificate(StateSpace((2, 2, 2)), StateSpace((2,)), FAST)

    assert report.verdict == "expected-dimension"
    assert report.tropical_lower == 7
    packing = [condition for condition in report.conditions if condition.name == "binary-hidden-packing"]
    assert packing[0].fired and packing[0].claim == 7
    assert report.trace[0] == "expected dimension min(7, 7) = 7"


@pytest.mark.parametrize("visible", [(2,), (2, 2)])
def test_small_models_are_full_dimensional(visible):
    report = dimension_certificate(StateSpace(visible), StateSpace((2,)), FAST)

    assert report.verdict == "full-dimensional"
    assert report.expected == report.visible.size - 1
    assert report.tropical_lower == report.expected


def test_report_serializes_and_tabulates():
    report = dimension_certificate(StateSpace((2, 2)), StateSpace((2,)), FAST)
    payload = report.to_json()

    assert payload["ambient_dimension"] == 3
    assert payload["exponential_family_dimension"] == 5
    assert payload["verdict"] == "full-dimensional"
    assert payload["trace"] == list(report.trace)
    assert len(report.table_row()) == len(TABLE_HEADERS)
    assert report.table_row()[:3] == ["2,2", "2", 3]


def test_broken_rank_chain_raises(monkeypatch):
    monkeypatch.setattr(
        dimension, "jacobian_rank", lambda *args, **kwargs: JacobianRank(0, (), math.inf, 0, 1, False)
    )

    with pytest.raises(DimensionChainError, match="fails"):
        dimension_certificate(StateSpace((2, 2, 2)), StateSpace((2,)), FAST)


def test_no_certificate_and_uncertain_rank_is_undetermined(monkeypatch):
    monkeypatch.setattr(dimension, "_closed_form_conditions", lambda *args: [])
    monkeypatch.setattr(
        dimension,
        "tropical_dimension",
        lambda *args, **kwargs: TropicalDimension(2, 3, "lower bound", "none", None),
    )
    monkeypatch.setattr(
        dimension, "jacobian_rank", lambda *args, **kwargs: JacobianRank(2, (1.0, 0.5, 0.1), 2.0, 0, 1, True)
    )

    report = dimension_certificate(StateSpace((2, 2)), StateSpace((2,)), FAST)

    assert report.verdict == "undetermined"
    assert report.trace[-1].startswith("undetermined")


@pytest.mark.parametrize("n", [2, 3, 4, 5])
@pytest.mark.parametrize("k", [2, 3, 4])
def test_binary_naive_bayes_jacobian_rank(n, k):
    found = jacobian_rank(StateSpace.binary(n), StateSpace((k,)), samples=2, seed=1)

    expected = 13 if (n, k) == (4, 3) else min(n * k + k - 1, 2 ** n - 1)
    assert found.rank == expected
    assert found.gap >= 1e3


@pytest.mark.parametrize(
    "n, m, expected",
    [
        (3, 1, 7),
        (4, 1, 9),
        (5, 1, 11),
        (5, 2, 17),
        (5, 3, 23),
        (2, 2, 3),
        (2, 4, 3),
        (3, 2, 7),
        (3, 4, 7),
        (4, 4, 15),
    ],
)
def test_binary_rbm_jacobian_rank(n, m, expected):
    found = jacobian_rank(StateSpace.binary(n), StateSpace.binary(m), samples=2, seed=0)

    assert found.rank == expected


def test_rank_chain_on_random_shapes():
    rng = np.random.default_rng(11)

    for _ in range(30):
        visible = StateSpace(tuple(int(c) for c in rng.integers(2, 4, size=rng.integers(2, 4))))
        hidden = StateSpace(tuple(int(c) for c in rng.integers(2, 4, size=rng.integers(1, 3))))
        tropical = tropical_dimension(visible, hidden, budget=30, seed=0, node_budget=20_000)
        rank = jacobian_rank(visible, hidden, samples=2, seed=0).rank

        assert tropical.value <= rank <= expected_dimension(visible, hidden)
