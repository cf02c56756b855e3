import itertools
import math
from pathlib import Path
import sys

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from coding import Code
from geometry import (
    CodeDistanceError,
    NonGenericError,
    Slicing,
    component_modes,
    concave_realizer,
    covers_code,
    enumerate_slicings,
    example_orthant_map,
    find_mode_certificate,
    hidden_orthants,
    inference_function,
    interval_realizer,
    is_realizable,
    modes,
    normal_cone,
    normal_cone_contains,
    parallel_slicing,
    slicing_from_map,
    strong_mode_certificate,
    strong_modes,
    strong_modes_by_scan,
)
from models import (
    DiscreteRBM,
    Distribution,
    MixtureModelSpec,
    ThetaMatrix,
    conditional_hidden_given_visible,
    mixture_distribution,
    rbm_marginal,
)
from statespace import StateSpace, StateSpaceError, build_statistics


def concentrated_mixture(space, words, sharpness=0.98):
    """Equal mixture of product distributions peaked at each word."""
    states = space.states()
    weights = np.zeros(space.size)
    for word in words:
        agree = (states == np.array(word)).sum(axis=1)
        weights += sharpness ** agree * (1 - sharpness) ** (space.n - agree)
    return Distribution.from_weights(space, weights)


def test_zero_vector_lies_in_every_cone():
    space = StateSpace((3, 2))

    for state in space.states():
        assert normal_cone_contains(space, state, np.zeros(space.d))
        assert not normal_cone_contains(space, state, np.zeros(space.d), strict=True)


def test_vertex_direction_is_strictly_in_its_own_cone():
    space = StateSpace((2, 2))
    matrix = build_statistics(space).matrix.astype(float)
    mean = matrix.mean(axis=1)

    for x, state in enumerate(space.states()):
        v = matrix[:, x] - mean
        assert normal_cone_contains(space, state, v, strict=True)
        assert int(np.argmax(v @ matrix)) == x


def test_normal_cone_contains_rejects_wrong_length():
    with pytest.raises(StateSpaceError, match="length"):
        normal_cone_contains(StateSpace((2, 2)), (0, 0), np.zeros(5))


def test_random_vectors_fall_in_exactly_one_cone():
    space = StateSpace((3, 2, 2))
    cones = [normal_cone(space, state) for state in space.states()]
    rng = np.random.default_rng(0)

    for _ in range(1000):
        v = rng.standard_normal(space.d)
        hits = [cone.apex for cone in cones if cone.contains(v, strict=True)]
        assert len(hits) == 1
        assert normal_cone_contains(space, hits[0], v, strict=True)


def test_orthant_example_reproduces_product_matrix():
    example = example_orthant_map()
    matrix = build_statistics(example.visible).matrix.astype(float)
    columns = [matrix[:, example.visible.index_of(state)] for state in example.states]

    product = example.theta.entries[1:] @ np.array(columns).T
    assert np.array_equal(product, example.product)


def test_orthant_example_hits_six_even_orthants():
    example = example_orthant_map()
    orthants = hidden_orthants(example)

    assert len(set(orthants)) == 6
    assert all(sum(orthant) % 2 == 0 for orthant in orthants)
    expected = [tuple(int(value > 0) for value in column) for column in example.product.T]
    assert orthants == expected


def test_zero_theta_infers_every_hidden_state():
    rbm = DiscreteRBM.zeros(StateSpace((3, 2)), StateSpace((2, 3)))

    assert sorted(inference_function(rbm, (1, 1))) == [tuple(y) for y in rbm.hidden.states()]
    assert inference_function(rbm, (1, 1), single=True) == (0, 0)


def test_inference_matches_conditional_argmax():
    rng = np.random.default_rng(4)
    rbm = DiscreteRBM.random(StateSpace((3, 2, 2)), StateSpace((3, 2)), rng, scale=2.0)

    for state in rbm.visible.states():
        conditional = conditional_hidden_given_visible(rbm, state)
        best = rbm.hidden.state_at(int(np.argmax(conditional.probs)))
        assert inference_function(rbm, state) == [best]
        assert inference_function(rbm, state, single=True) == best


def test_slicing_from_map_matches_inference():
    rng = np.random.default_rng(2)
    visible, hidden = StateSpace((2, 3)), StateSpace((2, 2))
    theta = ThetaMatrix.random(hidden.d, visible.d, rng)
    slicing = slicing_from_map(visible, hidden, theta)
    rbm = DiscreteRBM(visible, hidden, theta)

    for x, state in enumerate(visible.states()):
        assert hidden.state_at(int(slicing.assignment[x])) == inference_function(rbm, state, single=True)
    assert sum(len(cell) for cell in slicing.cells()) == visible.size
    assert is_realizable(slicing) is not None


def test_slicing_from_map_reports_ties():
    visible, hidden = StateSpace((2, 2)), StateSpace((2,))

    with pytest.raises(NonGenericError) as raised:
        slicing_from_map(visible, hidden, ThetaMatrix.zeros(hidden.d, visible.d))
    assert raised.value.state == (0, 0)


def test_slicing_validation():
    with pytest.raises(StateSpaceError):
        Slicing(StateSpace((2, 2)), StateSpace((2,)), [0, 1, 2, 0])
    with pytest.raises(StateSpaceError):
        Slicing(StateSpace((2, 2)), StateSpace((2,)), [0, 1])


def test_fourteen_of_sixteen_square_labellings_are_realizable():
    visible, hidden = StateSpace((2, 2)), StateSpace((2,))
    realizable = {
        labels
        for labels in itertools.product(range(2), repeat=4)
        if is_realizable(Slicing(visible, hidden, labels)) is not None
    }

    assert len(realizable) == 14
    assert (0, 1, 1, 0) not in realizable
    assert (1, 0, 0, 1) not in realizable

    found = enumerate_slicings(visible, 2, budget=2000, seed=0)
    assert {slicing.key() for slicing in found} == realizable


def test_enumerate_slicings_edge_cases():
    space = StateSpace((2, 2))

    assert enumerate_slicings(space, 2, budget=0) == []
    found = enumerate_slicings(space, space.size, budget=50, seed=1)
    assert any(len(set(slicing.key())) == space.size for slicing in found)


def test_parallel_slicing_by_hamming_weight():
    space = StateSpace.binary(3)
    direction = np.array([0.0, 1.0, 1.0, 1.0])
    slicing = parallel_slicing(space, 4, direction, [0.5, 1.5, 2.5])

    weights = space.states().sum(axis=1)
    assert slicing.assignment.tolist() == weights.tolist()
    assert slicing.realizer is not None
    assert is_realizable(slicing) is not None


def test_two_cell_parallel_slicing_is_a_halfspace():
    space = StateSpace((3, 2))
    direction = np.array([0.3, -1.0, 0.7, 2.0])
    slicing = parallel_slicing(space, 2, direction, [0.5])

    projections = direction @ build_statistics(space).matrix
    assert slicing.assignment.tolist() == (projections > 0.5).astype(int).tolist()
    assert np.linalg.matrix_rank(slicing.theta.entries[1:]) == 1


def test_parallel_slicing_reports_states_on_hyperplanes():
    space = StateSpace.binary(3)

    with pytest.raises(NonGenericError) as raised:
        parallel_slicing(space, 2, np.array([0.0, 1.0, 1.0, 1.0]), [1.0])
    assert sum(raised.value.state) == 1
    with pytest.raises(ValueError, match="increasing"):
        parallel_slicing(space, 3, np.array([0.0, 1.0, 1.0, 1.0]), [1.5, 0.5])


def test_concave_parallel_realizer_intervals():
    space = StateSpace((3, 2))
    direction = np.array([0.0, 1.0, 2.0, 0.5])
    f = lambda b: -math.exp(-b)
    slicing = parallel_slicing(space, 3, direction, [0.75, 1.75], f=f)

    assert slicing.assignment.tolist() == [int(state[0]) for state in space.states()]
    realizer = slicing.realizer
    intervals = interval_realizer(realizer.r, realizer.b)
    assert all(lo < hi for lo, hi in intervals)
    assert list(realizer.r) == pytest.approx([f(b) for b in realizer.b])
    projections = direction @ build_statistics(space).matrix
    for x, value in enumerate(projections):
        lam = realizer.offset + realizer.scale * value
        lo, hi = intervals[slicing.assignment[x]]
        assert lo < lam < hi
    assert is_realizable(slicing) is not None


def test_concave_realizer():
    r, b = concave_realizer(3, lambda value: -math.exp(-value))

    assert b == (0.0, 1.0, 2.0)
    assert all(lo < hi for lo, hi in interval_realizer(r, b))
    with pytest.raises(ValueError, match="concave"):
        concave_realizer(3, lambda value: value)
    with pytest.raises(ValueError, match="increasing"):
        concave_realizer(3, lambda value: value, b=[0.0, 0.0, 1.0])


def test_interval_realizer_drops_dominated_lines():
    intervals = interval_realizer([0.0, 1.0, 1.0], [0.0, 1.0, 0.5])

    lo, hi = intervals[1]
    assert lo >= hi


def test_strong_modes_of_trivial_distributions():
    space = StateSpace((3, 2))

    assert strong_modes(Distribution.point_mass(space, (2, 1))) == [(2, 1)]
    assert strong_modes(Distribution.uniform(space)) == []


def test_strong_modes_of_concentrated_mixture_are_the_code():
    space = StateSpace.binary(3)
    words = [(0, 0, 0), (0, 1, 1), (1, 0, 1), (1, 1, 0)]
    p = concentrated_mixture(space, words)

    assert strong_modes(p) == words
    assert strong_modes_by_scan(p) == words
    assert set(words) <= set(modes(p))


@pytest.mark.parametrize("seed", range(5))
def test_strong_mode_computations_agree(seed):
    rng = np.random.default_rng(seed)
    space = StateSpace((3, 2, 2))
    p = Distribution(space, rng.dirichlet(np.full(space.size, 0.2)))

    assert strong_modes(p) == strong_modes_by_scan(p)
    assert set(strong_modes(p)) <= set(modes(p))


def test_certificate_for_two_antipodal_words():
    visible, hidden = StateSpace.binary(4), StateSpace.binary(1)
    code = Code(visible, ((0, 0, 0, 0), (1, 1, 1, 1)))
    certificate = find_mode_certificate(visible, hidden, code, seed=0)

    assert certificate is not None
    rbm = DiscreteRBM(visible, hidden, certificate.theta)
    assert strong_modes(rbm_marginal(rbm)) == list(code.words)
    assert covers_code(rbm, code)
    assert set(component_modes(rbm)) == set(code.words)
    assert np.array_equal(strong_mode_certificate(visible, hidden, code, seed=0).entries, certificate.theta.entries)


def test_certificate_for_single_word():
    visible, hidden = StateSpace((3, 2)), StateSpace.binary(1)
    code = Code(visible, ((2, 0),))
    theta = strong_mode_certificate(visible, hidden, code)

    assert theta is not None
    assert strong_modes(rbm_marginal(DiscreteRBM(visible, hidden, theta))) == [(2, 0)]


def test_two_binary_hidden_units_give_four_strong_modes():
    visible, hidden = StateSpace.binary(4), StateSpace.binary(2)
    code = Code(visible, ((0, 0, 0, 0), (1, 1, 0, 0), (0, 0, 1, 1), (1, 1, 1, 1)))
    certificate = find_mode_certificate(visible, hidden, code, seed=3)

    assert certificate is not None
    rbm = DiscreteRBM(visible, hidden, certificate.theta)
    assert strong_modes(rbm_marginal(rbm)) == list(code.words)
    assert covers_code(rbm, code)


def test_certificate_requires_distance_two():
    visible = StateSpace.binary(3)
    code = Code(visible, ((0, 0, 0), (0, 0, 1)))

    with pytest.raises(CodeDistanceError):
        find_mode_certificate(visible, StateSpace.binary(2), code)


def test_certificate_needs_enough_hidden_states():
    visible = StateSpace.binary(3)
    code = Code(visible, ((0, 0, 0), (0, 1, 1), (1, 0, 1), (1, 1, 0)))

    assert find_mode_certificate(visible, StateSpace.binary(1), code) is None


def test_mixtures_have_at_most_k_strong_modes():
    rng = np.random.default_rng(7)

    for _ in range(200):
        n, k = int(rng.integers(2, 5)), int(rng.integers(1, 5))
        space = StateSpace.binary(n)
        spec = MixtureModelSpec(space, rng.dirichlet(np.ones(k)), 3.0 * rng.standard_normal((k, space.d)))
        assert len(strong_modes(mixture_distribution(spec))) <= k
