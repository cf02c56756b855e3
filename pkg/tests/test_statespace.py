import csv
import io
import itertools
from pathlib import Path
import sys

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from exact_rank import affine_rank, exact_rank
from statespace import (
    InstanceTooLargeError,
    StateSpace,
    StateSpaceError,
    affine_dimension,
    ball_volume,
    build_statistics,
    check_exact_size,
    distance_functional,
    distance_matrix,
    hamming_ball,
    hamming_distance,
    hamming_sphere,
    joint_statistics,
    parse_cards,
    statistics_csv,
)


def test_build_statistics_for_three_by_two():
    stats = build_statistics(StateSpace((3, 2)))

    assert stats.d == 4
    assert stats.matrix.tolist() == [
        [1, 1, 1, 1, 1, 1],
        [0, 0, 1, 1, 0, 0],
        [0, 0, 0, 0, 1, 1],
        [0, 1, 0, 1, 0, 1],
    ]
    assert stats.row_names() == ["const", "x1=1", "x1=2", "x2=1"]


def test_single_binary_variable_has_two_rows():
    stats = build_statistics(StateSpace((2,)))

    assert stats.matrix.tolist() == [[1, 1], [0, 1]]


def test_statistics_rows_are_linearly_independent():
    stats = build_statistics(StateSpace((3, 2, 4)))

    assert exact_rank(stats.matrix) == stats.d == 1 + 2 + 1 + 3


def test_statistics_matrix_is_read_only():
    stats = build_statistics(StateSpace((2, 2)))

    with pytest.raises(ValueError):
        stats.matrix[0, 0] = 5


@pytest.mark.parametrize("cards", [(), (1, 2), (2, 0)])
def test_invalid_cards_are_rejected(cards):
    with pytest.raises(StateSpaceError):
        StateSpace(cards)


def test_parse_cards_reads_comma_separated_integers():
    assert parse_cards("3,2").cards == (3, 2)
    assert parse_cards("2, 2, 2").cards == (2, 2, 2)
    with pytest.raises(StateSpaceError, match="comma-separated"):
        parse_cards("3,x")


def test_enumeration_is_lexicographic_with_first_variable_most_significant():
    space = StateSpace((3, 2))

    assert [tuple(state) for state in space.states()] == list(itertools.product(range(3), range(2)))
    assert space.index_of((1, 1)) == 3
    assert space.state_at(4) == (2, 0)
    assert space.labels() == ["00", "01", "10", "11", "20", "21"]


def test_index_of_rejects_out_of_range_states():
    space = StateSpace((3, 2))

    with pytest.raises(StateSpaceError):
        space.index_of((3, 0))
    with pytest.raises(StateSpaceError):
        space.index_of((0,))
    with pytest.raises(StateSpaceError):
        space.state_at(6)


def test_state_space_json_round_trip():
    space = StateSpace((4, 2, 3))

    assert StateSpace.from_json(space.to_json()) == space
    assert space.to_json() == [4, 2, 3]


def test_joint_statistics_is_kronecker_product():
    vis = build_statistics(StateSpace((2, 2)))
    hid = build_statistics(StateSpace((3,)))
    joint = joint_statistics(vis, hid)

    assert joint.shape == (9, 12)
    assert np.array_equal(joint.matrix, np.kron(vis.matrix, hid.matrix))
    assert joint.joint_index(2, 1) == 7
    assert np.array_equal(joint.column(2, 1), joint.matrix[:, 7])


def test_joint_statistics_respects_exact_cap():
    vis = build_statistics(StateSpace((2, 2, 2)))
    hid = build_statistics(StateSpace((2, 2)))

    with pytest.raises(InstanceTooLargeError, match="exceeds"):
        joint_statistics(vis, hid, cap=16)
    with pytest.raises(InstanceTooLargeError):
        check_exact_size(33, cap=32)
    check_exact_size(32, cap=32)


def test_hamming_distance_and_matrix_agree():
    space = StateSpace((3, 2, 2))
    matrix = distance_matrix(space)

    assert hamming_distance((0, 1, 1), (2, 1, 0)) == 2
    assert hamming_distance((0, 1, 1), (0, 1, 1), space) == 0
    for a, b in [(0, 11), (3, 7), (5, 5)]:
        assert matrix[a, b] == hamming_distance(space.state_at(a), space.state_at(b))


def test_balls_and_spheres():
    space = StateSpace.binary(4)
    center = (0, 0, 0, 0)

    assert len(hamming_ball(space, center, 1)) == 5
    assert len(hamming_sphere(space, center, 2)) == 6
    assert ball_volume(space, 1) == 5
    assert ball_volume(space, 4) == 16
    assert ball_volume(StateSpace((3, 3, 3)), 1) == 7
    assert ball_volume(StateSpace((3, 2)), 1) == 4


@pytest.mark.parametrize("cards", [(2, 2, 2), (3, 2), (4, 3, 2)])
def test_ball_volume_matches_enumeration(cards):
    space = StateSpace(cards)
    for radius in range(space.n + 1):
        assert ball_volume(space, radius) == len(hamming_ball(space, (0,) * space.n, radius))


@pytest.mark.parametrize("center", [(0, 0, 0), (2, 1, 0), (1, 0, 3)])
def test_distance_functional_is_linear_in_statistics(center):
    space = StateSpace((3, 2, 4))
    stats = build_statistics(space)
    delta = distance_functional(space, center)

    for x in range(space.size):
        state = space.state_at(x)
        assert delta @ stats.matrix[:, x] == pytest.approx(hamming_distance(state, center))


def test_affine_dimension_of_states():
    space = StateSpace.binary(3)

    assert affine_dimension(space, [0]) == 0
    assert affine_dimension(space, [0, 7]) == 1
    assert affine_dimension(space, range(8)) == 3
    assert affine_rank(np.zeros((2, 0))) == -1


def test_exact_rank_handles_rational_entries():
    assert exact_rank([[1, 2], [2, 4]]) == 1
    assert exact_rank(np.array([[0.5, 1.0], [1.0, 2.0]])) == 1
    assert exact_rank(np.array([[1 / 3, 0.0], [0.0, 1.0]])) == 2


def test_statistics_csv_has_state_label_header():
    reader = csv.reader(io.StringIO(statistics_csv(build_statistics(StateSpace((2, 2)))).decode()))
    rows = list(reader)

    assert rows[0] == ["row", "00", "01", "10", "11"]
    assert rows[1] == ["const", "1", "1", "1", "1"]
    assert rows[3] == ["x2=1", "0", "1", "0", "1"]
