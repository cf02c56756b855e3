"""Exact rank of integer and rational matrices."""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

import numpy as np
from sympy import QQ
from sympy.polys.matrices import DomainMatrix


def exact_rank(matrix: np.ndarray | Sequence[Sequence[int]]) -> int:
    array = np.asarray(matrix)
    if array.ndim != 2:
        raise ValueError("exact_rank expects a two-dimensional matrix")
    if array.size == 0:
        return 0
    if np.issubdtype(array.dtype, np.floating):
        rows = [[_rational(value) for value in row] for row in array]
    else:
        rows = [[QQ(int(value)) for value in row] for row in array]
    return int(DomainMatrix(rows, array.shape, QQ).rank())


def affine_rank(columns: np.ndarray) -> int:
    """Dimension of the affine hull of the given columns."""
    columns = np.asarray(columns)
    if columns.shape[1] == 0:
        return -1
    lifted = np.vstack([np.ones((1, columns.shape[1]), dtype=columns.dtype), columns])
    return exact_rank(lifted) - 1


def _rational(value: float):
    fraction = Fraction(float(value)).limit_denominator(10 ** 12)
    return QQ(fraction.numerator, fraction.denominator)
