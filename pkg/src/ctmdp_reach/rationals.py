"""Exact rational vectors and matrices.

Rationals are plain ``fractions.Fraction``; vectors are tuples of Fractions
and matrices tuples of such tuples, so model data stays hashable and
immutable.  Dimensions in this package are small (a few dozen states), so
plain Python loops are fine and keep everything exact.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

QVector = tuple[Fraction, ...]
QMatrix = tuple[QVector, ...]


def qvec(items: Iterable) -> QVector:
    return tuple(Fraction(x) for x in items)


def qmat(rows: Iterable[Iterable]) -> QMatrix:
    out = tuple(qvec(r) for r in rows)
    if out and any(len(r) != len(out[0]) for r in out):
        raise ValueError("ragged matrix")
    return out


def qzeros(n: int) -> QVector:
    return (Fraction(0),) * n


def qidentity(n: int) -> QMatrix:
    return tuple(
        tuple(Fraction(1 if i == j else 0) for j in range(n)) for i in range(n)
    )


def mat_vec(m: QMatrix, v: Sequence[Fraction]) -> QVector:
    return tuple(sum((row[j] * v[j] for j in range(len(v))), Fraction(0)) for row in m)


def vec_mat(v: Sequence[Fraction], m: QMatrix) -> QVector:
    n = len(m[0]) if m else 0
    return tuple(
        sum((v[i] * m[i][j] for i in range(len(v))), Fraction(0)) for j in range(n)
    )


def mat_mat(a: QMatrix, b: QMatrix) -> QMatrix:
    return tuple(vec_mat(row, b) for row in a)


def dot(u: Sequence[Fraction], v: Sequence[Fraction]) -> Fraction:
    return sum((x * y for x, y in zip(u, v)), Fraction(0))


def row_sums(m: QMatrix) -> QVector:
    return tuple(sum(row, Fraction(0)) for row in m)


def to_float_matrix(m: QMatrix) -> np.ndarray:
    return np.array([[float(x) for x in row] for row in m], dtype=np.float64)


def to_float_vector(v: Sequence[Fraction]) -> np.ndarray:
    return np.array([float(x) for x in v], dtype=np.float64)


def parse_rational(obj) -> Fraction:
    """Parse a rational from its JSON forms.

    Accepted: int, exact decimal/fraction string ("0.25", "1/3"), or a
    {"num": p, "den": q} pair.  Floats are rejected: binary floats do not
    round-trip the exactness contract of model rates.
    """
    if isinstance(obj, bool):
        raise ValueError(f"not a rational: {obj!r}")
    if isinstance(obj, int):
        return Fraction(obj)
    if isinstance(obj, str):
        return Fraction(obj)
    if isinstance(obj, dict):
        num = obj.get("num")
        den = obj.get("den", 1)
        if isinstance(num, bool) or isinstance(den, bool):
            raise ValueError(f"not a rational: {obj!r}")
        if not isinstance(num, int) or not isinstance(den, int):
            raise ValueError(f"num/den must be integers: {obj!r}")
        if den <= 0:
            raise ValueError(f"den must be positive: {obj!r}")
        return Fraction(num, den)
    if isinstance(obj, float):
        raise ValueError(
            f"floating-point rationals are not accepted (got {obj!r}); "
            'use "num"/"den" or a decimal string'
        )
    raise ValueError(f"not a rational: {obj!r}")


def rational_to_json(q: Fraction) -> dict:
    return {"num": q.numerator, "den": q.denominator}
