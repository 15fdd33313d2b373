"""Exact linear algebra over the rationals.

Elimination is fraction-free (Bareiss): each row is first scaled to integers,
then every intermediate entry is an integer minor, so coefficient growth stays
polynomial.  Matrices are lists of rows.
"""

from __future__ import annotations

from fractions import Fraction
from math import lcm


def integer_rows(rows) -> tuple[list[list[int]], list[int]]:
    """Scale each row by the lcm of its denominators; returns (int rows, scales)."""
    out, scales = [], []
    for row in rows:
        fr = [Fraction(v) for v in row]
        s = lcm(*(v.denominator for v in fr)) if fr else 1
        out.append([int(v * s) for v in fr])
        scales.append(s)
    return out, scales


def _bareiss(a: list[list[int]], ncols: int) -> tuple[int, list[int]]:
    """In-place fraction-free elimination on the first ``ncols`` columns.

    Returns (sign of the row permutation, pivot columns).  After the call the
    leading rows are in echelon form and each pivot equals a leading minor.
    """
    m = len(a)
    width = len(a[0]) if a else 0
    prev, r, sign = 1, 0, 1
    pivots = []
    for c in range(ncols):
        if r == m:
            break
        p = next((i for i in range(r, m) if a[i][c] != 0), None)
        if p is None:
            continue
        if p != r:
            a[r], a[p] = a[p], a[r]
            sign = -sign
        piv = a[r][c]
        for i in range(r + 1, m):
            ai = a[i]
            f = ai[c]
            for j in range(c + 1, width):
                ai[j] = (piv * ai[j] - f * a[r][j]) // prev
            ai[c] = 0
        # rows above r keep their entries; only rows below are eliminated
        prev = piv
        pivots.append(c)
        r += 1
    return sign, pivots


def det(matrix) -> Fraction:
    n = len(matrix)
    if n == 0:
        return Fraction(1)
    if any(len(row) != n for row in matrix):
        raise ValueError("determinant needs a square matrix")
    a, scales = integer_rows(matrix)
    sign, pivots = _bareiss(a, n)
    if len(pivots) < n:
        return Fraction(0)
    denom = 1
    for s in scales:
        denom *= s
    return Fraction(sign * a[n - 1][n - 1], denom)


def rank_and_pivots(matrix) -> tuple[int, list[int]]:
    """Rank and the pivot (linearly independent) column indices."""
    if not matrix:
        return 0, []
    a, _ = integer_rows(matrix)
    _, pivots = _bareiss(a, len(a[0]))
    return len(pivots), pivots


def solve(matrix, rhs) -> list[Fraction] | None:
    """Unique solution of a square system, or None if it is singular."""
    n = len(matrix)
    aug = [list(row) + [b] for row, b in zip(matrix, rhs)]
    a, _ = integer_rows(aug)
    _, pivots = _bareiss(a, n)
    if len(pivots) < n:
        return None
    x = [Fraction(0)] * n
    for i in range(n - 1, -1, -1):
        s = Fraction(a[i][n]) - sum(a[i][j] * x[j] for j in range(i + 1, n))
        x[i] = s / a[i][i]
    return x


def cramer_solve(matrix, rhs) -> list[Fraction] | None:
    """Same as :func:`solve` but through ``x_i = det(M_i) / det(M)``.

    Slower; kept because it exposes each coordinate as a ratio of minors,
    which is how the dual extreme-point bounds are derived.
    """
    d = det(matrix)
    if d == 0:
        return None
    out = []
    for i in range(len(matrix)):
        replaced = [row[:i] + [b] + row[i + 1:] for row, b in zip(map(list, matrix), rhs)]
        out.append(det(replaced) / d)
    return out


def transpose(matrix) -> list[list]:
    return [list(col) for col in zip(*matrix)] if matrix else []


def mat_vec(matrix, vec) -> list[Fraction]:
    return [sum((Fraction(a) * b for a, b in zip(row, vec)), Fraction(0)) for row in matrix]


def dot(u, w) -> Fraction:
    return sum((Fraction(a) * b for a, b in zip(u, w)), Fraction(0))
