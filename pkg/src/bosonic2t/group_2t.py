"""Exact quaternion arithmetic and the 24-element binary tetrahedral group.

Elements are stored with :class:`fractions.Fraction` coefficients, so all
group-theoretic identities hold exactly.  Floating point enters only when a
quaternion is turned into coherence parameters or a 2x2 matrix.

Canonical ordering of the 24 elements: index ``8*s + t`` is ``Q8[t] * l**s``
with ``Q8 = (+1, +j, +i, +k, -1, -j, -i, -k)`` (note ``j`` before ``i``).
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

import numpy as np

__all__ = [
    "Quaternion", "GroupElement", "Group2T", "two_t", "quat_mul",
    "enumerate_2t", "coset_decompose", "matrix_rep",
    "ONE", "QI", "QJ", "QK", "QL",
]

_HALF = Fraction(1, 2)


@dataclass(frozen=True)
class Quaternion:
    """a + b*i + c*j + d*k with exact rational coefficients."""

    a: Fraction
    b: Fraction
    c: Fraction
    d: Fraction

    @classmethod
    def of(cls, a, b=0, c=0, d=0) -> "Quaternion":
        return cls(Fraction(a), Fraction(b), Fraction(c), Fraction(d))

    def __mul__(self, other: "Quaternion") -> "Quaternion":
        a1, b1, c1, d1 = self.coeffs
        a2, b2, c2, d2 = other.coeffs
        return Quaternion(
            a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
            a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
            a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
            a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
        )

    def __neg__(self) -> "Quaternion":
        return Quaternion(-self.a, -self.b, -self.c, -self.d)

    def __pow__(self, n: int) -> "Quaternion":
        if n < 0:
            return self.inverse() ** (-n)
        out = ONE
        for _ in range(n):
            out = out * self
        return out

    @property
    def coeffs(self) -> tuple[Fraction, Fraction, Fraction, Fraction]:
        return (self.a, self.b, self.c, self.d)

    def conj(self) -> "Quaternion":
        return Quaternion(self.a, -self.b, -self.c, -self.d)

    def norm2(self) -> Fraction:
        return self.a ** 2 + self.b ** 2 + self.c ** 2 + self.d ** 2

    def inverse(self) -> "Quaternion":
        n = self.norm2()
        q = self.conj()
        return Quaternion(q.a / n, q.b / n, q.c / n, q.d / n)

    def complex_pair(self) -> tuple[complex, complex]:
        """The two complex numbers (a + bi, c - di) used by the two-mode map."""
        return (complex(self.a, self.b), complex(self.c, -self.d))

    def __str__(self) -> str:
        parts = []
        for coef, unit in zip(self.coeffs, ("", "i", "j", "k")):
            if coef:
                parts.append(f"{coef}{unit}" if unit else f"{coef}")
        return "+".join(parts).replace("+-", "-") or "0"


ONE = Quaternion.of(1)
QI = Quaternion.of(0, 1)
QJ = Quaternion.of(0, 0, 1)
QK = Quaternion.of(0, 0, 0, 1)
QL = Quaternion.of(-_HALF, -_HALF, -_HALF, -_HALF)

Q8_ORDER = (ONE, QJ, QI, QK, -ONE, -QJ, -QI, -QK)
Q8_LABELS = ("+1", "+j", "+i", "+k", "-1", "-j", "-i", "-k")


def quat_mul(x: Quaternion, y: Quaternion) -> Quaternion:
    return x * y


def matrix_rep(x: Quaternion) -> np.ndarray:
    """q = a+bi+cj+dk  ->  [[a+bi, -c-di], [c-di, a-bi]].

    Acting on the coherence-parameter column ``(alpha1, alpha2)`` this is
    left multiplication by ``x`` on the constellation.
    """
    a, b, c, d = (float(v) for v in x.coeffs)
    return np.array([[a + 1j * b, -c - 1j * d], [c - 1j * d, a - 1j * b]])


@dataclass(frozen=True)
class GroupElement:
    index: int
    quaternion: Quaternion
    # (m, n, p, q) for (-1)^m i^n j^p l^q
    decomposition: tuple[int, int, int, int]

    @property
    def label(self) -> str:
        t, s = self.index % 8, self.index // 8
        base = Q8_LABELS[t]
        return base if s == 0 else f"{base}l{'' if s == 1 else '^2'}"


class Group2T:
    """The binary tetrahedral group with table, inverses and cosets."""

    def __init__(self):
        quats = [q * QL ** s for s in range(3) for q in Q8_ORDER]
        self._index = {q: n for n, q in enumerate(quats)}
        if len(self._index) != 24:
            raise RuntimeError("2T enumeration is not 24 distinct elements")
        decomp = {}
        for m, n, p, q in itertools.product((0, 1), (0, 1), (0, 1), (0, 1, 2)):
            x = (-ONE) ** m * QI ** n * QJ ** p * QL ** q
            decomp[self._index[x]] = (m, n, p, q)
        self.elements = tuple(
            GroupElement(n, quats[n], decomp[n]) for n in range(24)
        )
        self._by_decomp = {e.decomposition: e.index for e in self.elements}
        table = np.empty((24, 24), dtype=np.int64)
        for x in self.elements:
            for y in self.elements:
                table[x.index, y.index] = self._index[x.quaternion * y.quaternion]
        table.setflags(write=False)
        self.table = table
        self.identity = self._index[ONE]
        self.inverse = np.array([int(np.flatnonzero(table[n] == self.identity)[0])
                                 for n in range(24)])
        self.l_index = self._index[QL]

    def __len__(self) -> int:
        return 24

    def __getitem__(self, n: int) -> GroupElement:
        return self.elements[n]

    def index_of(self, q: Quaternion) -> int:
        try:
            return self._index[q]
        except KeyError:
            raise ValueError(f"{q} is not an element of 2T") from None

    def from_decomposition(self, m: int, n: int, p: int, q: int) -> int:
        return self._by_decomp[(m, n, p, q)]

    def mul(self, x: int, y: int) -> int:
        return int(self.table[x, y])

    def left_perm(self, g: int) -> np.ndarray:
        """perm[s] = index of g * element[s]."""
        return self.table[g].copy()

    def right_perm(self, g: int) -> np.ndarray:
        return self.table[:, g].copy()

    def cosets(self, subgroup: str) -> list[list[int]]:
        if subgroup == "Q8":
            # l^s Q8 = Q8 l^s since Q8 is normal
            return [list(range(8 * s, 8 * s + 8)) for s in range(3)]
        if subgroup == "Z3":
            return [[t, t + 8, t + 16] for t in range(8)]
        raise ValueError(f"unknown subgroup {subgroup!r}; expected 'Q8' or 'Z3'")

    def write_csv(self, path: str | Path) -> Path:
        """Dump the multiplication table (row, col, product) and coset ids."""
        path = Path(path)
        q8 = {n: b for b, block in enumerate(self.cosets("Q8")) for n in block}
        z3 = {n: b for b, block in enumerate(self.cosets("Z3")) for n in block}
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["row", "col", "product", "row_q8_coset", "row_z3_block"])
            for r in range(24):
                for c in range(24):
                    w.writerow([r, c, int(self.table[r, c]), q8[r], z3[r]])
        return path


@lru_cache(maxsize=1)
def two_t() -> Group2T:
    return Group2T()


def enumerate_2t() -> list[GroupElement]:
    return list(two_t().elements)


def coset_decompose(subgroup: str) -> list[list[int]]:
    return two_t().cosets(subgroup)
