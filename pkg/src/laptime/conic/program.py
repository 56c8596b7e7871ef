"""Sparse second-order cone program representation and builder.

A program has the standard form::

    minimize    c'x
    subject to  A x = b
                h - G x in K

where ``K`` is a product of nonnegative orthants and second-order cones.
Cone blocks are stated as lists of affine expressions, which keeps the
transcription code close to the math.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from typing import TextIO, Union

import numpy as np
import scipy.sparse as sp


class ProgramError(ValueError):
    """Raised for structurally invalid cone programs."""


class Cone(enum.Enum):
    ZERO = "zero"
    NONNEGATIVE = "nonnegative"
    SECOND_ORDER = "second_order"


@dataclass(frozen=True)
class ConeKind:
    """Cone type together with its dimension."""

    kind: Cone
    dim: int

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ProgramError(f"cone dimension must be >= 1, got {self.dim}")
        if self.kind is Cone.SECOND_ORDER and self.dim < 2:
            raise ProgramError(f"second-order cone needs dim >= 2, got {self.dim}")

    @classmethod
    def zero(cls, dim: int) -> ConeKind:
        return cls(Cone.ZERO, dim)

    @classmethod
    def nonneg(cls, dim: int) -> ConeKind:
        return cls(Cone.NONNEGATIVE, dim)

    @classmethod
    def soc(cls, dim: int) -> ConeKind:
        return cls(Cone.SECOND_ORDER, dim)


Number = Union[int, float]


class Affine:
    """Affine expression ``sum_i coef_i * x_i + const`` over program variables.

    Instances are small and mutable only through the arithmetic operators,
    which always return new objects.
    """

    __slots__ = ("terms", "const")

    def __init__(self, terms: Mapping[int, float] | None = None, const: float = 0.0):
        self.terms: dict[int, float] = dict(terms) if terms else {}
        self.const = float(const)

    @classmethod
    def var(cls, index: int, coef: float = 1.0) -> Affine:
        return cls({int(index): float(coef)})

    @classmethod
    def constant(cls, value: float) -> Affine:
        return cls(None, value)

    def copy(self) -> Affine:
        return Affine(self.terms, self.const)

    def __add__(self, other: Affine | Number) -> Affine:
        out = self.copy()
        if isinstance(other, Affine):
            for i, a in other.terms.items():
                out.terms[i] = out.terms.get(i, 0.0) + a
            out.const += other.const
        else:
            out.const += float(other)
        return out

    __radd__ = __add__

    def __neg__(self) -> Affine:
        return Affine({i: -a for i, a in self.terms.items()}, -self.const)

    def __sub__(self, other: Affine | Number) -> Affine:
        return self + (-other)

    def __rsub__(self, other: Affine | Number) -> Affine:
        return (-self) + other

    def __mul__(self, k: Number) -> Affine:
        k = float(k)
        return Affine({i: k * a for i, a in self.terms.items()}, k * self.const)

    __rmul__ = __mul__

    def __truediv__(self, k: Number) -> Affine:
        return self * (1.0 / float(k))

    def normalized(self) -> Affine:
        """Copy scaled so the largest coefficient magnitude is one (row scaling)."""
        big = max((abs(v) for v in self.terms.values()), default=0.0)
        return self / big if big > 0 else self.copy()

    def value(self, x: np.ndarray) -> float:
        return self.const + sum(a * x[i] for i, a in self.terms.items())

    def __repr__(self) -> str:
        body = " + ".join(f"{a:g}*x[{i}]" for i, a in sorted(self.terms.items()))
        return f"Affine({body or '0'} + {self.const:g})"


Expr = Union[Affine, Number]


def _as_affine(e: Expr) -> Affine:
    return e if isinstance(e, Affine) else Affine.constant(float(e))


@dataclass(frozen=True)
class ConicProgram:
    """Finalized cone program ``min c'x s.t. Ax = b, h - Gx in K``.

    ``cones`` lists the nonnegative and second-order blocks of ``G``/``h`` in
    row order. Zero-cone blocks given to the builder are stored as rows of
    ``A``.
    """

    num_vars: int
    c: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    G: sp.csc_matrix
    h: np.ndarray
    cones: tuple[ConeKind, ...]

    @property
    def num_eq(self) -> int:
        return self.A.shape[0]

    @property
    def num_cone_rows(self) -> int:
        return self.G.shape[0]

    def blocks(self) -> Iterable[tuple[ConeKind, slice]]:
        """Yield ``(cone, row slice of G/h)`` for every cone block."""
        start = 0
        for cone in self.cones:
            yield cone, slice(start, start + cone.dim)
            start += cone.dim

    def count(self, kind: Cone, dim: int | None = None) -> int:
        return sum(1 for c in self.cones if c.kind is kind and (dim is None or c.dim == dim))

    def validate(self) -> None:
        n = self.num_vars
        if self.c.shape != (n,):
            raise ProgramError(f"cost vector has shape {self.c.shape}, expected ({n},)")
        if self.A.shape[1] != n or self.G.shape[1] != n:
            raise ProgramError("constraint matrices must have num_vars columns")
        if self.b.shape != (self.A.shape[0],):
            raise ProgramError("length of b does not match rows of A")
        if self.h.shape != (self.G.shape[0],):
            raise ProgramError("length of h does not match rows of G")
        if sum(c.dim for c in self.cones) != self.G.shape[0]:
            raise ProgramError("cone dimensions do not add up to rows of G")
        for c in self.cones:
            if c.kind is Cone.ZERO:
                raise ProgramError("zero cones must be stored as equalities")
        for arr in (self.c, self.b, self.h, self.A.data, self.G.data):
            if not np.all(np.isfinite(arr)):
                raise ProgramError("program data contains NaN or Inf")


class ProgramBuilder:
    """Incremental builder for :class:`ConicProgram`.

    Example:
        >>> pb = ProgramBuilder(2)
        >>> x, t = pb.var(0), pb.var(1)
        >>> pb.set_objective({1: 1.0})
        >>> pb.add_cone([t, x - 3.0, 4.0], ConeKind.soc(3))
        >>> prog = pb.finalize()
    """

    def __init__(self, num_vars: int):
        if num_vars < 1:
            raise ProgramError("a program needs at least one variable")
        self.num_vars = int(num_vars)
        self._c = np.zeros(self.num_vars)
        self._eq_rows: list[Affine] = []
        self._cone_rows: list[Affine] = []
        self._cones: list[ConeKind] = []
        self._finalized = False

    def var(self, index: int) -> Affine:
        self._check_index(index)
        return Affine.var(index)

    def _check_index(self, index: int) -> None:
        if not 0 <= index < self.num_vars:
            raise ProgramError(f"variable index {index} out of range [0, {self.num_vars})")

    def _check_open(self) -> None:
        if self._finalized:
            raise ProgramError("program already finalized")

    def set_objective(self, coeffs: Mapping[int, float] | Sequence[float] | np.ndarray) -> None:
        self._check_open()
        if isinstance(coeffs, Mapping):
            c = np.zeros(self.num_vars)
            for i, a in coeffs.items():
                self._check_index(i)
                c[i] += a
        else:
            c = np.asarray(coeffs, dtype=float)
            if c.shape != (self.num_vars,):
                raise ProgramError(f"objective has shape {c.shape}, expected ({self.num_vars},)")
        self._c = c

    def add_equality(self, rows: Expr | Sequence[Expr]) -> None:
        """Constrain each affine expression in ``rows`` to equal zero."""
        self._check_open()
        if isinstance(rows, (Affine, int, float)):
            rows = [rows]
        for r in rows:
            r = _as_affine(r)
            for i in r.terms:
                self._check_index(i)
            self._eq_rows.append(r)

    def add_cone(self, block: Sequence[Expr], kind: ConeKind) -> None:
        """Constrain the vector of affine expressions ``block`` to lie in ``kind``."""
        self._check_open()
        if len(block) != kind.dim:
            raise ProgramError(f"block has {len(block)} rows but cone dimension is {kind.dim}")
        rows = [_as_affine(r) for r in block]
        for r in rows:
            for i in r.terms:
                self._check_index(i)
        if kind.kind is Cone.ZERO:
            self._eq_rows.extend(rows)
            return
        self._cone_rows.extend(rows)
        self._cones.append(kind)

    def add_nonneg(self, rows: Sequence[Expr]) -> None:
        """Shorthand for a batch of scalar ``expr >= 0`` constraints."""
        for r in rows:
            self.add_cone([r], ConeKind.nonneg(1))

    def finalize(self) -> ConicProgram:
        self._check_open()
        self._finalized = True
        n = self.num_vars
        A, neg_b = _rows_to_matrix(self._eq_rows, n)
        negG, h = _rows_to_matrix(self._cone_rows, n)
        prog = ConicProgram(
            num_vars=n,
            c=self._c.copy(),
            A=A,
            b=-neg_b,
            G=(-negG).tocsc(),
            h=h,
            cones=_merge_nonneg(self._cones),
        )
        prog.validate()
        return prog


def _rows_to_matrix(rows: list[Affine], n: int) -> tuple[sp.csc_matrix, np.ndarray]:
    ri, ci, vals = [], [], []
    for k, r in enumerate(rows):
        for i, a in r.terms.items():
            if a != 0.0:
                ri.append(k)
                ci.append(i)
                vals.append(a)
    M = sp.csc_matrix((vals, (ri, ci)), shape=(len(rows), n))
    M.sum_duplicates()
    return M, np.array([r.const for r in rows], dtype=float)


def _merge_nonneg(cones: list[ConeKind]) -> tuple[ConeKind, ...]:
    """Merge runs of adjacent nonnegative blocks into single orthant blocks."""
    out: list[ConeKind] = []
    for c in cones:
        if out and c.kind is Cone.NONNEGATIVE and out[-1].kind is Cone.NONNEGATIVE:
            out[-1] = ConeKind.nonneg(out[-1].dim + c.dim)
        else:
            out.append(c)
    return tuple(out)


def residuals(prog: ConicProgram, x: np.ndarray) -> dict[str, float]:
    """Max-norm equality violation and worst cone violation of a candidate.

    Cone violation of a second-order block ``(t, u)`` is ``max(0, |u| - t)``;
    for the orthant it is the most negative entry.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (prog.num_vars,):
        raise ProgramError(f"candidate has shape {x.shape}, expected ({prog.num_vars},)")
    eq = float(np.max(np.abs(prog.A @ x - prog.b))) if prog.num_eq else 0.0
    slack = prog.h - prog.G @ x
    worst = 0.0
    for cone, rows in prog.blocks():
        u = slack[rows]
        if cone.kind is Cone.NONNEGATIVE:
            worst = max(worst, float(-u.min()))
        else:
            worst = max(worst, float(np.linalg.norm(u[1:]) - u[0]))
    return {"eq_violation": eq, "cone_violation": max(worst, 0.0)}


# -- text dump ---------------------------------------------------------------
#
# Format (one record per line, '#' comments allowed):
#   conic-program v1
#   vars <n>
#   c <i> <value>            (nonzeros only)
#   A <row> <col> <value>
#   b <row> <value>
#   G <row> <col> <value>
#   h <row> <value>
#   cone nonnegative <dim> | cone second_order <dim>
#   eqrows <m_eq> / conerows <m_cone>


def dump(prog: ConicProgram, fh: TextIO) -> None:
    """Write ``prog`` in the triplet text format."""
    w = fh.write
    w("conic-program v1\n")
    w(f"vars {prog.num_vars}\neqrows {prog.num_eq}\nconerows {prog.num_cone_rows}\n")
    for i in np.flatnonzero(prog.c):
        w(f"c {i} {float(prog.c[i])!r}\n")
    for tag, M, rhs, rtag in (("A", prog.A, prog.b, "b"), ("G", prog.G, prog.h, "h")):
        coo = M.tocoo()
        for r, col, v in zip(coo.row, coo.col, coo.data):
            w(f"{tag} {r} {col} {float(v)!r}\n")
        for r in np.flatnonzero(rhs):
            w(f"{rtag} {r} {float(rhs[r])!r}\n")
    for cone in prog.cones:
        w(f"cone {cone.kind.value} {cone.dim}\n")


def load(fh: TextIO) -> ConicProgram:
    """Read a program written by :func:`dump`."""
    header = fh.readline().strip()
    if header != "conic-program v1":
        raise ProgramError(f"unrecognized header {header!r}")
    n = m_eq = m_cone = None
    c_items: list[tuple[int, float]] = []
    trip: dict[str, list[tuple[int, int, float]]] = {"A": [], "G": []}
    vec: dict[str, list[tuple[int, float]]] = {"b": [], "h": []}
    cones: list[ConeKind] = []
    for lineno, line in enumerate(fh, start=2):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "vars":
                n = int(tok[1])
            elif tok[0] == "eqrows":
                m_eq = int(tok[1])
            elif tok[0] == "conerows":
                m_cone = int(tok[1])
            elif tok[0] == "c":
                c_items.append((int(tok[1]), float(tok[2])))
            elif tok[0] in trip:
                trip[tok[0]].append((int(tok[1]), int(tok[2]), float(tok[3])))
            elif tok[0] in vec:
                vec[tok[0]].append((int(tok[1]), float(tok[2])))
            elif tok[0] == "cone":
                cones.append(ConeKind(Cone(tok[1]), int(tok[2])))
            else:
                raise ProgramError(f"line {lineno}: unknown record {tok[0]!r}")
        except (IndexError, ValueError) as exc:
            raise ProgramError(f"line {lineno}: {exc}") from exc
    if n is None or m_eq is None or m_cone is None:
        raise ProgramError("missing vars/eqrows/conerows header records")

    def mat(items, rows):
        if not items:
            return sp.csc_matrix((rows, n))
        r, col, v = zip(*items)
        return sp.csc_matrix((v, (r, col)), shape=(rows, n))

    def dense(items, size):
        out = np.zeros(size)
        for i, v in items:
            out[i] = v
        return out

    prog = ConicProgram(
        num_vars=n,
        c=dense(c_items, n),
        A=mat(trip["A"], m_eq),
        b=dense(vec["b"], m_eq),
        G=mat(trip["G"], m_cone),
        h=dense(vec["h"], m_cone),
        cones=tuple(cones),
    )
    prog.validate()
    return prog


def soc_margin(u: np.ndarray) -> float:
    """``t - |rest|`` for a second-order cone vector ``(t, rest)``."""
    return float(u[0] - math.sqrt(float(u[1:] @ u[1:])))
