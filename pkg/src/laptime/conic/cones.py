"""Vectorized cone arithmetic for the interior-point solver.

Second-order blocks of equal dimension are stacked into ``(k, d)`` arrays so
every operation is a handful of NumPy calls regardless of the block count.
The nonnegative orthant is handled as one flat vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from laptime.conic.program import Cone, ConicProgram


@dataclass(frozen=True)
class ConeLayout:
    """Row indices of the cone part of a program, grouped by cone type.

    Attributes:
        m: Total number of cone rows.
        lp: Indices of nonnegative-orthant rows.
        soc: One ``(k, d)`` index array per distinct second-order dimension.
    """

    m: int
    lp: np.ndarray
    soc: tuple[np.ndarray, ...]

    @property
    def degree(self) -> int:
        return int(self.lp.size + sum(g.shape[0] for g in self.soc))

    @classmethod
    def from_program(cls, prog: ConicProgram) -> ConeLayout:
        lp: list[np.ndarray] = []
        by_dim: dict[int, list[np.ndarray]] = {}
        for cone, rows in prog.blocks():
            idx = np.arange(rows.start, rows.stop)
            if cone.kind is Cone.NONNEGATIVE:
                lp.append(idx)
            else:
                by_dim.setdefault(cone.dim, []).append(idx)
        return cls(
            m=prog.num_cone_rows,
            lp=np.concatenate(lp) if lp else np.zeros(0, dtype=int),
            soc=tuple(np.vstack(by_dim[d]) for d in sorted(by_dim)),
        )

    def identity(self) -> np.ndarray:
        """Unit element ``e`` of the cone (ones on the orthant, (1,0,..) per SOC)."""
        e = np.zeros(self.m)
        e[self.lp] = 1.0
        for g in self.soc:
            e[g[:, 0]] = 1.0
        return e

    def block_max(self, v: np.ndarray) -> np.ndarray:
        """Replace each SOC block's entries of ``v`` by the block maximum."""
        out = v.copy()
        for g in self.soc:
            out[g] = np.max(v[g], axis=1, keepdims=True)
        return out


def soc_det(u: np.ndarray) -> np.ndarray:
    """``u0^2 - |u1|^2`` row-wise for a ``(k, d)`` array."""
    return u[:, 0] ** 2 - np.einsum("ij,ij->i", u[:, 1:], u[:, 1:])


def jordan(layout: ConeLayout, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Jordan product ``u o v`` over the full cone."""
    out = np.empty(layout.m)
    out[layout.lp] = u[layout.lp] * v[layout.lp]
    for g in layout.soc:
        ug, vg = u[g], v[g]
        res = np.empty_like(ug)
        res[:, 0] = np.einsum("ij,ij->i", ug, vg)
        res[:, 1:] = ug[:, :1] * vg[:, 1:] + vg[:, :1] * ug[:, 1:]
        out[g] = res
    return out


def jordan_solve(layout: ConeLayout, lam: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Solve ``lam o u = v`` for ``u`` (``lam`` strictly interior)."""
    out = np.empty(layout.m)
    out[layout.lp] = v[layout.lp] / lam[layout.lp]
    for g in layout.soc:
        lg, vg = lam[g], v[g]
        rho = soc_det(lg)
        u0 = (lg[:, 0] * vg[:, 0] - np.einsum("ij,ij->i", lg[:, 1:], vg[:, 1:])) / rho
        res = np.empty_like(lg)
        res[:, 0] = u0
        res[:, 1:] = (vg[:, 1:] - u0[:, None] * lg[:, 1:]) / lg[:, :1]
        out[g] = res
    return out


def max_step(layout: ConeLayout, u: np.ndarray, du: np.ndarray) -> float:
    """Largest ``alpha`` with ``u + alpha du`` in the closed cone (``inf`` if unbounded)."""
    alpha = np.inf
    if layout.lp.size:
        d = du[layout.lp]
        neg = d < 0
        if np.any(neg):
            alpha = min(alpha, float(np.min(-u[layout.lp][neg] / d[neg])))
    for g in layout.soc:
        ug, dg = u[g], du[g]
        nrm = np.sqrt(soc_det(ug))
        ub = ug / nrm[:, None]
        db = dg / nrm[:, None]
        rho0 = ub[:, 0] * db[:, 0] - np.einsum("ij,ij->i", ub[:, 1:], db[:, 1:])
        coef = (rho0 + db[:, 0]) / (ub[:, 0] + 1.0)
        rho1 = db[:, 1:] - coef[:, None] * ub[:, 1:]
        denom = np.sqrt(np.einsum("ij,ij->i", rho1, rho1)) - rho0
        pos = denom > 0
        if np.any(pos):
            alpha = min(alpha, float(np.min(1.0 / denom[pos])))
    return alpha


def interior_margin(layout: ConeLayout, u: np.ndarray) -> float:
    """Smallest orthant entry / SOC ``u0 - |u1|`` over all blocks."""
    m = np.inf
    if layout.lp.size:
        m = float(np.min(u[layout.lp]))
    for g in layout.soc:
        ug = u[g]
        m = min(m, float(np.min(ug[:, 0] - np.linalg.norm(ug[:, 1:], axis=1))))
    return m


@dataclass
class NTScaling:
    """Nesterov-Todd scaling ``W`` with ``W z = W^{-1} s = lambda``.

    For an orthant row ``W = sqrt(s / z)``. For a second-order block
    ``W = eta * [[w0, w1'], [w1, I + w1 w1' / (1 + w0)]]`` with
    ``w0^2 - |w1|^2 = 1``.
    """

    layout: ConeLayout
    lp_w: np.ndarray
    soc_eta: list[np.ndarray]
    soc_w: list[np.ndarray]
    lam: np.ndarray

    @classmethod
    def compute(cls, layout: ConeLayout, s: np.ndarray, z: np.ndarray) -> NTScaling:
        lp_w = np.sqrt(s[layout.lp] / z[layout.lp])
        etas, ws = [], []
        for g in layout.soc:
            sg, zg = s[g], z[g]
            s_nrm = np.sqrt(soc_det(sg))
            z_nrm = np.sqrt(soc_det(zg))
            sb = sg / s_nrm[:, None]
            zb = zg / z_nrm[:, None]
            gamma = np.sqrt(0.5 * (1.0 + np.einsum("ij,ij->i", sb, zb)))
            w = np.empty_like(sb)
            w[:, 0] = sb[:, 0] + zb[:, 0]
            w[:, 1:] = sb[:, 1:] - zb[:, 1:]
            w /= 2.0 * gamma[:, None]
            etas.append(np.sqrt(s_nrm / z_nrm))
            ws.append(w)
        sc = cls(layout, lp_w, etas, ws, np.empty(0))
        sc.lam = sc.apply(z)
        return sc

    def apply(self, v: np.ndarray) -> np.ndarray:
        """``W v``."""
        return self._apply(v, inverse=False)

    def apply_inv(self, v: np.ndarray) -> np.ndarray:
        """``W^{-1} v``."""
        return self._apply(v, inverse=True)

    def _apply(self, v: np.ndarray, inverse: bool) -> np.ndarray:
        L = self.layout
        out = np.empty(L.m)
        out[L.lp] = v[L.lp] / self.lp_w if inverse else v[L.lp] * self.lp_w
        sign = -1.0 if inverse else 1.0
        for g, eta, w in zip(L.soc, self.soc_eta, self.soc_w):
            vg = v[g]
            w1v1 = np.einsum("ij,ij->i", w[:, 1:], vg[:, 1:])
            res = np.empty_like(vg)
            res[:, 0] = w[:, 0] * vg[:, 0] + sign * w1v1
            res[:, 1:] = vg[:, 1:] + (sign * vg[:, 0] + w1v1 / (1.0 + w[:, 0]))[:, None] * w[:, 1:]
            res *= (1.0 / eta if inverse else eta)[:, None]
            out[g] = res
        return out

    def squared_blocks(self) -> tuple[np.ndarray, list[np.ndarray]]:
        """Diagonal of ``W^2`` on the orthant and dense ``(k, d, d)`` SOC blocks.

        Uses ``Wbar^2 = 2 w w' - J`` with ``J = diag(1, -1, ..., -1)``.
        """
        blocks = []
        for eta, w in zip(self.soc_eta, self.soc_w):
            d = w.shape[1]
            B = 2.0 * w[:, :, None] * w[:, None, :]
            J = -np.eye(d)
            J[0, 0] = 1.0
            B -= J[None, :, :]
            B *= (eta**2)[:, None, None]
            blocks.append(B)
        return self.lp_w**2, blocks
