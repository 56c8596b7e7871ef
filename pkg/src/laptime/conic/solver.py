"""Primal-dual interior-point solver for second-order cone programs.

The method follows the homogeneous self-dual embedding

    0 = A'y + G'z + c tau
    0 = -A x + b tau
    s = -G x + h tau
    kappa = -c'x - b'y - h'z

with Nesterov-Todd scaling and a Mehrotra predictor-corrector. Each Newton
step solves the symmetric quasi-definite system

    [ d I    A'     G'         ] [dx]   [r1]
    [ A     -d I    0          ] [dy] = [r2]
    [ G      0    -(W'W + d I) ] [dz]   [r3]

by a sparse LU (SuperLU, COLAMD ordering) with static regularization ``d``
and a few steps of iterative refinement against the unregularized matrix.
Diagonal pivots are tried first; when refinement cannot recover accuracy
(the NT scaling grows ill-conditioned near the optimum) the solve switches
to weak threshold pivoting for its remaining iterations.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from laptime.conic.cones import ConeLayout, NTScaling, interior_margin, jordan, jordan_solve, max_step
from laptime.conic.program import ConicProgram

log = logging.getLogger(__name__)

PIVOT_THRESHOLD = 0.01
REFINE_TOL = 1e-14


class Status(enum.Enum):
    OPTIMAL = "optimal"
    PRIMAL_INFEASIBLE = "primal_infeasible"
    DUAL_INFEASIBLE = "dual_infeasible"
    MAX_ITERS = "max_iters"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class SolverSettings:
    """Tolerances and iteration limits for :func:`solve`."""

    tol_feas: float = 1e-8
    tol_gap_rel: float = 1e-8
    tol_gap_abs: float = 1e-8
    max_iters: int = 100
    static_regularization: float = 1e-9
    refinement_steps: int = 3
    step_fraction: float = 0.99
    equilibrate: bool = True
    verbose: bool = False

    def __post_init__(self) -> None:
        for name in ("tol_feas", "tol_gap_rel", "tol_gap_abs", "static_regularization"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0 < self.step_fraction < 1:
            raise ValueError("step_fraction must lie in (0, 1)")


@dataclass
class ConicSolution:
    """Solver output.

    For ``OPTIMAL`` (and ``MAX_ITERS``) ``x, y, z, s`` are the primal/dual
    iterates. For ``PRIMAL_INFEASIBLE`` ``y, z`` hold a certificate normalized
    to ``b'y + h'z = -1``; for ``DUAL_INFEASIBLE`` ``x, s`` hold a ray with
    ``c'x = -1``.
    """

    status: Status
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    s: np.ndarray
    objective_value: float
    dual_objective: float
    residuals: dict[str, float]
    iterations: int
    info: list[dict[str, float]] = field(default_factory=list, repr=False)

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


class _Kkt:
    """Fixed-pattern assembly and factorization of the Newton system."""

    def __init__(self, A: sp.csc_matrix, G: sp.csc_matrix, layout: ConeLayout, reg: float, refine: int):
        n, p, m = A.shape[1], A.shape[0], G.shape[0]
        self.n, self.p, self.m = n, p, m
        self.reg = reg
        self.refine = refine
        Ac, Gc = A.tocoo(), G.tocoo()
        rows = [np.arange(n), np.arange(n, n + p)]
        cols = [np.arange(n), np.arange(n, n + p)]
        vals = [np.full(n, reg), np.full(p, -reg)]
        # A' and A
        rows += [Ac.col, Ac.row + n]
        cols += [Ac.row + n, Ac.col]
        vals += [Ac.data, Ac.data]
        # G' and G
        rows += [Gc.col, Gc.row + n + p]
        cols += [Gc.row + n + p, Gc.col]
        vals += [Gc.data, Gc.data]
        static_rows = np.concatenate(rows)
        static_cols = np.concatenate(cols)
        self._static = np.concatenate(vals).astype(float)
        # -(W'W + reg I) block: orthant diagonal then dense SOC blocks
        off = n + p
        drow = [layout.lp + off]
        dcol = [layout.lp + off]
        for g in layout.soc:
            d = g.shape[1]
            drow.append(np.repeat(g, d, axis=1).ravel() + off)
            dcol.append(np.tile(g, (1, d)).ravel() + off)
        self._dyn_rows = np.concatenate(drow)
        self._dyn_cols = np.concatenate(dcol)
        self._layout = layout
        all_rows = np.concatenate([static_rows, self._dyn_rows])
        all_cols = np.concatenate([static_cols, self._dyn_cols])
        N = n + p + m
        tag = sp.csc_matrix(
            (np.arange(1, all_rows.size + 1, dtype=float), (all_rows, all_cols)), shape=(N, N)
        )
        tag.sort_indices()
        self._perm = tag.data.astype(np.int64) - 1
        self._indices = tag.indices
        self._indptr = tag.indptr
        self._shape = (N, N)
        # unregularized matrix for refinement residuals: K0 = K - diag(reg signs)
        self._reg_diag = np.concatenate([np.full(n, reg), np.full(p + m, -reg)])
        self._lu = None
        self._K = None
        self.pivoting = False

    def factor(self, scaling: NTScaling) -> None:
        lp_d, soc_blocks = scaling.squared_blocks()
        dyn = [-(lp_d + self.reg)]
        for B in soc_blocks:
            d = B.shape[1]
            B = B + self.reg * np.eye(d)[None, :, :]
            dyn.append(-B.reshape(-1))
        values = np.concatenate([self._static, np.concatenate(dyn)])
        self._K = sp.csc_matrix((values[self._perm], self._indices, self._indptr), shape=self._shape)
        self._lu = self._splu()

    def _splu(self):
        return spla.splu(
            self._K,
            permc_spec="COLAMD",
            diag_pivot_thresh=PIVOT_THRESHOLD if self.pivoting else 0.0,
            options={"SymmetricMode": True},
        )

    def _refine(self, rhs: np.ndarray) -> tuple[np.ndarray, float]:
        x = self._lu.solve(rhs)
        tol = REFINE_TOL * (1.0 + np.linalg.norm(rhs, np.inf))
        err = np.inf
        for _ in range(self.refine + 1):
            r = rhs - (self._K @ x - self._reg_diag * x)
            err = float(np.linalg.norm(r, np.inf))
            if err <= tol or _ == self.refine:
                break
            x = x + self._lu.solve(r)
        return x, err / tol

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        x, ratio = self._refine(rhs)
        if (ratio > 1.0e6 or not np.all(np.isfinite(x))) and not self.pivoting:
            # diagonal pivots lost accuracy: threshold pivoting from here on
            self.pivoting = True
            self._lu = self._splu()
            x, ratio = self._refine(rhs)
        return x


def _equilibrate(A, G, layout: ConeLayout, iters: int = 15, lo: float = 1e-4, hi: float = 1e4):
    """Ruiz scaling ``A -> D A E``, ``G -> F G E`` keeping SOC blocks uniform."""
    n = A.shape[1]
    D = np.ones(A.shape[0])
    F = np.ones(G.shape[0])
    E = np.ones(n)
    As, Gs = A.copy().tocsc(), G.copy().tocsc()
    for _ in range(iters):
        col = np.maximum(
            spla.norm(As, np.inf, axis=0) if As.shape[0] else np.zeros(n),
            spla.norm(Gs, np.inf, axis=0) if Gs.shape[0] else np.zeros(n),
        )
        col = np.where(col > 0, col, 1.0)
        ce = 1.0 / np.sqrt(col)
        ra = spla.norm(As, np.inf, axis=1) if As.shape[0] else np.zeros(0)
        rg = spla.norm(Gs, np.inf, axis=1) if Gs.shape[0] else np.zeros(0)
        rg = layout.block_max(rg)
        ra = np.where(ra > 0, ra, 1.0)
        rg = np.where(rg > 0, rg, 1.0)
        rd, rf = 1.0 / np.sqrt(ra), 1.0 / np.sqrt(rg)
        rd = np.clip(D * rd, lo, hi) / D
        rf = np.clip(F * rf, lo, hi) / F
        ce = np.clip(E * ce, lo, hi) / E
        D *= rd
        F *= rf
        E *= ce
        As = sp.diags(rd) @ As @ sp.diags(ce)
        Gs = sp.diags(rf) @ Gs @ sp.diags(ce)
    return As.tocsc(), Gs.tocsc(), D, F, E


def solve(prog: ConicProgram, settings: SolverSettings | None = None) -> ConicSolution:
    """Solve ``min c'x s.t. Ax = b, h - Gx in K``.

    Args:
        prog: Finalized program.
        settings: Tolerances; defaults to :class:`SolverSettings()`.

    Returns:
        The solution with status, iterates and unscaled residuals.
    """
    st = settings or SolverSettings()
    layout = ConeLayout.from_program(prog)
    n, p, m = prog.num_vars, prog.num_eq, prog.num_cone_rows

    if st.equilibrate:
        A, G, D, F, E = _equilibrate(prog.A, prog.G, layout)
    else:
        A, G = prog.A.tocsc(), prog.G.tocsc()
        D, F, E = np.ones(p), np.ones(m), np.ones(n)
    b = D * prog.b
    h = F * prog.h
    c = E * prog.c
    At, Gt = A.T.tocsr(), G.T.tocsr()

    def unscale(x, y, z, s):
        return E * x, D * y, F * z, s / F

    nb = 1.0 + np.linalg.norm(prog.b)
    nh = 1.0 + np.linalg.norm(prog.h)
    nc = 1.0 + np.linalg.norm(prog.c)

    kkt = _Kkt(A, G, layout, st.static_regularization, st.refinement_steps)
    e = layout.identity()
    degree = layout.degree

    x = np.zeros(n)
    y = np.zeros(p)
    s = e.copy()
    z = e.copy()
    tau, kappa = 1.0, 1.0

    info: list[dict[str, float]] = []
    status = Status.MAX_ITERS
    resid = {"primal": np.inf, "dual": np.inf, "gap": np.inf}
    it = 0

    def unscaled_metrics(x, y, z, s, tau):
        xu, yu, zu, su = unscale(x / tau, y / tau, z / tau, s / tau)
        pres = max(
            np.linalg.norm(prog.A @ xu - prog.b) / nb if p else 0.0,
            np.linalg.norm(prog.G @ xu + su - prog.h) / nh if m else 0.0,
        )
        dres = np.linalg.norm(prog.A.T @ yu + prog.G.T @ zu + prog.c) / nc
        pcost = float(prog.c @ xu)
        dcost = float(-prog.b @ yu - prog.h @ zu)
        gap = float(su @ zu)
        return pres, dres, pcost, dcost, gap

    for it in range(st.max_iters + 1):
        rx = At @ y + Gt @ z + c * tau
        ry = A @ x - b * tau
        rz = G @ x + s - h * tau
        rt = kappa + c @ x + b @ y + h @ z
        mu = (s @ z + tau * kappa) / (degree + 1)

        pres, dres, pcost, dcost, gap = unscaled_metrics(x, y, z, s, tau)
        denom = min(abs(pcost), abs(dcost))
        relgap = gap / denom if denom > 0 else np.inf
        resid = {"primal": float(pres), "dual": float(dres), "gap": float(gap), "relgap": float(relgap)}
        info.append({"iter": it, "pcost": pcost, "dcost": dcost, **resid, "mu": mu, "tau": tau, "kappa": kappa})
        if st.verbose:
            log.info(
                "%3d pcost=%+.6e dcost=%+.6e pres=%.1e dres=%.1e gap=%.1e tau=%.1e kap=%.1e",
                it, pcost, dcost, pres, dres, gap, tau, kappa,
            )

        if pres <= st.tol_feas and dres <= st.tol_feas and (gap <= st.tol_gap_abs or relgap <= st.tol_gap_rel):
            status = Status.OPTIMAL
            break

        # infeasibility certificates on the unscaled data, checked once kappa dominates tau
        if kappa > tau:
            xu, yu, zu, su = unscale(x, y, z, s)
            by_hz = float(prog.b @ yu + prog.h @ zu)
            if by_hz < 0:
                res = np.linalg.norm(prog.A.T @ yu + prog.G.T @ zu) / max(1.0, np.linalg.norm(prog.c))
                if res <= st.tol_feas * -by_hz:
                    status = Status.PRIMAL_INFEASIBLE
                    break
            cx = float(prog.c @ xu)
            if cx < 0:
                res = max(
                    np.linalg.norm(prog.A @ xu) / max(1.0, np.linalg.norm(prog.b)),
                    np.linalg.norm(prog.G @ xu + su) / max(1.0, np.linalg.norm(prog.h)),
                )
                if res <= st.tol_feas * -cx:
                    status = Status.DUAL_INFEASIBLE
                    break

        if it == st.max_iters:
            status = Status.MAX_ITERS
            break

        try:
            W = NTScaling.compute(layout, s, z)
            kkt.factor(W)
        except (RuntimeError, FloatingPointError, ValueError) as exc:
            log.warning("KKT factorization failed at iteration %d: %s", it, exc)
            status = Status.NUMERICAL_FAILURE
            break
        lam = W.lam

        # dtau-direction, shared by predictor and corrector
        sol_b = kkt.solve(np.concatenate([-c, b, h]))
        xb, yb, zb = sol_b[:n], sol_b[n : n + p], sol_b[n + p :]
        denom_tau = c @ xb + b @ yb + h @ zb

        def direction(sigma, ds_target, dk_target):
            shift = 1.0 - sigma
            u = jordan_solve(layout, lam, ds_target)
            rhs = np.concatenate([-shift * rx, -shift * ry, -shift * rz - W.apply(u)])
            sol = kkt.solve(rhs)
            xa, ya, za = sol[:n], sol[n : n + p], sol[n + p :]
            dtau = (-shift * rt - dk_target / tau - (c @ xa + b @ ya + h @ za)) / (
                denom_tau - kappa / tau
            )
            dx = xa + dtau * xb
            dy = ya + dtau * yb
            dz = za + dtau * zb
            ds = W.apply(u - W.apply(dz))
            dkappa = (dk_target - kappa * dtau) / tau
            return dx, dy, dz, ds, dtau, dkappa

        def step_to_boundary(dz, ds, dtau, dkappa):
            a = min(max_step(layout, s, ds), max_step(layout, z, dz))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        lam_sq = jordan(layout, lam, lam)
        # predictor
        dx, dy, dz, ds, dtau, dkappa = direction(0.0, -lam_sq, -tau * kappa)
        alpha_a = min(1.0, step_to_boundary(dz, ds, dtau, dkappa))
        sigma = float(np.clip((1.0 - alpha_a) ** 3, 0.0, 1.0))

        # corrector
        second = jordan(layout, W.apply_inv(ds), W.apply(dz))
        ds_target = -lam_sq - second + sigma * mu * e
        dk_target = -tau * kappa - dtau * dkappa + sigma * mu
        dx, dy, dz, ds, dtau, dkappa = direction(sigma, ds_target, dk_target)
        alpha = min(1.0, st.step_fraction * step_to_boundary(dz, ds, dtau, dkappa))

        if not np.all(np.isfinite(dx)) or not np.isfinite(alpha) or alpha <= 0:
            status = Status.NUMERICAL_FAILURE
            break

        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * ds
        tau += alpha * dtau
        kappa += alpha * dkappa

        if interior_margin(layout, s) <= 0 or interior_margin(layout, z) <= 0 or tau <= 0 or kappa <= 0:
            status = Status.NUMERICAL_FAILURE
            break

    xu, yu, zu, su = unscale(x, y, z, s)
    if status is Status.PRIMAL_INFEASIBLE:
        scale = -float(prog.b @ yu + prog.h @ zu)
        yu, zu = yu / scale, zu / scale
        xu = np.full(n, np.nan)
        su = np.full(m, np.nan)
        pobj, dobj = np.inf, np.inf
    elif status is Status.DUAL_INFEASIBLE:
        scale = -float(prog.c @ xu)
        xu, su = xu / scale, su / scale
        yu = np.full(p, np.nan)
        zu = np.full(m, np.nan)
        pobj, dobj = -np.inf, -np.inf
    else:
        xu, yu, zu, su = xu / tau, yu / tau, zu / tau, su / tau
        pobj = float(prog.c @ xu)
        dobj = float(-prog.b @ yu - prog.h @ zu)
    return ConicSolution(
        status=status,
        x=xu,
        y=yu,
        z=zu,
        s=su,
        objective_value=pobj,
        dual_objective=dobj,
        residuals=resid,
        iterations=it,
        info=info,
    )
