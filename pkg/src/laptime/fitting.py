"""Loss-model identification from sampled loss maps.

Two model classes are fitted by least squares on the loss:

* scalar quadratic ``loss = alpha * P^2`` (motor or battery);
* PSD quadratic form ``loss = x'Qx`` with ``x = [1, omega, P]``.

The PSD fit uses projected gradient iterations (gradient step toward the
least-squares solution, then eigenvalue clipping onto the PSD cone) in
column-scaled coordinates, with Nesterov acceleration.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from laptime.powertrain import BatteryModel, MotorModel


class FittingError(ValueError):
    """Sample data cannot determine the requested model."""


@dataclass(frozen=True)
class LossSample:
    """One point of a loss map.

    ``power`` is the mechanical power for motor samples and the terminal
    power for battery samples; ``omega`` is ``None`` for battery samples.
    """

    power: float
    loss: float
    omega: float | None = None

    @property
    def electrical_power(self) -> float:
        return self.power + self.loss


@dataclass(frozen=True)
class FitReport:
    """Quality of a fitted model on its samples."""

    coefficients: dict[str, object] = field(default_factory=dict)
    rmse_relative: float = 0.0
    residual_max: float = 0.0


def _arrays(samples: Sequence[LossSample]) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    if not samples:
        raise FittingError("no samples")
    P = np.array([s.power for s in samples], dtype=float)
    L = np.array([s.loss for s in samples], dtype=float)
    if any(s.omega is None for s in samples):
        omega = None
    else:
        omega = np.array([s.omega for s in samples], dtype=float)
    if not (np.all(np.isfinite(P)) and np.all(np.isfinite(L))):
        raise FittingError("samples contain non-finite values")
    return P, L, omega


def _report(coefficients: dict, predicted_loss: np.ndarray, P: np.ndarray, L: np.ndarray) -> FitReport:
    err = predicted_loss - L
    scale = float(np.max(np.abs(P + L)))
    rmse = float(np.sqrt(np.mean(err**2)) / scale) if scale > 0 else 0.0
    return FitReport(coefficients=coefficients, rmse_relative=rmse, residual_max=float(np.max(np.abs(err))))


def fit_alpha(samples: Sequence[LossSample]) -> tuple[float, FitReport]:
    """Least-squares ``alpha`` for ``loss = alpha P^2``, clamped to be nonnegative."""
    P, L, _ = _arrays(samples)
    P2 = P**2
    denom = float(P2 @ P2)
    if denom == 0.0:
        raise FittingError("degenerate data: all sample powers are zero")
    alpha = max(0.0, float((L @ P2) / denom))
    return alpha, _report({"alpha": alpha}, alpha * P2, P, L)


def _features(omega: np.ndarray, P: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Rows of ``x'Qx`` coefficients for the 6 free entries of symmetric Q in scaled units."""
    x1, x2 = omega / w[1], P / w[2]
    one = np.ones_like(P)
    return np.column_stack([one, 2 * x1, 2 * x2, x1**2, 2 * x1 * x2, x2**2])


_TRIU = (np.array([0, 0, 0, 1, 1, 2]), np.array([0, 1, 2, 1, 2, 2]))


def _to_matrix(theta: np.ndarray) -> np.ndarray:
    Q = np.zeros((3, 3))
    Q[_TRIU] = theta
    return Q + np.triu(Q, 1).T


def _to_theta(Q: np.ndarray) -> np.ndarray:
    return Q[_TRIU].copy()


def _psd_project(Q: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (Q + Q.T))
    return (V * np.clip(w, 0.0, None)) @ V.T


def _check_excitation(omega: np.ndarray, P: np.ndarray, Phi: np.ndarray) -> None:
    if np.unique(omega).size < 3:
        raise FittingError("underdetermined fit: need samples at 3 or more distinct speeds (speed excitation missing)")
    if np.unique(P).size < 3:
        raise FittingError("underdetermined fit: need samples at 3 or more distinct powers (power excitation missing)")
    sv = np.linalg.svd(Phi, compute_uv=False)
    if sv[-1] <= 1e-12 * sv[0]:
        raise FittingError(
            "underdetermined fit: speed and power samples are collinear (joint speed-power excitation missing)"
        )


def fit_psd_quadratic(
    samples: Sequence[LossSample], tol: float = 1e-10, max_iters: int = 200_000
) -> tuple[np.ndarray, FitReport]:
    """Least-squares PSD ``Q`` for ``loss = x'Qx`` with ``x = [1, omega, P]``.

    Args:
        samples: Motor samples with ``omega`` set; at least 6 spanning 3 speeds and 3 powers.
        tol: Stop when the Frobenius change of the scaled iterate falls below this.
        max_iters: Iteration cap for the projected-gradient loop.

    Returns:
        ``(Q, report)`` with ``Q`` symmetric and PSD.
    """
    P, L, omega = _arrays(samples)
    if omega is None:
        raise FittingError("speed-dependent fit needs omega on every sample")
    if len(samples) < 6:
        raise FittingError("underdetermined fit: need at least 6 samples")
    w = np.array([1.0, max(np.max(np.abs(omega)), 1e-300), max(np.max(np.abs(P)), 1e-300)])
    Phi = _features(omega, P, w)
    _check_excitation(omega, P, Phi)
    Lmax = max(float(np.max(np.abs(L))), 1e-300)
    target = L / Lmax

    theta_ls, *_ = np.linalg.lstsq(Phi, target, rcond=None)
    Q_ls = _to_matrix(theta_ls)
    if np.linalg.eigvalsh(Q_ls).min() >= 0:
        Qs = Q_ls
        iters = 0
    else:
        # gradient in Q coordinates: off-diagonal entries appear twice in x'Qx
        def grad(Qm: np.ndarray) -> np.ndarray:
            r = Phi @ _to_theta(Qm) - target
            g = Phi.T @ r
            G = _to_matrix(g)
            G[np.triu_indices(3, 1)] *= 0.5
            G[np.tril_indices(3, -1)] *= 0.5
            return G

        lip = 2.0 * float(np.linalg.norm(Phi, 2) ** 2)
        step = 1.0 / lip
        Qs = _psd_project(Q_ls)
        Y, t = Qs.copy(), 1.0
        iters = max_iters
        for k in range(max_iters):
            Q_new = _psd_project(Y - step * grad(Y))
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            Y = Q_new + ((t - 1.0) / t_new) * (Q_new - Qs)
            change = float(np.linalg.norm(Q_new - Qs))
            Qs, t = Q_new, t_new
            if change <= tol:
                iters = k + 1
                break

    S = np.diag(1.0 / w)
    Q = Lmax * (S @ Qs @ S)
    Q = 0.5 * (Q + Q.T)
    pred = _quad(Q, omega, P)
    # the speed-independent model is inside the feasible set; keep whichever fits better
    alpha, _ = fit_alpha(samples)
    Q_alpha = np.diag([0.0, 0.0, alpha])
    pred_alpha = _quad(Q_alpha, omega, P)
    if np.sum((pred_alpha - L) ** 2) < np.sum((pred - L) ** 2):
        Q, pred = Q_alpha, pred_alpha
    return Q, _report({"Q": Q.tolist(), "iterations": iters}, pred, P, L)


def _quad(Q: np.ndarray, omega: np.ndarray, P: np.ndarray) -> np.ndarray:
    x = np.column_stack([np.ones_like(P), omega, P])
    return np.einsum("ni,ij,nj->n", x, Q, x)


def evaluate_rmse(
    model: MotorModel | BatteryModel,
    samples: Sequence[LossSample],
    speed_dependent: bool = False,
) -> float:
    """RMS electrical-power error normalized by the largest measured electrical power.

    For a motor, ``speed_dependent`` selects ``x'Qx`` instead of ``alpha_m P^2``.
    """
    P, L, omega = _arrays(samples)
    if isinstance(model, BatteryModel):
        pred = model.alpha_b * P**2
    elif speed_dependent:
        if omega is None:
            raise FittingError("speed-dependent evaluation needs omega on every sample")
        pred = _quad(model.Q, omega, P)
    else:
        pred = model.alpha_m * P**2
    return _report({}, pred, P, L).rmse_relative


def read_samples(source: str | Path | IO[str]) -> list[LossSample]:
    """Parse ``omega_radps,power_w,loss_w`` CSV (the omega column is optional)."""
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return read_samples(fh)
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None:
        raise FittingError("no samples")
    cols = [h.strip() for h in header]
    if "power_w" not in cols or "loss_w" not in cols:
        raise FittingError("sample header must contain power_w and loss_w")
    ip, il = cols.index("power_w"), cols.index("loss_w")
    io_ = cols.index("omega_radps") if "omega_radps" in cols else None
    out = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            out.append(LossSample(
                power=float(row[ip]),
                loss=float(row[il]),
                omega=float(row[io_]) if io_ is not None else None,
            ))
        except (ValueError, IndexError) as exc:
            raise FittingError(f"line {lineno}: malformed sample row ({exc})") from None
    if not out:
        raise FittingError("no samples")
    return out


def write_samples(samples: Iterable[LossSample], sink: str | Path | IO[str]) -> None:
    """Write samples in the format read by :func:`read_samples`."""
    samples = list(samples)
    if isinstance(sink, (str, Path)):
        with open(sink, "w", newline="", encoding="utf-8") as fh:
            write_samples(samples, fh)
        return
    with_omega = bool(samples) and all(s.omega is not None for s in samples)
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(["omega_radps", "power_w", "loss_w"] if with_omega else ["power_w", "loss_w"])
    for s in samples:
        row = [repr(s.power), repr(s.loss)]
        w.writerow([repr(s.omega), *row] if with_omega else row)


def synthetic_motor_map(
    Q: np.ndarray,
    omega_values: Sequence[float],
    power_values: Sequence[float],
    noise: float = 0.0,
    seed: int = 0,
) -> list[LossSample]:
    """Grid of samples ``loss = x'Qx`` with optional relative Gaussian noise."""
    rng = np.random.default_rng(seed)
    out = []
    for om in omega_values:
        for p in power_values:
            loss = float(_quad(np.asarray(Q, float), np.array([om]), np.array([p]))[0])
            if noise:
                loss *= 1.0 + noise * rng.standard_normal()
            out.append(LossSample(power=float(p), loss=loss, omega=float(om)))
    return out


def samples_from_text(text: str) -> list[LossSample]:
    return read_samples(io.StringIO(text))
