"""Average ISAC metrics and the grid search over the time/energy split."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf, erfinv

from .tracking import PcrbProxy


@dataclass(frozen=True)
class AverageBudget:
    """SNR scales of the two links and the prediction-in-lobe probability."""

    c_r: float
    c_t: float
    p_a1: float

    def __post_init__(self):
        if not (np.isfinite(self.c_r) and self.c_r > 0):
            raise ValueError(f"c_r={self.c_r!r} must be positive")
        if not (np.isfinite(self.c_t) and self.c_t > 0):
            raise ValueError(f"c_t={self.c_t!r} must be positive")
        if not (0.0 <= self.p_a1 <= 1.0):
            raise ValueError(f"p_a1={self.p_a1!r} outside [0, 1]")


@dataclass(frozen=True)
class SplitDecision:
    rho: float
    lam: float
    objective: float
    p_a2_at_optimum: float


@dataclass(frozen=True)
class SensingModel:
    """What the estimation-accuracy closure needs beyond the budget.

    ``slot_symbols`` is Delta T / T_u, the number of symbols a full slot holds.
    With ``fuse_prior`` the fine estimate also carries the information of the
    prediction, taken from ``prior_stds`` (theta, phi) when given and otherwise
    inferred from P[A1] by inverting the in-lobe probability per axis.
    """

    hpbw_effective: tuple
    proxy: PcrbProxy = PcrbProxy()
    slot_symbols: float = 100.0
    bound_factor: float = 0.5
    fuse_prior: bool = True
    prior_stds: tuple = None

    def __post_init__(self):
        if len(self.hpbw_effective) != 2 or min(self.hpbw_effective) <= 0:
            raise ValueError("hpbw_effective must be two positive beamwidths")
        if not self.slot_symbols > 0:
            raise ValueError("slot_symbols must be positive")
        if self.prior_stds is not None and (len(self.prior_stds) != 2 or min(self.prior_stds) < 0):
            raise ValueError("prior_stds must be two non-negative standard deviations")


def avg_sensing_snr(budget: AverageBudget, lam):
    """lam * P[A1] * C_R."""
    return lam * budget.p_a1 * budget.c_r


def avg_rate_subslot1(budget: AverageBudget, lam):
    """P[A1] * log2(1 + (1 - lam) C_T)."""
    return budget.p_a1 * np.log2(1.0 + (1.0 - np.asarray(lam)) * budget.c_t)


def prior_information(budget: AverageBudget, model: SensingModel) -> tuple:
    """Inverse prior variances (theta, phi) the fine estimate starts from."""
    if not model.fuse_prior:
        return (0.0, 0.0)
    if model.prior_stds is not None:
        return tuple(float(np.inf) if s == 0 else 1.0 / s ** 2 for s in model.prior_stds)
    per_axis = np.sqrt(budget.p_a1)
    if per_axis <= 0.0:
        return (0.0, 0.0)
    if per_axis >= 1.0:
        return (float(np.inf), float(np.inf))
    # per-axis P = erf(f h / (sigma sqrt2))  =>  1/sigma^2 = (sqrt2 erfinv(P) / (f h))^2
    z = np.sqrt(2.0) * erfinv(per_axis)
    return tuple(float((z / (model.bound_factor * h)) ** 2) for h in model.hpbw_effective)


def p_a2_model(budget: AverageBudget, rho, lam, model: SensingModel):
    """Probability that the fine angle estimates fall inside the effective lobes.

    Angle errors are Gaussian with inverse variance rho * slot_symbols *
    avg_sensing_snr / kappa, plus the prior information when
    ``model.fuse_prior``; ``rho`` and ``lam`` broadcast.
    """
    rho, lam = np.broadcast_arrays(np.asarray(rho, dtype=float), np.asarray(lam, dtype=float))
    sensing = rho * model.slot_symbols * avg_sensing_snr(budget, lam)
    prob = np.ones(sensing.shape)
    kappas = (model.proxy.kappa_theta, model.proxy.kappa_phi)
    for kappa, h, prior in zip(kappas, model.hpbw_effective, prior_information(budget, model)):
        info = sensing / kappa + prior
        # erf(f h / (sigma sqrt2)) with 1/sigma^2 = info
        prob = prob * erf(model.bound_factor * h * np.sqrt(info / 2.0))
    return prob if prob.ndim else float(prob)


def expected_sum_rate(budget: AverageBudget, rho, lam, model: SensingModel = None, p_a2=None):
    """rho P[A1] log2(1 + (1-lam) C_T) + (1-rho) P[A2] log2(1 + C_T).

    ``p_a2`` overrides the closure when given (used to freeze the coupling).
    """
    rho = np.asarray(rho, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if p_a2 is None:
        if model is None:
            raise ValueError("either a sensing model or a fixed p_a2 is required")
        p_a2 = p_a2_model(budget, rho, lam, model)
    value = rho * avg_rate_subslot1(budget, lam) + (1.0 - rho) * p_a2 * np.log2(1.0 + budget.c_t)
    return value if np.ndim(value) else float(value)


def split_grid(resolution: float) -> np.ndarray:
    """{r, 2r, ..., 1}; 1 is appended when it is not a multiple of r."""
    if not (0.0 < resolution <= 0.5):
        raise ValueError(f"grid resolution {resolution!r} outside (0, 0.5]")
    count = int(np.floor(1.0 / resolution + 1e-9))
    grid = resolution * np.arange(1, count + 1)
    if abs(grid[-1] - 1.0) > 1e-12:
        grid = np.append(grid, 1.0)
    else:
        grid[-1] = 1.0
    return grid


def optimize_split(budget: AverageBudget, grid_resolution: float = 0.01, model: SensingModel = None,
                   p_a2=None) -> SplitDecision:
    """Exhaustive search of the expected sum rate over the (rho, lambda) grid.

    Exact ties go to the smaller rho, then to the larger lambda.
    """
    grid = split_grid(grid_resolution)
    rho, lam = np.meshgrid(grid, grid, indexing="ij")
    if p_a2 is None:
        p2 = p_a2_model(budget, rho, lam, model)
    else:
        p2 = np.broadcast_to(np.asarray(p_a2, dtype=float), rho.shape)
    objective = expected_sum_rate(budget, rho, lam, p_a2=p2)
    best = objective.max()
    rows, cols = np.nonzero(objective == best)
    i = rows.min()
    j = cols[rows == i].max()
    return SplitDecision(float(grid[i]), float(grid[j]), float(objective[i, j]), float(p2[i, j]))


def snap_rho(rho: float, delta_t: float, t_u: float) -> tuple:
    """Nearest realizable split: returns (i_isac, i_c, rho) with i_isac >= 1."""
    total = int(np.floor(delta_t / t_u + 1e-9))
    if total < 1:
        raise ValueError("slot shorter than one symbol")
    i_isac = int(min(max(1, round(rho * delta_t / t_u)), total))
    return i_isac, total - i_isac, i_isac * t_u / delta_t
