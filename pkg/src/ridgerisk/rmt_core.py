"""Population-side random-matrix quantities.

Holds the effective-regularization fixed point kappa(lambda, n) and its
lambda-derivative, the omniscient risk formulas that consume them, and the
empirical Marchenko-Pastur consistency diagnostic that compares quadratic
forms across sample sizes on a common kappa_hat axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import InputError, InvariantError, NumericalError
from .predictors import hat_kappa
from .ridge_path import LabelMatrix, LambdaGrid
from .spectral import EigenSystem

_NORMALIZED_TOL = 1e-10
_CHAIN_SLACK = 1e-9


@dataclass(frozen=True)
class PopulationModel:
    """Covariance spectrum, per-direction signal alignment, and label noise.

    ``eigenvalues`` are the population covariance eigenvalues in descending
    order; ``alignment[i]`` is the squared coefficient of the target along
    eigendirection i. With ``normalized`` set, the trace and the total
    second moment of the labels are both pinned to 1.
    """

    eigenvalues: np.ndarray
    alignment: np.ndarray
    noise_var: float = 0.0
    normalized: bool = False

    def __post_init__(self) -> None:
        evals = np.asarray(self.eigenvalues, dtype=np.float64)
        align = np.asarray(self.alignment, dtype=np.float64)
        if evals.ndim != 1 or evals.size < 1:
            raise InputError("population spectrum must be a nonempty 1-D array")
        if align.shape != evals.shape:
            raise InputError(f"alignment shape {align.shape} does not match spectrum {evals.shape}")
        if not np.all(np.isfinite(evals)) or np.any(evals < 0):
            raise InputError("population eigenvalues must be finite and nonnegative")
        if np.any(np.diff(evals) > 0):
            raise InputError("population eigenvalues must be in descending order")
        if not np.all(np.isfinite(align)) or np.any(align < 0):
            raise InputError("alignment coefficients must be finite and nonnegative")
        if not np.isfinite(self.noise_var) or self.noise_var < 0:
            raise InputError("noise variance must be finite and nonnegative")
        if self.normalized:
            trace = float(np.sum(evals))
            total = float(np.sum(evals * align)) + self.noise_var
            if abs(trace - 1.0) > _NORMALIZED_TOL:
                raise InputError(f"normalized model needs unit trace, got {trace!r}")
            if abs(total - 1.0) > _NORMALIZED_TOL:
                raise InputError(f"normalized model needs unit label power, got {total!r}")
        evals.setflags(write=False)
        align.setflags(write=False)
        object.__setattr__(self, "eigenvalues", evals)
        object.__setattr__(self, "alignment", align)

    @property
    def trace(self) -> float:
        return float(np.sum(self.eigenvalues))

    @property
    def signal_power(self) -> float:
        """beta^T Sigma beta = sum_i lambda_i a_i."""
        return float(np.sum(self.eigenvalues * self.alignment))

    @property
    def p(self) -> int:
        return int(self.eigenvalues.size)


@dataclass(frozen=True)
class EffectiveReg:
    """Solved effective regularization at one (lambda, n).

    ``kappa`` satisfies 1 = lam/kappa + (1/n) sum_i lambda_i/(kappa+lambda_i)
    up to ``solver_residual``. The lambda = 0 underdetermined case (at most
    n nonzero population directions) has no positive root; it is encoded as
    kappa = 0 with the flag set and residual 0 by convention.
    """

    kappa: float
    dkappa_dlambda: float
    lam: float
    n: int
    solver_residual: float
    underdetermined: bool = False
    iterations: int = 0


def solve_kappa(pop: PopulationModel, lam: float, n: int) -> EffectiveReg:
    """Positive root of the effective-regularization fixed point.

    Bracketed on [lam, lam + trace/n] (always valid when a positive root
    exists): bisection to a narrow bracket, then Newton polished to a
    1e-12 residual. The derivative uses the implicit-function closed form
    dkappa/dlambda = (1 - (1/n) sum_i lambda_i^2/(kappa+lambda_i)^2)^-1.
    """
    if n < 1:
        raise InputError("sample count must be at least 1")
    if lam < 0:
        raise InputError("lambda must be nonnegative")
    evals = pop.eigenvalues
    if lam == 0:
        p_nonzero = int(np.sum(evals > 0))
        if p_nonzero <= n:
            # No positive root: the interpolation threshold is not reached.
            dk = np.inf if p_nonzero == n else 1.0 / (1.0 - p_nonzero / n)
            return EffectiveReg(
                kappa=0.0,
                dkappa_dlambda=dk,
                lam=0.0,
                n=n,
                solver_residual=0.0,
                underdetermined=True,
            )
    kappa, residual, iters, converged = _kernels.kappa_root(evals, float(lam), float(n))
    if not converged or residual > 1e-12:
        raise NumericalError(
            "kappa fixed point did not converge: "
            f"lam={lam!r}, n={n}, bracket=[{lam!r}, {lam + pop.trace / n!r}], "
            f"kappa={kappa!r}, residual={residual!r}, iterations={iters}"
        )
    dsum = float(np.sum(evals * evals / (kappa + evals) ** 2)) / n
    dk = 1.0 / (1.0 - dsum)
    reg = EffectiveReg(
        kappa=kappa,
        dkappa_dlambda=dk,
        lam=float(lam),
        n=n,
        solver_residual=residual,
        iterations=iters,
    )
    _check_slope_chain(reg, pop)
    return reg


def _check_slope_chain(reg: EffectiveReg, pop: PopulationModel) -> None:
    """Sanity chain 1 <= dk <= kappa/lam <= 1 + trace/(n*lam) for lam > 0."""
    if reg.lam <= 0:
        return
    slack = _CHAIN_SLACK
    ratio = reg.kappa / reg.lam
    upper = 1.0 + pop.trace / (reg.n * reg.lam)
    if reg.dkappa_dlambda < 1.0 - slack:
        raise InvariantError(f"dkappa/dlambda {reg.dkappa_dlambda!r} fell below 1")
    if reg.dkappa_dlambda > ratio * (1.0 + slack):
        raise InvariantError(
            f"dkappa/dlambda {reg.dkappa_dlambda!r} exceeds kappa/lambda {ratio!r}"
        )
    if ratio > upper * (1.0 + slack):
        raise InvariantError(f"kappa/lambda {ratio!r} exceeds 1 + trace/(n*lambda) {upper!r}")


def omniscient_risk(pop: PopulationModel, lam: float, n: int, *, reg: EffectiveReg | None = None) -> float:
    """Noiseless test-risk formula dk * kappa^2 * sum_i lambda_i a_i/(kappa+lambda_i)^2.

    Pass a previously solved ``reg`` to reuse the fixed point; it must
    match (lam, n).
    """
    reg = _resolve_reg(pop, lam, n, reg)
    if reg.underdetermined and reg.kappa == 0.0:
        # kappa = 0: predictor interpolates the signal subspace exactly.
        return 0.0
    risk_sum, _ = _kernels.omniscient_sums(pop.eigenvalues, pop.alignment, reg.kappa, float(n))
    return reg.dkappa_dlambda * reg.kappa**2 * risk_sum


def omniscient_risk_noisy(pop: PopulationModel, lam: float, n: int, *, reg: EffectiveReg | None = None) -> float:
    """Noisy-label variant: omniscient_risk + dkappa/dlambda * noise_var."""
    reg = _resolve_reg(pop, lam, n, reg)
    base = omniscient_risk(pop, lam, n, reg=reg)
    if pop.noise_var == 0.0:
        # Avoid 0 * inf at the lam=0 interpolation boundary where dk diverges.
        return base
    return base + reg.dkappa_dlambda * pop.noise_var


def _resolve_reg(pop: PopulationModel, lam: float, n: int, reg: EffectiveReg | None) -> EffectiveReg:
    if reg is None:
        return solve_kappa(pop, lam, n)
    if reg.lam != lam or reg.n != n:
        raise InputError(f"reg was solved at (lam={reg.lam!r}, n={reg.n}), not (lam={lam!r}, n={n})")
    return reg


def mp_consistency_curves(eig: EigenSystem, y: LabelMatrix, grid: LambdaGrid) -> np.ndarray:
    """Points (kappa_hat, f * kappa_hat) along the grid, kappa_hat ascending.

    f(lam) = sum_i p_i/(n (ev_i + lam)) is the label quadratic form of the
    resolvent; multiplying by kappa_hat puts curves from different sample
    sizes on a comparable vertical scale. Labels must be centered, which
    is what makes the curves sample-size-invariant.
    """
    if not y.centered:
        raise InputError("consistency curves require centered labels")
    if eig.n != y.n:
        raise InputError(f"eigensystem has n={eig.n} but labels have {y.n} rows")
    if grid.n != eig.n:
        raise InputError(f"grid resolved for n={grid.n} but eigensystem has n={eig.n}")
    proj2 = eig.label_projections(y.values)
    points = np.empty((len(grid), 2))
    for j, lam in enumerate(grid.resolved):
        kh = hat_kappa(eig.eigenvalues, float(lam))
        f = float(np.sum(proj2 / (lam + eig.eigenvalues))) / eig.n
        points[j, 0] = kh
        points[j, 1] = f * kh
    order = np.argsort(points[:, 0])
    return points[order]


def curve_coincidence(curves: Sequence[np.ndarray]) -> float:
    """Worst relative vertical gap between curves over their shared kappa_hat span.

    Each curve is an (m, 2) array of (kappa_hat, value) points with
    kappa_hat ascending. Values are compared by linear interpolation in
    log kappa_hat on the union of the two curves' abscissas inside the
    overlap, normalized by the largest value either curve attains there.
    More than two curves score as the max over pairs.
    """
    mats = [np.asarray(c, dtype=np.float64) for c in curves]
    if len(mats) < 2:
        raise InputError("coincidence needs at least 2 curves")
    for c in mats:
        if c.ndim != 2 or c.shape[1] != 2 or c.shape[0] < 2:
            raise InputError("each curve must be an (m>=2, 2) array of (kappa_hat, value)")
        if np.any(c[:, 0] <= 0):
            raise InputError("kappa_hat values must be positive for log interpolation")
        if np.any(np.diff(c[:, 0]) <= 0):
            raise InputError("curve kappa_hat values must be strictly increasing")
    worst = 0.0
    for i in range(len(mats)):
        for j in range(i + 1, len(mats)):
            worst = max(worst, _pair_coincidence(mats[i], mats[j]))
    return worst


def _pair_coincidence(a: np.ndarray, b: np.ndarray) -> float:
    lo = max(a[0, 0], b[0, 0])
    hi = min(a[-1, 0], b[-1, 0])
    if hi < lo:
        raise InputError(f"curves do not overlap in kappa_hat (gap [{hi!r}, {lo!r}])")
    union = np.union1d(a[:, 0], b[:, 0])
    union = union[(union >= lo) & (union <= hi)]
    log_u = np.log(union)
    va = np.interp(log_u, np.log(a[:, 0]), a[:, 1])
    vb = np.interp(log_u, np.log(b[:, 0]), b[:, 1])
    scale = float(np.max(np.maximum(np.abs(va), np.abs(vb))))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(va - vb))) / scale
