"""Ridge regression in dual form along a regularization path.

One eigendecomposition of the Gram matrix serves the entire path: for each
resolved lambda the dual coefficients are c = U diag(1/(n(ev_i + lam))) U^T y,
where ev_i are K/n eigenvalues. Risks are evaluated spectrally, so adding a
lambda to the grid costs O(n) per class, not another linear solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InputError
from .spectral import EigenSystem

# Directions with ev_i <= RANK_EPS * ev_max are treated as the null space in
# ridgeless (lambda -> 0+) computations.
RANK_EPS = 1e-10

_CENTER_TOL = 1e-10


@dataclass(frozen=True)
class LabelMatrix:
    """n x c real label block; one column per class or target."""

    values: np.ndarray
    centered: bool = False

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2:
            raise InputError(f"labels must be 1-D or 2-D, got shape {vals.shape}")
        if vals.shape[0] < 1 or vals.shape[1] < 1:
            raise InputError("label matrix must be nonempty")
        if not np.all(np.isfinite(vals)):
            raise InputError("labels contain non-finite entries")
        if self.centered:
            worst = float(np.max(np.abs(np.sum(vals, axis=0))))
            if worst > _CENTER_TOL * vals.shape[0]:
                raise InputError(f"labels marked centered but a column sums to {worst:.3e}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def c(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class LambdaGrid:
    """Strictly increasing base grid lambda0 with per-n resolution lambda0/n."""

    base_values: np.ndarray
    n: int
    resolved: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        base = np.asarray(self.base_values, dtype=np.float64)
        if base.ndim != 1 or base.size < 1:
            raise InputError("lambda grid must be a nonempty 1-D array")
        if not np.all(np.isfinite(base)) or np.any(base <= 0):
            raise InputError("lambda grid values must be finite and strictly positive")
        if np.any(np.diff(base) <= 0):
            raise InputError("lambda grid must be strictly increasing")
        if self.n < 1:
            raise InputError("sample count must be at least 1")
        base.setflags(write=False)
        resolved = base / self.n
        resolved.setflags(write=False)
        object.__setattr__(self, "base_values", base)
        object.__setattr__(self, "resolved", resolved)

    def __len__(self) -> int:
        return int(self.base_values.size)


@dataclass(frozen=True)
class DualRidgeFit:
    """Dual ridge solution at one lambda.

    ``dual_coeffs`` is c = (K + n*lam*I)^-1 y (n x c); predictions at new
    points are cross_kernel @ dual_coeffs. ``spectral_weights`` holds the
    per-eigendirection factors 1/(n(ev_i + lam)), which must be strictly
    positive for lam > 0; the ridgeless limit instead zeroes null
    directions and sets ``rank_deficient`` when any exist.
    """

    lam: float
    dual_coeffs: np.ndarray
    spectral_weights: np.ndarray
    rank_deficient: bool = False

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise InputError("lambda must be nonnegative")
        weights = np.asarray(self.spectral_weights, dtype=np.float64)
        if self.lam > 0 and np.any(weights <= 0):
            raise InputError("spectral weights must be strictly positive for lambda > 0")


def _check_pair(eig: EigenSystem, y: LabelMatrix) -> None:
    if eig.n != y.n:
        raise InputError(f"eigensystem has n={eig.n} but labels have {y.n} rows")


def fit_path(eig: EigenSystem, y: LabelMatrix, grid: LambdaGrid) -> list[DualRidgeFit]:
    """Dual ridge fits for every resolved lambda in the grid."""
    _check_pair(eig, y)
    if grid.n != eig.n:
        raise InputError(f"grid resolved for n={grid.n} but eigensystem has n={eig.n}")
    uty = eig.eigenvectors.T @ y.values
    fits = []
    for lam in grid.resolved:
        weights = 1.0 / (eig.n * (eig.eigenvalues + lam))
        coeffs = eig.eigenvectors @ (weights[:, None] * uty)
        fits.append(DualRidgeFit(lam=float(lam), dual_coeffs=coeffs, spectral_weights=weights))
    return fits


def ridgeless_fit(eig: EigenSystem, y: LabelMatrix) -> DualRidgeFit:
    """Minimum-norm (pseudoinverse) solution, the lambda -> 0+ limit.

    Null directions (relative threshold RANK_EPS) get weight zero instead
    of substituting a tiny lambda, so the result does not depend on any
    grid endpoint.
    """
    _check_pair(eig, y)
    evals = eig.eigenvalues
    top = float(evals[0]) if evals.size else 0.0
    live = evals > RANK_EPS * top
    weights = np.zeros_like(evals)
    weights[live] = 1.0 / (eig.n * evals[live])
    uty = eig.eigenvectors.T @ y.values
    coeffs = eig.eigenvectors @ (weights[:, None] * uty)
    return DualRidgeFit(
        lam=0.0,
        dual_coeffs=coeffs,
        spectral_weights=weights,
        rank_deficient=bool(np.any(~live)),
    )


def null_space_mask(eig: EigenSystem) -> np.ndarray:
    """Boolean mask of eigendirections treated as the kernel's null space."""
    top = float(eig.eigenvalues[0]) if eig.eigenvalues.size else 0.0
    return eig.eigenvalues <= RANK_EPS * top


def empirical_risk(eig: EigenSystem, y: LabelMatrix, lam: float) -> float:
    """Training mean squared error of the dual ridge fit, summed over classes.

    Spectral form: (1/n) sum_i (lam/(lam+ev_i))^2 p_i with p_i the squared
    label projections. At lam = 0 this is the squared projection of y onto
    the null space of K, divided by n (zero for full-rank kernels).
    """
    _check_pair(eig, y)
    if lam < 0:
        raise InputError("lambda must be nonnegative")
    proj2 = eig.label_projections(y.values)
    if lam == 0:
        null = null_space_mask(eig)
        return float(np.sum(proj2[null])) / eig.n
    shrink = lam / (lam + eig.eigenvalues)
    return float(np.sum(shrink * shrink * proj2)) / eig.n


def test_risk(fit: DualRidgeFit, cross_kernel: np.ndarray, y_test: LabelMatrix) -> float:
    """Held-out mean squared error (1/m) ||y_test - G c||_F^2.

    ``cross_kernel`` holds raw inner products between the m test points and
    the n training points, matching the raw Gram scale the fit was made on.
    """
    g = np.asarray(cross_kernel, dtype=np.float64)
    if g.ndim != 2:
        raise InputError(f"cross kernel must be 2-D, got shape {g.shape}")
    m, n = g.shape
    if n != fit.dual_coeffs.shape[0]:
        raise InputError(f"cross kernel has {n} training columns but fit has {fit.dual_coeffs.shape[0]}")
    if m != y_test.n:
        raise InputError(f"cross kernel has {m} test rows but test labels have {y_test.n}")
    resid = y_test.values - g @ fit.dual_coeffs
    return float(np.sum(resid * resid)) / m


def coefficient_norm_sq(eig: EigenSystem, y: LabelMatrix, lam: float) -> float:
    """Squared primal-coefficient norm ||X^T c||^2 evaluated spectrally.

    Equals sum_i ev_i p_i / (n (ev_i + lam)^2); null directions contribute
    nothing in the ridgeless limit.
    """
    _check_pair(eig, y)
    if lam < 0:
        raise InputError("lambda must be nonnegative")
    proj2 = eig.label_projections(y.values)
    evals = eig.eigenvalues
    if lam == 0:
        live = ~null_space_mask(eig)
        out = np.zeros_like(evals)
        out[live] = proj2[live] / (eig.n * evals[live])
        return float(np.sum(out))
    return float(np.sum(evals * proj2 / (eig.n * (evals + lam) ** 2)))
