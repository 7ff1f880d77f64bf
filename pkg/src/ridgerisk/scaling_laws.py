"""Power-law exponent estimators for ridge risk scaling.

gamma is read off the growth of the inverse-Gram trace with sample count,
delta from how the label quadratic form decays along the effective
regularization, and the two combine into the predicted rate alpha = gamma
+ delta, which observed_rate cross-checks against optimally tuned risks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import InputError
from .ridge_path import LabelMatrix, LambdaGrid
from .spectral import EigenSystem

# Fraction of the log-kappa_hat range trimmed from EACH end when fitting
# delta; the power law is an interior statement and saturates at both
# extremes of the lambda grid.
_DELTA_TRIM = 0.2


def _ols_slope(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Least-squares slope of y on x with its standard error."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx == 0.0:
        raise InputError("slope undefined: no variation in the abscissa")
    slope = float(xc @ (y - y.mean())) / sxx
    if x.size <= 2:
        return slope, float("nan")
    resid = (y - y.mean()) - slope * xc
    stderr = float(np.sqrt((resid @ resid) / (x.size - 2) / sxx))
    return slope, stderr


@dataclass(frozen=True)
class ObservedRate:
    """Measured decay rate of optimally tuned test risk.

    ``boundary_ns`` lists sample counts whose best lambda sat on a grid
    endpoint; a nonempty tuple means the grid was likely too narrow there.
    """

    alpha_observed: float
    per_n_lambda_star: dict[int, float]
    boundary_ns: tuple[int, ...] = ()
    stderr: float = float("nan")


@dataclass(frozen=True)
class ScalingEstimate:
    """Fitted exponents; the predicted rate is their exact sum."""

    gamma_hat: float
    delta_hat: float
    alpha_observed: Optional[float] = None
    per_n_lambda_star: dict[int, float] = field(default_factory=dict)
    fit_diagnostics: dict[str, float] = field(default_factory=dict)
    boundary_ns: tuple[int, ...] = ()

    @property
    def alpha_hat(self) -> float:
        return self.gamma_hat + self.delta_hat


def trace_inverse_gram(eig: EigenSystem) -> float:
    """(1/n) Tr((X X^T)^-1), computed from Sigma-hat eigenvalues.

    Grows like n^gamma for power-law spectra, which is what makes it the
    gamma probe. Requires a full-rank Gram matrix.
    """
    evals = eig.eigenvalues
    if np.any(evals <= 0):
        raise InputError("inverse-Gram trace needs a full-rank kernel (all eigenvalues positive)")
    return float(np.sum(1.0 / evals)) / (eig.n * eig.n)


def estimate_gamma(samples: Sequence[tuple[int, float]]) -> float:
    """Log-log slope of inverse-Gram trace against sample count."""
    if len(samples) < 3:
        raise InputError("gamma fit needs at least 3 (n, trace) samples")
    ns = np.array([s[0] for s in samples], dtype=np.float64)
    vals = np.array([s[1] for s in samples], dtype=np.float64)
    if len(set(ns.tolist())) < 3:
        raise InputError("gamma fit needs at least 3 distinct sample counts")
    if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
        raise InputError("trace values must be positive and finite")
    slope, _ = _ols_slope(np.log(ns), np.log(vals))
    return slope


def quadratic_form_path(eig: EigenSystem, y: LabelMatrix, grid: LambdaGrid) -> list[tuple[float, float]]:
    """q(lam) = y^T (X X^T + n lam I)^-1 y summed over classes, per grid lambda."""
    if eig.n != y.n:
        raise InputError(f"eigensystem has n={eig.n} but labels have {y.n} rows")
    if grid.n != eig.n:
        raise InputError(f"grid resolved for n={grid.n} but eigensystem has n={eig.n}")
    proj2 = eig.label_projections(y.values)
    out = []
    for lam in grid.resolved:
        q = float(np.sum(proj2 / (lam + eig.eigenvalues))) / eig.n
        out.append((float(lam), q))
    return out


def estimate_delta(
    q_path: Sequence[tuple[float, float]],
    kappa_hat_path: Sequence[tuple[float, float]],
    gamma_hat: float,
) -> float:
    """Alignment exponent from the decay of q along kappa_hat.

    The quadratic form satisfies q ~ kappa^-(1-delta)/(1+gamma) for
    power-law populations, so the log-log slope s over an interior window
    gives delta = 1 + s (1 + gamma). The window keeps the middle 60% of
    the log-kappa_hat range, dropping the saturated ends.
    """
    q_lams = np.array([p[0] for p in q_path])
    k_lams = np.array([p[0] for p in kappa_hat_path])
    if q_lams.shape != k_lams.shape or not np.array_equal(q_lams, k_lams):
        raise InputError("q and kappa_hat paths must share the same lambda values")
    q = np.array([p[1] for p in q_path], dtype=np.float64)
    kh = np.array([p[1] for p in kappa_hat_path], dtype=np.float64)
    if np.any(q <= 0) or np.any(kh <= 0):
        raise InputError("q and kappa_hat must be strictly positive for the log-log fit")
    log_kh = np.log(kh)
    lo, hi = float(log_kh.min()), float(log_kh.max())
    span = hi - lo
    keep = (log_kh >= lo + _DELTA_TRIM * span) & (log_kh <= hi - _DELTA_TRIM * span)
    if int(np.sum(keep)) < 3:
        raise InputError(f"delta fit window has {int(np.sum(keep))} points; need at least 3")
    slope, _ = _ols_slope(log_kh[keep], np.log(q[keep]))
    return 1.0 + slope * (1.0 + gamma_hat)


def observed_rate(risk_curves: Mapping[int, Sequence[tuple[float, float]]]) -> ObservedRate:
    """Rate of the per-n grid-optimal test risk, as -d log r* / d log n.

    Ties at the minimum resolve to the smallest lambda. Sample counts
    whose optimum lands on a grid endpoint are reported in boundary_ns
    rather than rejected.
    """
    if len(risk_curves) < 3:
        raise InputError("observed rate needs at least 3 sample counts")
    per_n_star: dict[int, float] = {}
    boundary: list[int] = []
    ns = []
    best = []
    for n in sorted(risk_curves):
        pts = list(risk_curves[n])
        if len(pts) < 5:
            raise InputError(f"n={n}: need at least 5 grid points, got {len(pts)}")
        lams = np.array([p[0] for p in pts], dtype=np.float64)
        risks = np.array([p[1] for p in pts], dtype=np.float64)
        if np.any(np.diff(lams) <= 0):
            raise InputError(f"n={n}: lambda grid must be strictly increasing")
        idx = int(np.argmin(risks))
        per_n_star[int(n)] = float(lams[idx])
        if idx == 0 or idx == len(pts) - 1:
            boundary.append(int(n))
        r_star = float(risks[idx])
        if r_star <= 0:
            raise InputError(f"n={n}: optimal risk must be positive for the log-log fit")
        ns.append(float(n))
        best.append(r_star)
    slope, stderr = _ols_slope(np.log(np.array(ns)), np.log(np.array(best)))
    return ObservedRate(
        alpha_observed=-slope,
        per_n_lambda_star=per_n_star,
        boundary_ns=tuple(boundary),
        stderr=stderr,
    )
