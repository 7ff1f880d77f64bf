"""Hot numerical kernels: numba fast path with a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``RIDGERISK_NO_NUMBA`` is unset/empty; otherwise the numpy
implementations take over. Both variants are exported with explicit
suffixes (``*_jit`` / ``*_py``) so parity tests and benchmarks can call
them side by side; the unsuffixed names dispatch on ``NUMBA_ENABLED``.

Kernels:
  - kappa_root: positive root of the effective-regularization fixed point
    1 = lam/kappa + (1/n) sum_i ev_i/(kappa+ev_i), by bracketed bisection
    plus Newton polish. Compensated sums keep the evaluated residual near
    machine precision even for spectra with thousands of atoms.
  - path_sums: the seven per-lambda spectral sums every train-side
    predictor is assembled from (one pass over the spectrum per lambda).
  - omniscient_sums: the two population-side sums behind the omniscient
    risk formula at a solved kappa.
"""

from __future__ import annotations

import os

import numpy as np

# Iteration budget for kappa_root: bisection phase + Newton polish.
KAPPA_MAX_ITER = 200
# Target for the evaluated fixed-point residual (acceptance bound is 1e-12).
KAPPA_RESIDUAL_TOL = 1e-13
# Newton keeps polishing below the target until the residual stops improving
# or reaches this floor; derivative consumers (finite-difference checks of
# dkappa/dlambda) need kappa itself at machine precision, not just g(kappa).
KAPPA_POLISH_TOL = 1e-16
# Bisection narrows the bracket to this relative width before Newton starts.
_BISECT_REL_WIDTH = 1e-3

try:  # pragma: no cover - exercised implicitly by the dispatch tests
    import numba
except ImportError:  # pragma: no cover
    numba = None

NUMBA_ENABLED = numba is not None and not os.environ.get("RIDGERISK_NO_NUMBA")


# ---------------------------------------------------------------------------
# Pure-python/numpy implementations (always available)
# ---------------------------------------------------------------------------
def _fixed_point_residual_py(evals: np.ndarray, lam: float, n: float, kappa: float) -> float:
    """g(kappa) = 1 - lam/kappa - (1/n) sum ev/(kappa+ev); increasing in kappa."""
    return 1.0 - lam / kappa - float(np.sum(evals / (kappa + evals))) / n


def _fixed_point_slope_py(evals: np.ndarray, lam: float, n: float, kappa: float) -> float:
    return lam / kappa**2 + float(np.sum(evals / (kappa + evals) ** 2)) / n


def kappa_root_py(evals: np.ndarray, lam: float, n: float) -> tuple[float, float, int, bool]:
    """Solve the kappa fixed point on the bracket [lam, lam + tr/n].

    Returns (kappa, |residual|, iterations, converged). The bracket is
    valid for every lam >= 0 with a positive root; callers must rule out
    the lam = 0 underdetermined case (no positive root) beforehand.
    """
    trace = float(np.sum(evals))
    if trace == 0.0:
        # Fixed point degenerates to 1 = lam/kappa.
        return lam, 0.0, 0, True
    lo = lam
    hi = lam + trace / n
    iters = 0
    kappa = 0.5 * (lo + hi)
    while hi - lo > _BISECT_REL_WIDTH * kappa and iters < KAPPA_MAX_ITER:
        kappa = 0.5 * (lo + hi)
        g = _fixed_point_residual_py(evals, lam, n, kappa)
        iters += 1
        if g < 0.0:
            lo = kappa
        else:
            hi = kappa
    kappa = 0.5 * (lo + hi)
    g = _fixed_point_residual_py(evals, lam, n, kappa)
    best_kappa, best_g = kappa, abs(g)
    while best_g > KAPPA_POLISH_TOL and iters < KAPPA_MAX_ITER:
        slope = _fixed_point_slope_py(evals, lam, n, kappa)
        candidate = kappa - g / slope
        if not lo < candidate < hi:
            candidate = 0.5 * (lo + hi)
        if g > 0.0:
            hi = kappa
        else:
            lo = kappa
        kappa = candidate
        g = _fixed_point_residual_py(evals, lam, n, kappa)
        iters += 1
        if abs(g) < best_g:
            best_kappa, best_g = kappa, abs(g)
        elif best_g <= KAPPA_RESIDUAL_TOL:
            break
    return best_kappa, best_g, iters, best_g <= 10.0 * KAPPA_RESIDUAL_TOL


def path_sums_py(evals: np.ndarray, proj2: np.ndarray, lams: np.ndarray) -> np.ndarray:
    """Per-lambda spectral sums, shape (len(lams), 7).

    Columns (p_i = per-direction squared label projections summed over
    classes; ev_i = Sigma-hat eigenvalues):
      0: sum_i lam/(lam+ev_i)            (GCV multiplier numerator)
      1: sum_i (lam/(lam+ev_i))^2 p_i    (empirical risk numerator)
      2: sum_i 1/(lam+ev_i)              (kappa-hat denominator)
      3: sum_i p_i/(lam+ev_i)            (quadratic form y^T resolvent y, x n)
      4: sum_i ev_i p_i/(lam+ev_i)^2     (coefficient norm numerator, x n^2)
      5: sum_i ev_i/(lam+ev_i)^2         (spectrum-only signal basis)
      6: sum_i 1/(lam+ev_i)^2            (spectrum-only noise basis, x n)
    """
    out = np.empty((lams.shape[0], 7))
    for j, lam in enumerate(lams):
        denom = lam + evals
        inv = 1.0 / denom
        shrink = lam * inv
        out[j, 0] = np.sum(shrink)
        out[j, 1] = np.sum(shrink * shrink * proj2)
        out[j, 2] = np.sum(inv)
        out[j, 3] = np.sum(proj2 * inv)
        out[j, 4] = np.sum(evals * proj2 * inv * inv)
        out[j, 5] = np.sum(evals * inv * inv)
        out[j, 6] = np.sum(inv * inv)
    return out


def omniscient_sums_py(evals: np.ndarray, align: np.ndarray, kappa: float, n: float) -> tuple[float, float]:
    """(sum_i ev_i a_i/(kappa+ev_i)^2, (1/n) sum_i ev_i^2/(kappa+ev_i)^2)."""
    denom = (kappa + evals) ** 2
    risk_sum = float(np.sum(evals * align / denom))
    dsum = float(np.sum(evals * evals / denom)) / n
    return risk_sum, dsum


# ---------------------------------------------------------------------------
# Numba implementations
# ---------------------------------------------------------------------------
if NUMBA_ENABLED:
    from numba import njit

    @njit(cache=True)
    def _fixed_point_pair_jit(evals, lam, n, kappa):
        # Kahan-compensated accumulation of the residual and its slope.
        s = 0.0
        comp_s = 0.0
        d = 0.0
        comp_d = 0.0
        for i in range(evals.shape[0]):
            denom = kappa + evals[i]
            term = evals[i] / denom
            y = term - comp_s
            t = s + y
            comp_s = (t - s) - y
            s = t
            term2 = term / denom
            y2 = term2 - comp_d
            t2 = d + y2
            comp_d = (t2 - d) - y2
            d = t2
        g = 1.0 - lam / kappa - s / n
        slope = lam / (kappa * kappa) + d / n
        return g, slope

    @njit(cache=True)
    def kappa_root_jit(evals, lam, n):
        trace = 0.0
        comp = 0.0
        for i in range(evals.shape[0]):
            y = evals[i] - comp
            t = trace + y
            comp = (t - trace) - y
            trace = t
        if trace == 0.0:
            return lam, 0.0, 0, True
        lo = lam
        hi = lam + trace / n
        iters = 0
        kappa = 0.5 * (lo + hi)
        while hi - lo > _BISECT_REL_WIDTH * kappa and iters < KAPPA_MAX_ITER:
            kappa = 0.5 * (lo + hi)
            g, _ = _fixed_point_pair_jit(evals, lam, n, kappa)
            iters += 1
            if g < 0.0:
                lo = kappa
            else:
                hi = kappa
        kappa = 0.5 * (lo + hi)
        g, slope = _fixed_point_pair_jit(evals, lam, n, kappa)
        best_kappa = kappa
        best_g = abs(g)
        while best_g > KAPPA_POLISH_TOL and iters < KAPPA_MAX_ITER:
            candidate = kappa - g / slope
            if candidate <= lo or candidate >= hi:
                candidate = 0.5 * (lo + hi)
            if g > 0.0:
                hi = kappa
            else:
                lo = kappa
            kappa = candidate
            g, slope = _fixed_point_pair_jit(evals, lam, n, kappa)
            iters += 1
            if abs(g) < best_g:
                best_kappa = kappa
                best_g = abs(g)
            elif best_g <= KAPPA_RESIDUAL_TOL:
                break
        return best_kappa, best_g, iters, best_g <= 10.0 * KAPPA_RESIDUAL_TOL

    @njit(cache=True)
    def path_sums_jit(evals, proj2, lams):
        out = np.empty((lams.shape[0], 7))
        for j in range(lams.shape[0]):
            lam = lams[j]
            s0 = 0.0
            s1 = 0.0
            s2 = 0.0
            s3 = 0.0
            s4 = 0.0
            s5 = 0.0
            s6 = 0.0
            for i in range(evals.shape[0]):
                inv = 1.0 / (lam + evals[i])
                shrink = lam * inv
                p = proj2[i]
                s0 += shrink
                s1 += shrink * shrink * p
                s2 += inv
                s3 += p * inv
                s4 += evals[i] * p * inv * inv
                s5 += evals[i] * inv * inv
                s6 += inv * inv
            out[j, 0] = s0
            out[j, 1] = s1
            out[j, 2] = s2
            out[j, 3] = s3
            out[j, 4] = s4
            out[j, 5] = s5
            out[j, 6] = s6
        return out

    @njit(cache=True)
    def omniscient_sums_jit(evals, align, kappa, n):
        risk_sum = 0.0
        comp_r = 0.0
        dsum = 0.0
        comp_d = 0.0
        for i in range(evals.shape[0]):
            denom = kappa + evals[i]
            base = evals[i] / (denom * denom)
            term_r = base * align[i]
            y = term_r - comp_r
            t = risk_sum + y
            comp_r = (t - risk_sum) - y
            risk_sum = t
            term_d = base * evals[i]
            y2 = term_d - comp_d
            t2 = dsum + y2
            comp_d = (t2 - dsum) - y2
            dsum = t2
        return risk_sum, dsum / n

else:  # pragma: no cover - depends on environment flag
    kappa_root_jit = None
    path_sums_jit = None
    omniscient_sums_jit = None


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------
def _as_f64(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(a, dtype=np.float64))


def kappa_root(evals: np.ndarray, lam: float, n: float) -> tuple[float, float, int, bool]:
    evals = _as_f64(evals)
    if NUMBA_ENABLED:
        kappa, residual, iters, ok = kappa_root_jit(evals, float(lam), float(n))
        return float(kappa), float(residual), int(iters), bool(ok)
    return kappa_root_py(evals, float(lam), float(n))


def path_sums(evals: np.ndarray, proj2: np.ndarray, lams: np.ndarray) -> np.ndarray:
    evals = _as_f64(evals)
    proj2 = _as_f64(proj2)
    lams = _as_f64(np.atleast_1d(lams))
    if NUMBA_ENABLED:
        return path_sums_jit(evals, proj2, lams)
    return path_sums_py(evals, proj2, lams)


def omniscient_sums(evals: np.ndarray, align: np.ndarray, kappa: float, n: float) -> tuple[float, float]:
    evals = _as_f64(evals)
    align = _as_f64(align)
    if NUMBA_ENABLED:
        risk_sum, dsum = omniscient_sums_jit(evals, align, float(kappa), float(n))
        return float(risk_sum), float(dsum)
    return omniscient_sums_py(evals, align, float(kappa), float(n))


def warmup() -> None:
    """Trigger JIT compilation on toy inputs so timed runs stay clean."""
    ev = np.array([1.0, 0.5])
    p = np.array([1.0, 1.0])
    kappa_root(ev, 0.1, 2.0)
    path_sums(ev, p, np.array([0.1, 1.0]))
    omniscient_sums(ev, p, 1.0, 2.0)
