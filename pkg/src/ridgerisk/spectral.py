"""Gram-matrix construction and dense symmetric eigendecomposition.

Every downstream quantity in this package is spectral: it is a function of
the eigenvalues of the normalized second-moment operator K/n and of the
label projections onto its eigenvectors. This module is the single
boundary where raw kernels are decomposed and rescaled; EigenSystem
eigenvalues are always on the K/n scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, NumericalError

# Eigenvalues of a PSD input may come out slightly negative; anything within
# -PSD_EPS_REL * top_eigenvalue is clamped to zero, more negative is rejected.
PSD_EPS_REL = 1e-8
# Absolute clamp floor used when the top eigenvalue itself is zero.
PSD_EPS_ABS = 1e-12

SCALE_RAW = "raw"
SCALE_NORMALIZED = "divided-by-n"

_SYMMETRY_RTOL = 1e-10
_ORTHO_TOL = 1e-8


def _max_abs(a: np.ndarray) -> float:
    return float(np.max(np.abs(a))) if a.size else 0.0


@dataclass(frozen=True)
class GramMatrix:
    """Symmetric matrix of pairwise inner products, with its sample count.

    ``entries`` holds either raw inner products x_i^T x_j (scale "raw") or
    the same divided by n (scale "divided-by-n"). Inputs are symmetrized as
    (K + K^T)/2 on construction; asymmetry beyond a relative 1e-10 is an
    input error rather than something to silently average away.
    """

    entries: np.ndarray
    n: int
    scale: str = SCALE_RAW

    def __post_init__(self) -> None:
        entries = np.asarray(self.entries, dtype=np.float64)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise InputError(f"gram matrix must be square, got shape {entries.shape}")
        if self.n < 1:
            raise InputError("sample count must be at least 1")
        if entries.shape[0] != self.n:
            raise InputError(f"gram matrix is {entries.shape[0]}x{entries.shape[0]} but n={self.n}")
        if self.scale not in (SCALE_RAW, SCALE_NORMALIZED):
            raise InputError(f"unknown gram scale {self.scale!r}")
        if not np.all(np.isfinite(entries)):
            raise InputError("gram matrix contains non-finite entries")
        asym = _max_abs(entries - entries.T)
        scale = _max_abs(entries)
        if asym > _SYMMETRY_RTOL * max(scale, 1.0):
            raise InputError(f"gram matrix asymmetry {asym:.3e} exceeds tolerance at scale {scale:.3e}")
        sym = (entries + entries.T) / 2.0
        sym.setflags(write=False)
        object.__setattr__(self, "entries", sym)


@dataclass(frozen=True)
class EigenSystem:
    """Descending eigenvalues of K/n with orthonormal eigenvector columns.

    Eigenvalues are on the K/n scale (the normalized sample second-moment
    operator); ``gram_eigenvalues`` recovers the raw-K scale. Eigenvectors
    are the columns of ``eigenvectors``, aligned with ``eigenvalues``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    n: int

    def __post_init__(self) -> None:
        evals = np.asarray(self.eigenvalues, dtype=np.float64)
        evecs = np.asarray(self.eigenvectors, dtype=np.float64)
        if evals.ndim != 1 or evecs.ndim != 2:
            raise InputError("eigenvalues must be 1-D and eigenvectors 2-D")
        if evecs.shape != (evals.shape[0], evals.shape[0]):
            raise InputError(f"eigenvector block {evecs.shape} does not match {evals.shape[0]} eigenvalues")
        if self.n < 1:
            raise InputError("sample count must be at least 1")
        if np.any(np.diff(evals) > 0):
            raise InputError("eigenvalues must be sorted descending")
        if np.any(evals < 0):
            raise InputError("eigenvalues must be nonnegative after clamping")
        evals.setflags(write=False)
        evecs.setflags(write=False)
        object.__setattr__(self, "eigenvalues", evals)
        object.__setattr__(self, "eigenvectors", evecs)

    @property
    def gram_eigenvalues(self) -> np.ndarray:
        """Eigenvalues on the raw-K scale (n times the stored values)."""
        return self.eigenvalues * self.n

    def label_projections(self, labels: np.ndarray) -> np.ndarray:
        """Per-direction squared projections sum_c <u_i, y_c>^2, length n."""
        y = np.asarray(labels, dtype=np.float64)
        if y.ndim == 1:
            y = y[:, None]
        if y.shape[0] != self.n:
            raise InputError(f"labels have {y.shape[0]} rows, expected {self.n}")
        proj = self.eigenvectors.T @ y
        return np.sum(proj * proj, axis=1)


def gram_from_features(features: np.ndarray) -> GramMatrix:
    """Raw Gram matrix XX^T of an n x p feature matrix."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise InputError(f"features must be 2-D, got shape {x.shape}")
    n, p = x.shape
    if n < 1 or p < 1:
        raise InputError("features need at least one row and one column")
    if not np.all(np.isfinite(x)):
        raise InputError("features contain non-finite entries")
    return GramMatrix(entries=x @ x.T, n=n, scale=SCALE_RAW)


def _clamp_spectrum(evals: np.ndarray, context: str) -> np.ndarray:
    """Clamp round-off negatives to zero; reject genuinely negative spectra."""
    top = float(evals[0]) if evals.size else 0.0
    eps = PSD_EPS_REL * top if top > 0 else PSD_EPS_ABS
    low = float(evals[-1]) if evals.size else 0.0
    if low < -eps:
        raise InputError(f"{context}: eigenvalue {low:.6e} below -{eps:.1e}, input is not positive semidefinite")
    return np.maximum(evals, 0.0)


def eigh(gram: GramMatrix) -> EigenSystem:
    """Full eigendecomposition of a Gram matrix, rescaled to the K/n spectrum.

    Eigenvalues come back descending and clamped to be nonnegative (inputs
    are expected PSD up to round-off). Solver failure raises a numerical
    error carrying a condition summary of the input.
    """
    k = gram.entries if gram.scale == SCALE_NORMALIZED else gram.entries / gram.n
    try:
        evals, evecs = np.linalg.eigh(k)
    except np.linalg.LinAlgError as exc:
        diag = np.diag(gram.entries)
        raise NumericalError(
            "eigendecomposition failed to converge "
            f"(n={gram.n}, trace={np.sum(diag):.6e}, max|K|={_max_abs(gram.entries):.6e})"
        ) from exc
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    evecs = evecs[:, order]
    evals = _clamp_spectrum(evals, "eigh")
    gram_resid = _max_abs(evecs.T @ evecs - np.eye(gram.n))
    if gram_resid > _ORTHO_TOL:
        raise NumericalError(f"eigenvector columns lost orthonormality (max deviation {gram_resid:.3e})")
    return EigenSystem(eigenvalues=evals, eigenvectors=evecs, n=gram.n)


def eigvalsh_gram(gram: GramMatrix) -> np.ndarray:
    """Eigenvalues only (K/n scale, descending, clamped).

    Cheaper than ``eigh`` when eigenvectors are not needed, e.g. the
    eigendecay-exponent pipeline which only consumes the spectrum.
    """
    k = gram.entries if gram.scale == SCALE_NORMALIZED else gram.entries / gram.n
    try:
        evals = np.linalg.eigvalsh(k)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue computation failed to converge (n={gram.n})") from exc
    return _clamp_spectrum(evals[::-1], "eigvalsh_gram")
