"""Synthetic Gaussian regression instances with controlled power laws.

Populations are built directly in the covariance eigenbasis: a power-law
spectrum, power-law signal alignment, and an optional label-noise floor,
jointly normalized so features and labels have unit second moment. These
instances are the ground truth every estimator in the package is checked
against. Also provides the noise-embedding trick that rewrites a noisy
instance as a noiseless one with a single extra feature column.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import InputError
from .ridge_path import LabelMatrix
from .rmt_core import PopulationModel

# Draws standard (zero-mean, unit-variance, iid) entries of shape (n, p);
# replacing it swaps the covariate distribution while keeping the
# covariance scaling and the rest of the draw order intact.
CovariateSampler = Callable[[np.random.Generator, int, int], np.ndarray]


def make_population(p: int, gamma: float, delta: float, sigma2: float = 0.0) -> PopulationModel:
    """Power-law population: spectrum i^-(1+gamma), alignment i^-delta.

    Both sequences are rescaled so the trace is 1 and the label power
    (signal plus noise) is 1. gamma must exceed -1 so the spectrum
    decreases; the scaling theory additionally assumes delta < 1, which is
    deliberately not enforced here.
    """
    if p < 1:
        raise InputError("population size must be at least 1")
    if not (gamma > -1):
        raise InputError("gamma must be greater than -1 for a decreasing spectrum")
    if not (0 <= sigma2 < 1):
        raise InputError("noise variance must lie in [0, 1) to leave signal power for labels")
    idx = np.arange(1, p + 1, dtype=np.float64)
    evals = idx ** (-1.0 - gamma)
    evals /= np.sum(evals)
    shape = idx ** (-delta)
    align = shape * ((1.0 - sigma2) / np.sum(evals * shape))
    return PopulationModel(eigenvalues=evals, alignment=align, noise_var=sigma2, normalized=True)


@dataclass(frozen=True)
class SyntheticInstance:
    """One sampled dataset: rows of features, labels y = X beta + noise.

    The realized noise vector is kept so the instance can later be
    rewritten noiselessly via embed_noise. Identical seeds reproduce the
    instance bit for bit.
    """

    features: np.ndarray
    labels: np.ndarray
    beta: np.ndarray
    noise: np.ndarray
    seed: int

    def __post_init__(self) -> None:
        for name in ("features", "labels", "beta", "noise"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return int(self.features.shape[0])

    @property
    def p(self) -> int:
        return int(self.features.shape[1])

    @property
    def label_matrix(self) -> LabelMatrix:
        return LabelMatrix(values=self.labels, centered=False)


def sample_instance(
    pop: PopulationModel,
    n: int,
    seed: int,
    covariate_sampler: Optional[CovariateSampler] = None,
) -> SyntheticInstance:
    """Draw n rows from the population.

    Draw order is signs, then covariates, then noise, so the ground-truth
    coefficients depend only on the seed: the same seed at different n
    keeps beta fixed while adding samples. The standard-normal noise block
    is drawn even at sigma2 = 0 to keep the stream layout identical across
    noise levels.
    """
    if n < 1:
        raise InputError("sample count must be at least 1")
    rng = np.random.default_rng(seed)
    signs = rng.integers(0, 2, size=pop.p).astype(np.float64) * 2.0 - 1.0
    beta = signs * np.sqrt(pop.alignment)
    if covariate_sampler is None:
        raw = rng.standard_normal((n, pop.p))
    else:
        raw = np.asarray(covariate_sampler(rng, n, pop.p), dtype=np.float64)
        if raw.shape != (n, pop.p):
            raise InputError(f"covariate sampler returned shape {raw.shape}, expected {(n, pop.p)}")
    features = raw * np.sqrt(pop.eigenvalues)[None, :]
    noise = math.sqrt(pop.noise_var) * rng.standard_normal(n)
    labels = features @ beta + noise
    return SyntheticInstance(features=features, labels=labels, beta=beta, noise=noise, seed=seed)


def embed_noise(instance: SyntheticInstance, t: float) -> SyntheticInstance:
    """Rewrite a noisy instance as a noiseless one in dimension p+1.

    The recorded noise becomes a feature column scaled by sqrt(t) whose
    true coefficient is 1/sqrt(t), so labels are reproduced by
    construction (the stored label vector is reused unchanged) and the
    returned instance has zero noise. Small t makes the extra column
    nearly invisible to ridge: fits converge to the original noisy fits
    at rate sqrt(t).
    """
    if not (t > 0):
        raise InputError("embedding scale t must be positive")
    root = math.sqrt(t)
    column = (root * instance.noise)[:, None]
    features = np.hstack([instance.features, column])
    beta = np.append(instance.beta, 1.0 / root)
    return SyntheticInstance(
        features=features,
        labels=np.array(instance.labels),
        beta=beta,
        noise=np.zeros(instance.n),
        seed=instance.seed,
    )
