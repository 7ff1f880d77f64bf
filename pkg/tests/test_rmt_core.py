"""Deterministic-equivalent solver and omniscient risk formula tests.

The single-atom population (one unit eigenvalue, unit alignment, n = 1)
has closed forms in the golden ratio: kappa at lambda = 1 solves
1 = 1/k + 1/(k + 1), i.e. k = (1 + sqrt 5)/2, and the noiseless risk
collapses to 1/sqrt 5. Those exact constants anchor the whole module.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ridgerisk import (
    EigenSystem,
    InputError,
    LabelMatrix,
    LambdaGrid,
    PopulationModel,
    center_labels,
    hat_kappa,
    omniscient_risk,
    omniscient_risk_noisy,
    solve_kappa,
)
from ridgerisk.rmt_core import (
    EffectiveReg,
    _resolve_reg,
    curve_coincidence,
    mp_consistency_curves,
)

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


def _atom(noise=0.0):
    return PopulationModel(np.array([1.0]), np.array([1.0]), noise)


def _pop(seed, p, noise=0.0):
    rng = np.random.default_rng(seed)
    ev = np.sort(rng.uniform(0.1, 1.0, p))[::-1]
    align = rng.uniform(0.0, 1.0, p)
    return PopulationModel(ev, align, noise)


class TestPopulationModel:
    @pytest.mark.parametrize(
        "eigenvalues,alignment",
        [
            (np.array([0.5, 1.0]), np.array([0.5, 0.5])),
            (np.array([1.0, -0.1]), np.array([0.5, 0.5])),
            (np.array([1.0, 0.5]), np.array([1.5, -0.5])),
            (np.array([1.0, 0.5]), np.array([1.0])),
        ],
        ids=["unsorted", "negative-eigenvalue", "negative-alignment", "length"],
    )
    def test_rejects_malformed_spectra(self, eigenvalues, alignment):
        with pytest.raises(InputError):
            PopulationModel(eigenvalues, alignment)

    def test_rejects_negative_noise(self):
        with pytest.raises(InputError):
            PopulationModel(np.array([1.0]), np.array([1.0]), -0.1)

    def test_normalized_needs_unit_trace(self):
        with pytest.raises(InputError, match="unit trace"):
            PopulationModel(
                np.array([0.5, 0.4]), np.array([1.0, 1.0]), normalized=True
            )

    def test_normalized_needs_unit_signal_power(self):
        with pytest.raises(InputError, match="label power"):
            PopulationModel(
                np.array([0.6, 0.4]), np.array([0.5, 0.5]), normalized=True
            )

    def test_normalized_accepts_exact_model(self):
        pop = PopulationModel(
            np.array([0.6, 0.4]), np.array([1.0, 1.0]), normalized=True
        )
        assert pop.normalized


class TestSolveKappa:
    def test_golden_ratio_atom(self):
        reg = solve_kappa(_atom(), 1.0, 1)
        assert reg.kappa == pytest.approx(GOLDEN, rel=1e-14)
        assert reg.solver_residual <= 1e-13
        assert not reg.underdetermined

    def test_golden_ratio_derivative(self):
        # Implicit differentiation of 1 = lam/k + (1/n) sum ev/(k + ev):
        # dk/dlam = (1/k) / (lam/k^2 + (1/n) sum ev/(k + ev)^2) at the root.
        reg = solve_kappa(_atom(), 1.0, 1)
        k = reg.kappa
        expect = (1.0 / k) / (1.0 / k**2 + 1.0 / (k + 1.0) ** 2)
        assert reg.dkappa_dlambda == pytest.approx(expect, rel=1e-12)

    def test_zero_trace_returns_lambda(self):
        pop = PopulationModel(np.zeros(3), np.zeros(3))
        reg = solve_kappa(pop, 0.7, 5)
        assert reg.kappa == 0.7
        assert reg.solver_residual == 0.0
        assert reg.iterations == 0

    def test_underdetermined_ridgeless(self):
        # two nonzero population directions against five samples: the
        # ridgeless fixed point sits at zero with slope 1/(1 - p_nz/n).
        pop = PopulationModel(np.array([0.6, 0.4, 0.0]), np.array([0.5, 0.5, 0.0]))
        reg = solve_kappa(pop, 0.0, 5)
        assert reg.kappa == 0.0
        assert reg.underdetermined
        assert reg.dkappa_dlambda == pytest.approx(1.0 / (1.0 - 2.0 / 5.0), rel=1e-14)

    def test_critical_ridgeless_slope_is_infinite(self):
        pop = PopulationModel(np.array([0.6, 0.4]), np.array([0.5, 0.5]))
        reg = solve_kappa(pop, 0.0, 2)
        assert reg.kappa == 0.0
        assert reg.underdetermined
        assert math.isinf(reg.dkappa_dlambda)

    def test_fixed_point_residual(self):
        pop = _pop(11, 40)
        for lam in (1e-5, 1e-2, 1.0):
            reg = solve_kappa(pop, lam, 25)
            k = reg.kappa
            lhs = lam / k + np.mean(pop.eigenvalues / (k + pop.eigenvalues)) * (
                len(pop.eigenvalues) / 25
            )
            assert lhs == pytest.approx(1.0, abs=5e-13)

    @settings(max_examples=30, deadline=None)
    @given(
        lam=st.floats(1e-5, 5.0),
        seed=st.integers(0, 5_000),
        n=st.integers(3, 60),
    )
    def test_kappa_bracket(self, lam, seed, n):
        pop = _pop(seed, 24)
        reg = solve_kappa(pop, lam, n)
        trace = float(np.sum(pop.eigenvalues))
        assert lam <= reg.kappa <= lam + trace / n + 1e-12

    def test_monotone_in_lambda(self):
        pop = _pop(3, 30)
        grid = np.geomspace(1e-5, 10.0, 18)
        kappas = [solve_kappa(pop, lam, 12).kappa for lam in grid]
        assert all(a < b for a, b in zip(kappas, kappas[1:]))

    def test_monotone_in_n(self):
        # more samples resolve more of the spectrum, shrinking kappa.
        pop = _pop(4, 30)
        kappas = [solve_kappa(pop, 0.01, n).kappa for n in (5, 10, 20, 40, 80)]
        assert all(a > b for a, b in zip(kappas, kappas[1:]))

    def test_derivative_matches_finite_difference(self):
        pop = _pop(9, 50)
        lam = 0.05
        reg = solve_kappa(pop, lam, 20)
        h = 1e-2 * lam
        fd = lambda step: (
            solve_kappa(pop, lam + step, 20).kappa
            - solve_kappa(pop, lam - step, 20).kappa
        ) / (2.0 * step)
        richardson = (4.0 * fd(h / 2.0) - fd(h)) / 3.0
        assert reg.dkappa_dlambda == pytest.approx(richardson, rel=1e-7)


class TestOmniscientRisk:
    def test_noiseless_atom_inverse_root_five(self):
        got = omniscient_risk(_atom(), 1.0, 1)
        assert got == pytest.approx(5.0**-0.5, rel=1e-14)

    def test_noisy_atom_closed_form(self):
        # excess term (11 sqrt 5 - 5)/40 plus the sigma^2 = 1/4 floor.
        got = omniscient_risk_noisy(_atom(0.25), 1.0, 1)
        assert got == pytest.approx((11.0 * math.sqrt(5.0) + 5.0) / 40.0, rel=1e-14)

    def test_noise_floor_with_empty_spectrum(self):
        pop = PopulationModel(np.zeros(3), np.zeros(3), 0.25)
        assert omniscient_risk_noisy(pop, 0.7, 5) == pytest.approx(0.25, rel=1e-14)
        assert omniscient_risk(PopulationModel(np.zeros(3), np.zeros(3)), 0.7, 5) == 0.0

    def test_noiseless_underdetermined_is_finite(self):
        # the 1/(1 - S) amplifier blows up only when sigma^2 > 0 matters;
        # with two live directions out of five the ratio must stay finite.
        pop = PopulationModel(np.array([0.6, 0.4, 0.0]), np.array([0.5, 0.5, 0.0]))
        got = omniscient_risk(pop, 0.0, 5)
        assert math.isfinite(got)
        assert got >= 0.0

    def test_noisy_reduces_to_noiseless_at_zero_variance(self):
        pop = _pop(21, 35)
        for lam in (1e-3, 0.1, 2.0):
            assert omniscient_risk_noisy(pop, lam, 14) == pytest.approx(
                omniscient_risk(pop, lam, 14), rel=1e-14
            )

    def test_noisy_dominates_noiseless(self):
        noiseless = _pop(22, 35)
        noisy = PopulationModel(noiseless.eigenvalues, noiseless.alignment, 0.3)
        for lam in (1e-3, 0.1, 2.0):
            assert omniscient_risk_noisy(noisy, lam, 14) > omniscient_risk(
                noiseless, lam, 14
            )

    def test_reg_reuse_matches_fresh_solve(self):
        pop = _pop(23, 35)
        reg = solve_kappa(pop, 0.05, 14)
        assert omniscient_risk(pop, 0.05, 14, reg=reg) == omniscient_risk(
            pop, 0.05, 14
        )

    def test_reg_mismatch_rejected(self):
        pop = _pop(23, 35)
        reg = solve_kappa(pop, 0.05, 14)
        with pytest.raises(InputError):
            _resolve_reg(pop, 0.06, 14, reg)
        with pytest.raises(InputError):
            _resolve_reg(pop, 0.05, 15, reg)

    def test_resolve_solves_when_absent(self):
        pop = _pop(23, 35)
        fresh = _resolve_reg(pop, 0.05, 14, None)
        assert isinstance(fresh, EffectiveReg)
        assert fresh.lam == 0.05
        assert fresh.n == 14


def _sampled_eig(seed, n, p):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p)) / np.sqrt(p)
    k = x @ x.T
    ev, vec = np.linalg.eigh(k)
    order = np.argsort(ev)[::-1]
    return EigenSystem(np.clip(ev[order] / n, 0.0, None), vec[:, order], n)


class TestConsistencyCurves:
    def test_requires_centered_labels(self):
        eig = _sampled_eig(0, 16, 24)
        y = LabelMatrix(np.random.default_rng(1).standard_normal(16))
        grid = LambdaGrid(np.array([1e-3, 1e-2]), 16)
        with pytest.raises(InputError, match="centered"):
            mp_consistency_curves(eig, y, grid)

    def test_rows_sorted_by_kappa(self):
        eig = _sampled_eig(0, 16, 24)
        y = center_labels(LabelMatrix(np.random.default_rng(1).standard_normal(16)))
        grid = LambdaGrid(np.array([1e-3, 1e-2, 1e-1, 1.0]), 16)
        out = mp_consistency_curves(eig, y, grid)
        assert out.shape == (4, 2)
        assert np.all(np.diff(out[:, 0]) > 0)

    def test_first_column_is_hat_kappa(self):
        eig = _sampled_eig(5, 20, 30)
        y = center_labels(LabelMatrix(np.random.default_rng(6).standard_normal(20)))
        grid = LambdaGrid(np.array([1e-2, 1e-1]), 20)
        out = mp_consistency_curves(eig, y, grid)
        expect = sorted(hat_kappa(eig.eigenvalues, lam) for lam in grid.resolved)
        assert out[:, 0] == pytest.approx(expect, rel=1e-14)


class TestCurveCoincidence:
    def test_identical_curves_score_zero(self):
        a = np.array([[1.0, 0.5], [2.0, 0.25]])
        assert curve_coincidence([a, a.copy()]) == 0.0

    def test_uniform_shift_analytic(self):
        # sup gap 0.1 against sup level 0.6 on a shared kappa grid.
        a = np.array([[1.0, 0.5], [2.0, 0.25]])
        b = a.copy()
        b[:, 1] += 0.1
        assert curve_coincidence([a, b]) == pytest.approx(1.0 / 6.0, rel=1e-12)

    def test_single_curve_rejected(self):
        a = np.array([[1.0, 0.5], [2.0, 0.25]])
        with pytest.raises(InputError):
            curve_coincidence([a])

    def test_disjoint_supports_rejected(self):
        a = np.array([[1.0, 0.5], [2.0, 0.25]])
        c = np.array([[3.0, 0.1], [4.0, 0.05]])
        with pytest.raises(InputError, match="overlap"):
            curve_coincidence([a, c])
