"""Constraint-imposition routes and their mutual agreement.

The multiplier weight gets its own independent oracle here: a
Gauss-Hermite integration of the discrete multiplier chain (tridiagonal
increment form diagonalized, nodes mapped through the eigenbasis),
cross-checked once against plain trapezoid quadrature, then used to
grade the closed form over random draws.
"""

import math

import numpy as np
import pytest

from cohpath.constraints import (
    ConstraintSpec,
    ExtendedPath,
    HcrValue,
    ReducedSystem,
    constrained_state_moments,
    dirac_physical_matrix_element,
    equivalence_report,
    extended_lattice_propagator,
    lambda_effective_weight,
    projected_lattice_propagator,
    reduced_symbol_Hcr,
    saddle_concentration_check,
)
from cohpath.errors import DimensionMismatchError, PreconditionError
from cohpath.lattice import LatticeConfig
from cohpath.operators import (
    PolynomialOperator,
    harmonic_oscillator,
    identity,
    momentum,
    position,
)
from cohpath.oracle import coherent_fock_vector, fock_propagator, operator_fock_matrix
from cohpath.quadrature import AxisSpec, QuadratureGrid
from cohpath.states import FiducialSpec, Label, ModeSpace, overlap

_HBAR_LADDER = (1.0, 0.5, 0.25)
_T = 0.2
_TIMES = np.linspace(0.0, 0.6, 5)  # three interior multiplier slices


def _mixed_system(hbar=1.0):
    """One constrained mode plus one oscillator mode, endpoints on the surface."""
    sp = ModeSpace(1, 1, hbar)
    a = Label(sp, p=[0.0], q=[0.3], z=[[-0.2, 0.5]])
    b = Label(sp, p=[0.0], q=[-0.1], z=[[0.4, -0.3]])
    return sp, a, b


def _reduced_labels(hbar=1.0):
    zsp = ModeSpace(0, 1, hbar)
    return Label(zsp, z=[[-0.2, 0.5]]), Label(zsp, z=[[0.4, -0.3]])


def _lambda_weight_brute(p, lam0, lam1, nu, times, hbar, deg=48):
    """Gauss-Hermite integration of the discrete multiplier chain.

    The increment quadratic form over the interior multipliers is the
    tridiagonal A/(nu eps); diagonalizing it maps the integral onto a
    product of standard Gaussians, which hermegauss handles exactly for
    the linear phase.  Includes every increment normalization, so the
    result carries the endpoint heat-kernel prefactor that
    :func:`lambda_effective_weight` splits off.
    """
    n = len(times) - 2
    eps = times[1] - times[0]
    A = (
        np.diag(2.0 * np.ones(n))
        + np.diag(-np.ones(n - 1), 1)
        + np.diag(-np.ones(n - 1), -1)
    ) / (nu * eps)
    rhs = np.zeros(n)
    rhs[0] = lam0 / (nu * eps)
    rhs[-1] = lam1 / (nu * eps)
    mu = np.linalg.solve(A, rhs)
    dvals, U = np.linalg.eigh(A)
    y, wts = np.polynomial.hermite_e.hermegauss(deg)
    grids = np.meshgrid(*([y] * n), indexing="ij")
    Y = np.stack(grids, axis=-1).reshape(-1, n)
    W = np.ones(1)
    for _ in range(n):
        W = np.multiply.outer(W, wts)
    W = W.reshape(-1)
    lam = mu[None, :] + Y @ (U * (1.0 / np.sqrt(dvals))[None, :]).T
    phase = np.exp(-1j / hbar * lam @ np.asarray(p, dtype=float))
    integral = np.sum(W * phase)
    const = math.exp(-(lam0**2 + lam1**2) / (2 * nu * eps) + 0.5 * mu @ A @ mu)
    jac = np.prod(1.0 / np.sqrt(dvals))
    norm = (2 * math.pi * nu * eps) ** (-(n + 1) / 2)
    return norm * const * jac * integral


class TestConstraintSpec:
    def test_for_space_picks_constrained_sector(self):
        sp = ModeSpace(2, 1)
        spec = ConstraintSpec.for_space(sp)
        assert spec.constrained_mode_indices == (0, 1)
        spec.validate(sp)

    def test_mismatched_spec_rejected(self):
        with pytest.raises(DimensionMismatchError):
            ConstraintSpec((1,)).validate(ModeSpace(1, 1))

    def test_index_validation(self):
        with pytest.raises(PreconditionError):
            ConstraintSpec((0, 0))
        with pytest.raises(PreconditionError):
            ConstraintSpec((-1,))

    def test_extended_path_shape_checks(self):
        coords = np.zeros((4, 2, 2))
        good = ExtendedPath(coords, np.zeros((4, 1)))
        assert good.n_slices == 2
        with pytest.raises(DimensionMismatchError):
            ExtendedPath(coords, np.zeros((3, 1)))


class TestConstrainedMoments:
    @pytest.mark.parametrize("hbar", _HBAR_LADDER)
    def test_fiducial_values(self, hbar):
        sp = ModeSpace(1, 1, hbar)
        z = [[0.3, -0.8]]
        assert constrained_state_moments(sp, [0.7], z, 1) == pytest.approx(0.0, abs=1e-14)
        assert constrained_state_moments(sp, [0.7], z, 3) == pytest.approx(0.0, abs=1e-14)
        assert constrained_state_moments(sp, [0.7], z, 2) == pytest.approx(
            hbar / 2, abs=1e-13
        )
        assert constrained_state_moments(sp, [0.7], z, 4) == pytest.approx(
            3 * (hbar / 2) ** 2, abs=1e-12
        )

    def test_gauge_position_does_not_enter(self):
        sp = ModeSpace(1, 1)
        z = [[0.3, -0.8]]
        near = constrained_state_moments(sp, [0.7], z, 2)
        far = constrained_state_moments(sp, [-3.0], z, 2)
        assert near == pytest.approx(far, abs=1e-14)

    def test_width_sets_the_scale(self):
        sp = ModeSpace(1, 1)
        fid = FiducialSpec([2.0, 1.0])
        got = constrained_state_moments(sp, [0.0], [[0.0, 0.0]], 2, fiducial=fid)
        assert got == pytest.approx(0.5 / 4.0)

    def test_only_constrained_modes_allowed(self):
        sp = ModeSpace(1, 1)
        with pytest.raises(PreconditionError):
            constrained_state_moments(sp, [0.0], [[0.0, 0.0]], 2, mode=1)
        with pytest.raises(PreconditionError):
            constrained_state_moments(sp, [0.0], [[0.0, 0.0]], -1)


class TestLambdaWeight:
    def test_zero_momentum_leaves_endpoint_gaussian(self):
        w = lambda_effective_weight(np.zeros((3, 1)), (0.4, -0.2), 2.0, _TIMES)
        assert w == pytest.approx(math.exp(-0.36 / (2 * 2.0 * 0.6)), abs=1e-15)

    def test_equal_endpoints_normalize_to_one(self):
        w = lambda_effective_weight(np.zeros((3, 1)), (0.9, 0.9), 5.0, _TIMES)
        assert w == pytest.approx(1.0, abs=1e-15)

    def test_single_momentum_closed_form(self):
        p = np.zeros((3, 1))
        p[1, 0] = 0.7
        w = lambda_effective_weight(p, (0.0, 0.0), 2.0, _TIMES, hbar=0.5)
        tj = _TIMES[2]
        cjj = 2.0 * (_TIMES[-1] - tj) * tj / _TIMES[-1]
        assert w == pytest.approx(math.exp(-(0.7**2) * cjj / (2 * 0.25)), abs=1e-14)

    def test_matches_gauss_hermite_oracle(self):
        rng = np.random.default_rng(3)
        pref = lambda nu: (2 * math.pi * nu * 0.6) ** (-0.5)
        for _ in range(10):
            p = rng.normal(size=3) * 0.8
            lam0, lam1 = rng.normal(size=2)
            nu = float(rng.uniform(0.5, 3.0))
            hb = float(rng.choice([1.0, 0.5]))
            closed = lambda_effective_weight(p, (lam0, lam1), nu, _TIMES, hbar=hb)
            brute = _lambda_weight_brute(p, lam0, lam1, nu, _TIMES, hb)
            assert abs(complex(closed) * pref(nu) - brute) < 1e-12

    def test_oracle_against_trapezoid(self):
        # ground the GH oracle itself once before trusting it above
        p = np.array([0.5, -0.3, 0.9])
        lam0, lam1, nu = 0.2, -0.4, 1.5
        grid = QuadratureGrid([AxisSpec(-9.0, 9.0, 161)] * 3)
        nodes = grid.nodes()
        eps = _TIMES[1] - _TIMES[0]
        lam_full = np.concatenate(
            [
                np.full((nodes.shape[0], 1), lam0),
                nodes,
                np.full((nodes.shape[0], 1), lam1),
            ],
            axis=1,
        )
        incr = np.diff(lam_full, axis=1)
        dens = (2 * math.pi * nu * eps) ** (-2.0) * np.exp(
            -np.sum(incr**2, axis=1) / (2 * nu * eps)
        )
        trap = grid.integrate(dens * np.exp(-1j * nodes @ p))
        gh = _lambda_weight_brute(p, lam0, lam1, nu, _TIMES, 1.0)
        assert abs(trap - gh) < 1e-10

    def test_argument_validation(self):
        with pytest.raises(PreconditionError):
            lambda_effective_weight(np.zeros((3, 1)), (0.0, 0.0), -1.0, _TIMES)
        with pytest.raises(PreconditionError):
            lambda_effective_weight(
                np.zeros((3, 1)), (0.0, 0.0), 1.0, [0.0, 0.1, 0.3, 0.45, 0.6]
            )
        with pytest.raises(DimensionMismatchError):
            lambda_effective_weight(np.zeros((2, 1)), (0.0, 0.0), 1.0, _TIMES)


class TestSaddleConcentration:
    def test_widths_fall_as_inverse_sqrt_nu(self):
        rows = saddle_concentration_check([1.0, 4.0, 16.0], LatticeConfig(3, 0.6, "lower"))
        ratios = [row["width_ratio_to_first"] for row in rows]
        assert np.allclose(ratios[0], 1.0)
        assert np.allclose(ratios[1], 0.5)
        assert np.allclose(ratios[2], 0.25)

    def test_large_nu_kills_nonzero_momentum(self):
        w = lambda_effective_weight([[0.1], [0.0], [0.0]], (0.0, 0.0), 1e6, _TIMES)
        assert abs(w) < 1e-100

    def test_ladder_validation(self):
        with pytest.raises(PreconditionError):
            saddle_concentration_check([], LatticeConfig(3, 0.6))
        with pytest.raises(PreconditionError):
            saddle_concentration_check([1.0, -2.0], LatticeConfig(3, 0.6))


class TestReducedSymbol:
    @pytest.mark.parametrize("hbar", _HBAR_LADDER)
    def test_kinetic_gauge_term_is_half_hbar_f(self, hbar):
        # (1 + Q^2) P^2 on the surface: value = (hbar/2)(1 + q^2) - hbar^2/4
        sp = ModeSpace(1, 1, hbar)
        Q, P = position(sp, 0), momentum(sp, 0)
        op = (identity(2) + Q * Q) * (P * P)
        q = 0.7
        hcr = reduced_symbol_Hcr(op, sp, [q], [[0.3, -0.8]])
        residual = abs(hcr.value - hbar / 2 * (1 + q**2))
        assert residual == pytest.approx(hbar**2 / 4, abs=1e-12)

    def test_value_matches_fock_expectation(self):
        sp = ModeSpace(1, 1)
        Q, P = position(sp, 0), momentum(sp, 0)
        op = (identity(2) + Q * Q) * (P * P)
        hcr = reduced_symbol_Hcr(op, sp, [0.7], [[0.3, -0.8]])
        lab = Label(sp, p=[0.0], q=[0.7], z=[[0.3, -0.8]])
        vec = coherent_fock_vector(lab, 50)
        fock_val = np.conj(vec) @ operator_fock_matrix(op, 50) @ vec
        assert abs(hcr.value - fock_val) < 1e-10

    def test_reduced_only_operator_has_no_gauge_term(self):
        sp = ModeSpace(1, 1)
        hcr = reduced_symbol_Hcr(harmonic_oscillator(sp, 1), sp, [0.7], [[0.3, -0.8]])
        assert hcr.gauge_term == 0
        assert hcr.value == hcr.h0

    def test_constrained_operator_is_all_gauge(self):
        sp = ModeSpace(1, 1)
        hcr = reduced_symbol_Hcr(position(sp, 0), sp, [0.7], [[0.3, -0.8]])
        assert hcr.h0 == 0
        assert hcr.value == hcr.gauge_term == pytest.approx(0.7)

    def test_residual_scales_quadratically_in_hbar(self):
        residuals = []
        for hbar in _HBAR_LADDER:
            sp = ModeSpace(1, 1, hbar)
            Q, P = position(sp, 0), momentum(sp, 0)
            op = (identity(2) + Q * Q) * (P * P)
            hcr = reduced_symbol_Hcr(op, sp, [0.7], [[0.3, -0.8]])
            residuals.append(abs(hcr.value - hbar / 2 * (1 + 0.49)))
        slope, _ = np.polyfit(np.log(_HBAR_LADDER), np.log(residuals), 1)
        assert slope == pytest.approx(2.0, abs=1e-10)


class TestProjectedPropagator:
    def test_pure_drift_is_exact_phase(self):
        # F(Q) = 1 kinetic term: lower route gives e^{i eps/2} per link
        sp, a, b = _mixed_system()
        drift = momentum(sp, 0) ** 2
        for n_slices in (4, 64):
            res = projected_lattice_propagator(
                drift, a, b, LatticeConfig(n_slices, _T, "lower")
            )
            assert abs(res.amplitude - np.exp(1j * _T / 2)) < 1e-13

    @pytest.mark.parametrize("n_slices, tol", [(2048, 2e-4), (16384, 2e-5)])
    def test_separable_oscillator_reaches_reduced_oracle(self, n_slices, tol):
        sp, a, b = _mixed_system()
        ho = harmonic_oscillator(sp, 1)
        z_bra, z_ket = _reduced_labels()
        red = ReducedSystem.from_full(ho, sp)
        target = fock_propagator(red.hamiltonian, z_bra, z_ket, _T).amplitude / overlap(
            z_bra, z_ket
        )
        res = projected_lattice_propagator(ho, a, b, LatticeConfig(n_slices, _T, "lower"))
        assert abs(res.amplitude - target) < tol

    def test_grid_march_matches_chain_single_axis(self):
        sp = ModeSpace(1, 0)
        a = Label(sp, p=[0.0], q=[0.4])
        b = Label(sp, p=[0.0], q=[-0.2])
        drift = momentum(sp, 0) ** 2
        cfg = LatticeConfig(8, _T, "lower")
        grid = QuadratureGrid([AxisSpec(-8.0, 8.0, 241)])
        rq = projected_lattice_propagator(drift, a, b, cfg, grid=grid)
        rg = projected_lattice_propagator(drift, a, b, cfg)
        assert abs(rq.amplitude - rg.amplitude) < 1e-12
        assert rq.error_estimate < 1e-8

    def test_grid_march_matches_chain_mixed_space(self):
        sp, a, b = _mixed_system()
        ho = harmonic_oscillator(sp, 1)
        cfg = LatticeConfig(1, _T, "lower")
        grid = QuadratureGrid([AxisSpec(-5.2, 5.2, 27)] * 3)
        rq = projected_lattice_propagator(ho, a, b, cfg, grid=grid)
        rg = projected_lattice_propagator(ho, a, b, cfg)
        assert abs(rq.amplitude - rg.amplitude) < 5e-6

    def test_grid_march_chunks_long_slices(self):
        # 2049 nodes forces the interior kernel application to split into
        # row chunks; the result must not depend on that
        sp = ModeSpace(1, 0)
        a = Label(sp, p=[0.0], q=[0.4])
        b = Label(sp, p=[0.0], q=[-0.2])
        drift = momentum(sp, 0) ** 2
        cfg = LatticeConfig(4, _T, "lower")
        grid = QuadratureGrid([AxisSpec(-8.0, 8.0, 2049)])
        rq = projected_lattice_propagator(drift, a, b, cfg, grid=grid)
        rg = projected_lattice_propagator(drift, a, b, cfg)
        assert abs(rq.amplitude - rg.amplitude) < 1e-12

    def test_endpoints_must_sit_on_surface(self):
        sp, a, _ = _mixed_system()
        off = Label(sp, p=[0.3], q=[0.0], z=[[0.0, 0.0]])
        with pytest.raises(PreconditionError):
            projected_lattice_propagator(
                harmonic_oscillator(sp, 1), a, off, LatticeConfig(4, _T)
            )

    def test_grid_arity_checked(self):
        sp, a, b = _mixed_system()
        grid = QuadratureGrid([AxisSpec(-5.0, 5.0, 21)] * 4)
        with pytest.raises(DimensionMismatchError):
            projected_lattice_propagator(
                harmonic_oscillator(sp, 1), a, b, LatticeConfig(2, _T), grid=grid
            )

    def test_unnormalized_run_keeps_raw_log(self):
        sp, a, b = _mixed_system()
        ho = harmonic_oscillator(sp, 1)
        cfg = LatticeConfig(16, _T, "lower")
        norm = projected_lattice_propagator(ho, a, b, cfg)
        raw = projected_lattice_propagator(ho, a, b, cfg, normalize=False)
        assert norm.details["normalized"] is True
        assert raw.details["normalized"] is False
        recombined = np.exp(raw.details["log_raw"] - norm.details["log_normalization"])
        assert abs(complex(recombined) - norm.amplitude) < 1e-12


class TestExtendedPropagator:
    def test_infinite_nu_is_the_projected_chain(self):
        sp, a, b = _mixed_system()
        ho = harmonic_oscillator(sp, 1)
        cfg = LatticeConfig(12, _T, "lower")
        proj = projected_lattice_propagator(ho, a, b, cfg)
        ext = extended_lattice_propagator(ho, a, b, cfg, math.inf)
        assert abs(ext.amplitude - proj.amplitude) < 1e-12
        assert ext.details["pinned_limit"] is True

    def test_nu_ladder_trends_to_the_limit(self):
        sp, a, b = _mixed_system()
        ho = harmonic_oscillator(sp, 1)
        cfg = LatticeConfig(12, _T, "lower")
        anchor = extended_lattice_propagator(ho, a, b, cfg, math.inf).amplitude
        gaps = [
            abs(extended_lattice_propagator(ho, a, b, cfg, nu).amplitude - anchor)
            for nu in (5.0, 20.0, 80.0)
        ]
        assert gaps[0] > gaps[1] > gaps[2]

    def test_multiplier_endpoint_value_drops_out(self):
        sp, a, b = _mixed_system()
        ho = harmonic_oscillator(sp, 1)
        cfg = LatticeConfig(12, _T, "lower")
        amps = [
            extended_lattice_propagator(ho, a, b, cfg, 20.0, lambda_common=c).amplitude
            for c in (-1.0, 0.0, 1.0)
        ]
        assert max(abs(v - amps[1]) for v in amps) < 1e-12

    def test_argument_validation(self):
        sp, a, b = _mixed_system()
        ho = harmonic_oscillator(sp, 1)
        with pytest.raises(PreconditionError):
            extended_lattice_propagator(ho, a, b, LatticeConfig(4, _T), 0.0)
        with pytest.raises(PreconditionError):
            extended_lattice_propagator(
                position(sp, 1) ** 4, a, b, LatticeConfig(4, _T), 5.0
            )


class TestDiracRoute:
    def test_first_class_element_factorizes(self):
        sp, _, _ = _mixed_system()
        ho = harmonic_oscillator(sp, 1)
        z_bra, z_ket = _reduced_labels()
        red = ReducedSystem.from_full(ho, sp)
        target = fock_propagator(red.hamiltonian, z_bra, z_ket, 0.3).amplitude
        for box_length in (1.0, 10.0, 100.0):
            res = dirac_physical_matrix_element(ho, sp, z_bra, z_ket, 0.3, box_length)
            assert res.first_class
            assert abs(res.amplitude - target) < 1e-10

    def test_gauge_breaking_term_is_flagged_and_box_dependent(self):
        sp, _, _ = _mixed_system()
        bad = harmonic_oscillator(sp, 1) + position(sp, 0) * 0.5
        z_bra, z_ket = _reduced_labels()
        r5 = dirac_physical_matrix_element(bad, sp, z_bra, z_ket, 0.3, 5.0)
        r10 = dirac_physical_matrix_element(bad, sp, z_bra, z_ket, 0.3, 10.0)
        assert not r5.first_class
        assert max(r5.commutator_norms) > 0.1
        assert abs(r5.amplitude - r10.amplitude) > 1e-3

    def test_argument_validation(self):
        sp, _, _ = _mixed_system()
        ho = harmonic_oscillator(sp, 1)
        z_bra, z_ket = _reduced_labels()
        with pytest.raises(PreconditionError):
            dirac_physical_matrix_element(ho, sp, z_bra, z_ket, 0.3, -1.0)
        with pytest.raises(PreconditionError):
            dirac_physical_matrix_element(ho, sp, z_bra, z_ket, -0.3, 1.0)
        wrong = Label(ModeSpace(0, 2), z=[[0.0, 0.0], [0.0, 0.0]])
        with pytest.raises(DimensionMismatchError):
            dirac_physical_matrix_element(ho, sp, wrong, wrong, 0.3, 1.0)


class TestReducedSystem:
    def test_extracts_reduced_sector(self):
        sp, _, _ = _mixed_system()
        ho = harmonic_oscillator(sp, 1)
        red = ReducedSystem.from_full(ho, sp)
        assert red.space.n_modes == 1
        assert red.hamiltonian == harmonic_oscillator(red.space, 0)

    def test_constrained_ladder_terms_drop_but_scalars_persist(self):
        # P^2 on the constrained mode normal-orders to ladder terms plus
        # the scalar hbar/(2 w^2); the ladder part is gauge, the scalar
        # is invariant and rides into the reduced Hamiltonian.
        sp, _, _ = _mixed_system()
        ho = harmonic_oscillator(sp, 1)
        red = ReducedSystem.from_full(ho + momentum(sp, 0) ** 2, sp)
        want = harmonic_oscillator(red.space, 0) + 0.5
        assert (red.hamiltonian - want).norm1() < 1e-12

    def test_sector_coupling_rejected(self):
        sp, _, _ = _mixed_system()
        with pytest.raises(PreconditionError):
            ReducedSystem.from_full(position(sp, 0) * position(sp, 1), sp)


@pytest.fixture(scope="module")
def report():
    sp, _, _ = _mixed_system()
    z_bra, z_ket = _reduced_labels()
    return equivalence_report(
        harmonic_oscillator(sp, 1), sp, [0.3], [-0.1], z_bra, z_ket, _T
    )


class TestEquivalenceReport:
    def test_all_routes_succeed(self, report):
        assert set(report.routes) == {"reduced_oracle", "projected", "dirac", "extended"}
        assert all(r.ok for r in report.routes.values())

    def test_core_routes_agree(self, report):
        core = {"projected", "dirac", "reduced_oracle"}
        core_devs = [
            v
            for k, v in report.deviations.items()
            if set(k.split("|")) <= core
        ]
        assert max(core_devs) < 1e-4

    def test_extended_route_within_budget(self, report):
        dev = abs(
            report.routes["extended"].amplitude
            - report.routes["reduced_oracle"].amplitude
        )
        assert dev <= 3 * report.routes["extended"].error_estimate

    def test_trend_monotone(self, report):
        gaps = [row["gap_to_limit"] for row in report.trend]
        assert all(row["monotone"] for row in report.trend)
        assert gaps[-1] < gaps[0]

    def test_invariant_operator_reports_no_gauge_term(self, report):
        assert report.gauge_term == 0
        assert not report.gauge_breaking

    def test_json_round_trip_fields(self, report):
        doc = report.to_json_dict()
        assert set(doc["routes"]) == set(report.routes)
        assert doc["max_deviation"] == max(report.deviations.values())
        assert doc["gauge_breaking"] is False

    def test_route_failures_stay_isolated(self):
        sp, _, _ = _mixed_system()
        z_bra, z_ket = _reduced_labels()
        coupled = position(sp, 0) * position(sp, 1)
        rep = equivalence_report(coupled, sp, [0.3], [-0.1], z_bra, z_ket, _T)
        oracle = rep.routes["reduced_oracle"]
        assert not oracle.ok
        assert oracle.message
        assert rep.routes["projected"].ok
        assert rep.gauge_breaking
