"""Heat kernels, pinned-bridge sampling, and the nu-regularized
propagator estimators.

Statistical assertions are budgeted in standard errors of the run that
produced them (4-5 sigma), with seeds fixed, so failures mean the
sampler changed rather than bad luck.
"""

import math

import numpy as np
import pytest

from cohpath.errors import DimensionMismatchError, PreconditionError
from cohpath.lattice import LatticeConfig
from cohpath.operators import PolynomialOperator, harmonic_oscillator
from cohpath.quadrature import AxisSpec, QuadratureGrid
from cohpath.states import Label, ModeSpace
from cohpath.wiener import (
    BridgePath,
    MetricSpec,
    WienerConfig,
    brownian_bridge_covariance,
    chapman_kolmogorov_residual,
    heat_kernel,
    regularized_propagator_mc,
    regularized_propagator_quadrature,
    sample_pinned_bridge,
    sample_pinned_bridges,
)

_NU = 0.7
_TIMES = np.array([0.0, 0.25, 0.5, 0.75, 1.0])


class TestHeatKernel:
    def test_density_formula(self):
        # unit weight: N(0, nu t) density at the displacement
        val = heat_kernel([0.0], [0.3], 0.5, 2.0)
        var = 2.0 * 0.5
        assert val == pytest.approx(
            math.exp(-0.09 / (2 * var)) / math.sqrt(2 * math.pi * var)
        )

    def test_metric_weight_stiffens_axis(self):
        # weight w divides the variance
        stiff = heat_kernel([0.0], [0.0], 1.0, 1.0, MetricSpec([4.0]))
        assert stiff == pytest.approx(math.sqrt(4.0 / (2 * math.pi)))

    def test_normalizes_to_one(self):
        grid = QuadratureGrid([AxisSpec(-10.0, 10.0, 401)])
        total = np.sum(
            [heat_kernel([0.0], [x], 0.8, 1.0) for x in grid.axes[0].nodes()]
            * grid.weights()
        )
        assert total == pytest.approx(1.0, abs=1e-10)

    def test_argument_validation(self):
        with pytest.raises(PreconditionError):
            heat_kernel([0.0], [1.0], 0.0, 1.0)
        with pytest.raises(PreconditionError):
            heat_kernel([0.0], [1.0], 1.0, -1.0)
        with pytest.raises(DimensionMismatchError):
            heat_kernel([0.0], [1.0, 2.0], 1.0, 1.0)

    def test_chapman_kolmogorov(self):
        grid = QuadratureGrid([AxisSpec(-12.0, 12.0, 481)])
        res, bnd = chapman_kolmogorov_residual([0.2], [-0.4], 0.3, 0.5, 1.0, grid)
        assert res < 1e-10
        assert bnd < 1e-12

    def test_chapman_kolmogorov_narrow_grid_tattles(self):
        grid = QuadratureGrid([AxisSpec(-1.0, 1.0, 41)])
        res, bnd = chapman_kolmogorov_residual([0.2], [-0.4], 0.3, 0.5, 1.0, grid)
        assert res > 1e-3
        assert bnd > 1e-4

    def test_chapman_kolmogorov_grid_arity(self):
        grid = QuadratureGrid([AxisSpec(-1.0, 1.0, 11)] * 2)
        with pytest.raises(DimensionMismatchError):
            chapman_kolmogorov_residual([0.2], [-0.4], 0.3, 0.5, 1.0, grid)


class TestBridgeCovariance:
    def test_closed_form(self):
        C = brownian_bridge_covariance([0.25, 0.75], 0.0, 1.0, _NU)
        # nu (T - t_max)(t_min)/T
        assert C[0, 0] == pytest.approx(_NU * 0.75 * 0.25)
        assert C[0, 1] == pytest.approx(_NU * 0.25 * 0.25)
        assert C[1, 1] == pytest.approx(_NU * 0.25 * 0.75)
        assert np.allclose(C, C.T)
        assert np.all(np.linalg.eigvalsh(C) > 0)

    def test_interior_times_validated(self):
        with pytest.raises(PreconditionError):
            brownian_bridge_covariance([0.0, 0.5], 0.0, 1.0, _NU)
        with pytest.raises(PreconditionError):
            brownian_bridge_covariance([0.5, 1.0], 0.0, 1.0, _NU)


class TestBridgeSampling:
    def test_endpoints_pinned_exactly(self):
        paths = sample_pinned_bridges(11, 50, [1.5, -0.5], [0.2, 0.9], _TIMES, _NU)
        assert paths.shape == (50, 5, 2)
        assert np.all(paths[:, 0] == [1.5, -0.5])
        assert np.all(paths[:, -1] == [0.2, 0.9])

    def test_reruns_are_bitwise_identical(self):
        kw = dict(a=[0.0], b=[1.0], times=_TIMES, nu=_NU)
        first = sample_pinned_bridges(42, 20, **kw)
        second = sample_pinned_bridges(42, 20, **kw)
        assert np.array_equal(first, second)

    def test_samples_are_independently_addressable(self):
        kw = dict(a=[0.0], b=[1.0], times=_TIMES, nu=_NU)
        batch = sample_pinned_bridges(42, 3, **kw)
        solo = sample_pinned_bridges(42, 1, first_index=2, **kw)
        assert np.array_equal(batch[2], solo[0])

    def test_tags_decouple_streams(self):
        kw = dict(a=[0.0], b=[1.0], times=_TIMES, nu=_NU)
        main = sample_pinned_bridges(42, 5, tag=0, **kw)
        cal = sample_pinned_bridges(42, 5, tag=1, **kw)
        assert not np.array_equal(main[:, 1:-1], cal[:, 1:-1])

    def test_single_bridge_wrapper(self):
        path = sample_pinned_bridge(7, [0.0], [1.0], _TIMES, _NU, index=4)
        assert isinstance(path, BridgePath)
        batch = sample_pinned_bridges(7, 5, [0.0], [1.0], _TIMES, _NU)
        assert np.array_equal(path.values, batch[4])

    def test_mean_is_the_pinning_line(self):
        paths = sample_pinned_bridges(7, 40000, [1.0], [-1.0], _TIMES, _NU)
        line = 1.0 - 2.0 * _TIMES
        # bridge sd at midtime ~ 0.36; 4 SE budget at this sample count
        assert np.max(np.abs(paths[:, :, 0].mean(axis=0) - line)) < 8e-3

    def test_covariance_matches_closed_form(self):
        paths = sample_pinned_bridges(123, 40000, [0.0], [0.0], _TIMES, _NU)
        emp = np.cov(paths[:, 1:-1, 0].T)
        want = brownian_bridge_covariance(_TIMES[1:-1], 0.0, 1.0, _NU)
        assert np.max(np.abs(emp - want)) < 5e-3

    def test_metric_weight_scales_variance(self):
        heavy = sample_pinned_bridges(5, 20000, [0.0], [0.0], _TIMES, _NU, MetricSpec([9.0]))
        var = heavy[:, 2, 0].var()
        want = _NU * 0.5 * 0.5 / 9.0
        assert var == pytest.approx(want, rel=0.1)

    def test_time_grid_validation(self):
        with pytest.raises(PreconditionError):
            sample_pinned_bridges(1, 2, [0.0], [1.0], [0.0, 0.5, 0.5, 1.0], _NU)
        with pytest.raises(PreconditionError):
            sample_pinned_bridges(1, 2, [0.0], [1.0], [0.0], _NU)
        with pytest.raises(DimensionMismatchError):
            sample_pinned_bridges(1, 2, [0.0], [1.0, 2.0], _TIMES, _NU)


class TestWienerConfig:
    def test_validation(self):
        lat = LatticeConfig(1, 0.5)
        with pytest.raises(PreconditionError):
            WienerConfig(0.0, 100, 1, lat)
        with pytest.raises(PreconditionError):
            WienerConfig(1.0, 1, 1, lat)
        with pytest.raises(PreconditionError):
            WienerConfig(1.0, 100, 2**64, lat)


class TestRegularizedPropagator:
    def _endpoints(self):
        s = ModeSpace(0, 1)
        a = Label.from_coords(s, [[-0.2, 0.5]])
        b = Label.from_coords(s, [[0.4, -0.3]])
        return s, a, b

    def test_mc_is_deterministic(self):
        s, a, b = self._endpoints()
        op = harmonic_oscillator(s, 0)
        cfg = WienerConfig(2.0, 500, 2026, LatticeConfig(1, 0.6, "upper"))
        r1 = regularized_propagator_mc(op, a, b, cfg)
        r2 = regularized_propagator_mc(op, a, b, cfg)
        assert r1.amplitude == r2.amplitude
        assert r1.error_estimate == r2.error_estimate

    def test_zero_operator_normalizes_to_one(self):
        s, a, b = self._endpoints()
        zero = PolynomialOperator(1, {})
        cfg = WienerConfig(1.0, 4000, 99, LatticeConfig(2, 0.5, "lower"))
        res = regularized_propagator_mc(zero, b, b, cfg)
        assert abs(res.amplitude - 1.0) < 5 * res.error_estimate

    def test_mc_matches_quadrature_target(self):
        s, a, b = self._endpoints()
        op = harmonic_oscillator(s, 0)
        lat = LatticeConfig(1, 0.6, "upper")
        grid = QuadratureGrid([AxisSpec(-6.0, 6.0, 121)] * 2)
        target = regularized_propagator_quadrature(op, a, b, 2.0, lat, grid)
        assert target.error_estimate < 1e-8
        mc = regularized_propagator_mc(op, a, b, WienerConfig(2.0, 40000, 2026, lat))
        assert abs(mc.amplitude - target.amplitude) < 4 * mc.error_estimate

    def test_error_estimate_shrinks_with_samples(self):
        s, a, b = self._endpoints()
        op = harmonic_oscillator(s, 0)
        lat = LatticeConfig(1, 0.6, "upper")
        small = regularized_propagator_mc(op, a, b, WienerConfig(2.0, 500, 7, lat))
        big = regularized_propagator_mc(op, a, b, WienerConfig(2.0, 8000, 7, lat))
        assert big.error_estimate < small.error_estimate / 2

    def test_details_record_run(self):
        s, a, b = self._endpoints()
        op = harmonic_oscillator(s, 0)
        cfg = WienerConfig(2.0, 500, 11, LatticeConfig(3, 0.6, "lower"))
        res = regularized_propagator_mc(op, a, b, cfg)
        assert res.method == "wiener_mc"
        assert res.details["nu"] == 2.0
        assert res.details["seed"] == 11
        assert res.details["n_slices"] == 3
        assert res.details["route"] == "lower"

    def test_mc_needs_positive_time(self):
        s, a, b = self._endpoints()
        op = harmonic_oscillator(s, 0)
        cfg = WienerConfig(1.0, 100, 1, LatticeConfig(1, 0.0))
        with pytest.raises(PreconditionError):
            regularized_propagator_mc(op, a, b, cfg)

    def test_quadrature_normalization_is_exact_for_zero_op(self):
        s, a, b = self._endpoints()
        zero = PolynomialOperator(1, {})
        lat = LatticeConfig(1, 0.5, "lower")
        grid = QuadratureGrid([AxisSpec(-6.0, 6.0, 81)] * 2)
        res = regularized_propagator_quadrature(zero, b, b, 1.0, lat, grid)
        assert res.amplitude == pytest.approx(1.0, abs=1e-14)

    def test_quadrature_grid_arity(self):
        s, a, b = self._endpoints()
        op = harmonic_oscillator(s, 0)
        grid = QuadratureGrid([AxisSpec(-6.0, 6.0, 41)] * 2)
        with pytest.raises(DimensionMismatchError):
            regularized_propagator_quadrature(op, a, b, 1.0, LatticeConfig(2, 0.5), grid)
