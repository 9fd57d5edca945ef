"""Coherent labels, overlaps, and the resolution of the identity."""

import math

import numpy as np
import pytest

from cohpath.errors import DimensionMismatchError, PreconditionError
from cohpath.quadrature import AxisSpec, QuadratureGrid, tree_sum
from cohpath.states import (
    FiducialSpec,
    Label,
    ModeSpace,
    PhaseSpaceMeasure,
    coherent_wavefunction,
    fiducial_moment,
    log_overlap,
    overlap,
    resolution_residual,
)

from conftest import random_label


def _position_grid(lo=-9.0, hi=9.0, num=361):
    return AxisSpec(lo, hi, num)


class TestLabel:
    def test_sector_layout(self, mode_1c1r):
        lab = Label(mode_1c1r, p=[0.1], q=[0.2], z=[[0.3, 0.4]])
        assert lab.coords.shape == (2, 2)
        np.testing.assert_allclose(lab.flat(), [0.1, 0.2, 0.3, 0.4])
        np.testing.assert_allclose(lab.p, [0.1])
        np.testing.assert_allclose(lab.z, [[0.3, 0.4]])

    def test_from_coords_round_trip(self, mode_1c1r, rng):
        lab = random_label(mode_1c1r, rng)
        again = Label.from_coords(mode_1c1r, lab.coords)
        np.testing.assert_array_equal(again.coords, lab.coords)

    def test_coords_are_frozen(self, mode_1r):
        lab = Label(mode_1r, z=[[0.0, 0.0]])
        with pytest.raises(ValueError):
            lab.coords[0, 0] = 1.0

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"p": [0.1], "q": [], "z": [[0, 0]]},
            {"p": [0.1], "q": [0.1], "z": []},
            {"p": [], "q": [], "z": [[0, 0], [0, 0]]},
        ],
    )
    def test_sector_shape_mismatch(self, mode_1c1r, kwargs):
        with pytest.raises(DimensionMismatchError):
            Label(mode_1c1r, **kwargs)

    def test_nonfinite_rejected(self, mode_1r):
        with pytest.raises(PreconditionError):
            Label(mode_1r, z=[[np.nan, 0.0]])

    def test_space_validation(self):
        with pytest.raises(PreconditionError):
            ModeSpace(0, 0)
        with pytest.raises(PreconditionError):
            ModeSpace(1, 1, hbar=-1.0)


class TestOverlap:
    def test_self_overlap_is_one(self, mode_1c1r, rng):
        for _ in range(25):
            lab = random_label(mode_1c1r, rng)
            assert overlap(lab, lab) == pytest.approx(1.0, abs=1e-14)

    def test_conjugate_symmetry(self, mode_1c1r, rng):
        for _ in range(25):
            a = random_label(mode_1c1r, rng)
            b = random_label(mode_1c1r, rng)
            assert overlap(a, b) == pytest.approx(np.conj(overlap(b, a)), abs=1e-14)

    def test_modulus_rules_out_phase_errors(self, mode_1r):
        # |<a|b>|^2 = exp(-|alpha_a - alpha_b|^2) depends only on distance
        a = Label(mode_1r, z=[[0.7, -0.1]])
        b = Label(mode_1r, z=[[-0.3, 0.8]])
        da, db = a.coords[0] - b.coords[0], None
        dist2 = (da[1] ** 2 / 2 + da[0] ** 2 / 2)  # w = 1, hbar = 1
        assert abs(overlap(a, b)) == pytest.approx(math.exp(-dist2 / 2), rel=1e-12)

    def test_log_overlap_consistent(self, mode_1c1r, rng):
        for _ in range(10):
            a = random_label(mode_1c1r, rng)
            b = random_label(mode_1c1r, rng)
            assert np.exp(log_overlap(a, b)) == pytest.approx(overlap(a, b), rel=1e-12)

    def test_hbar_enters_exponent(self):
        for hbar in (1.0, 0.5, 0.25):
            sp = ModeSpace(0, 1, hbar)
            a = Label(sp, z=[[0.0, 0.6]])
            b = Label(sp, z=[[0.0, 0.0]])
            # pure position offset: |<a|b>| = exp(-dq^2 / (4 hbar))
            assert abs(overlap(a, b)) == pytest.approx(
                math.exp(-0.36 / (4 * hbar)), rel=1e-12
            )

    def test_width_rescaling(self, mode_1r):
        fid = FiducialSpec([2.0])
        a = Label(mode_1r, z=[[0.0, 0.8]])
        b = Label(mode_1r, z=[[0.0, 0.0]])
        assert abs(overlap(a, b, fid)) == pytest.approx(
            math.exp(-0.64 / (4 * 4.0)), rel=1e-12
        )

    def test_different_spaces_rejected(self, mode_1r, mode_1c1r):
        a = Label(mode_1r, z=[[0, 0]])
        b = Label(mode_1c1r, p=[0], q=[0], z=[[0, 0]])
        with pytest.raises(DimensionMismatchError):
            overlap(a, b)


class TestWavefunction:
    def test_normalization_by_quadrature(self, mode_1r):
        lab = Label(mode_1r, z=[[0.4, -0.7]])
        ax = _position_grid()
        x = ax.nodes()[:, None]
        psi = coherent_wavefunction(lab, x)
        norm = tree_sum(np.abs(psi) ** 2 * ax.weights())
        assert norm == pytest.approx(1.0, abs=1e-12)

    def test_overlap_vs_wavefunction_quadrature(self, mode_1r, rng):
        # <a|b> = integral conj(psi_a) psi_b dx, the 1e-8 contract
        ax = _position_grid()
        x = ax.nodes()[:, None]
        w = ax.weights()
        for _ in range(10):
            a = random_label(mode_1r, rng)
            b = random_label(mode_1r, rng)
            quad = tree_sum(np.conj(coherent_wavefunction(a, x)) * coherent_wavefunction(b, x) * w)
            assert abs(quad - overlap(a, b)) < 1e-8

    def test_two_mode_factorization(self, rng):
        sp = ModeSpace(0, 2)
        a = random_label(sp, rng)
        parts = [
            Label(ModeSpace(0, 1), z=[a.coords[k]]) for k in range(2)
        ]
        x = np.array([[0.35, -0.6]])
        per_mode = [
            coherent_wavefunction(parts[k], x[:, k : k + 1])[0] for k in range(2)
        ]
        assert coherent_wavefunction(a, x)[0] == pytest.approx(
            per_mode[0] * per_mode[1], rel=1e-12
        )


class TestResolution:
    def test_measure_density(self, mode_1c1r):
        assert PhaseSpaceMeasure(mode_1c1r).density == pytest.approx(
            (2 * math.pi) ** -2
        )

    def test_reproducing_property(self, mode_1r):
        a = Label(mode_1r, z=[[-0.2, 0.5]])
        b = Label(mode_1r, z=[[0.4, -0.3]])
        grid = QuadratureGrid([AxisSpec.from_step(-6.0, 6.0, 0.2)] * 2)
        residual, boundary = resolution_residual(a, b, grid)
        assert residual < 1e-6
        assert boundary < 1e-8

    def test_residual_reports_boundary_when_grid_too_small(self, mode_1r):
        a = Label(mode_1r, z=[[0.0, 2.5]])
        b = Label(mode_1r, z=[[0.0, 2.5]])
        grid = QuadratureGrid([AxisSpec(-3.0, 3.0, 31)] * 2)
        residual, boundary = resolution_residual(a, b, grid)
        assert residual > 1e-4  # the grid clips the state
        assert boundary > 1e-6  # and says so

    def test_single_node_axis_reports_full_residual(self, mode_1r):
        a = Label(mode_1r, z=[[0.0, 0.0]])
        grid = QuadratureGrid([AxisSpec(0.0, 0.0, 1), AxisSpec(0.0, 0.0, 1)])
        residual, _ = resolution_residual(a, a, grid)
        assert residual == pytest.approx(abs(1 - (2 * math.pi) ** -1), rel=1e-12)


class TestFiducialMoments:
    @pytest.mark.parametrize("power", [1, 3, 5])
    def test_odd_moments_vanish(self, mode_1r, power):
        assert fiducial_moment(mode_1r, "position", power) == 0.0
        assert fiducial_moment(mode_1r, "momentum", power) == 0.0

    @pytest.mark.parametrize("hbar", [1.0, 0.5, 0.25])
    def test_variances(self, hbar):
        sp = ModeSpace(0, 1, hbar)
        assert fiducial_moment(sp, "position", 2) == pytest.approx(hbar / 2)
        assert fiducial_moment(sp, "momentum", 2) == pytest.approx(hbar / 2)

    def test_fourth_moment_is_gaussian(self, mode_1r):
        # (4-1)!! sigma^4 with sigma^2 = 1/2
        assert fiducial_moment(mode_1r, "position", 4) == pytest.approx(3 * 0.25)

    def test_width_dependence(self, mode_1r):
        fid = FiducialSpec([3.0])
        assert fiducial_moment(mode_1r, "position", 2, fiducial=fid) == pytest.approx(9.0 / 2)
        assert fiducial_moment(mode_1r, "momentum", 2, fiducial=fid) == pytest.approx(1 / 18.0)
