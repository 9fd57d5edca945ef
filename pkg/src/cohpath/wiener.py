"""Pinned Wiener measure: heat kernels, Brownian bridges, and the
nu-regularized Monte-Carlo propagator.

The regularization multiplies the lattice integrand by flat heat
kernels on every phase-space axis, turning the slice integrations into
expectations over Brownian bridges pinned at the endpoint labels.  The
estimator here samples those bridges exactly (Gaussian conditioning,
marched left to right), evaluates the product of short-time kernels on
each sampled path, and calibrates the overall normalization against an
h = 0 equal-endpoint run, which the construction fixes to 1.

Determinism contract: sample i of a run tagged ``tag`` draws from
``SeedSequence(seed, spawn_key=(tag, i))`` and nothing else; reductions
are fixed-order.  Rerunning any estimator with the same arguments
reproduces the same bits.  Calibration uses a different tag, so the
numerator and the normalization never share variates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, PreconditionError
from .lattice import LatticeConfig, PropagatorResult, _kernel_log_coords
from .operators import PolynomialOperator
from .quadrature import QuadratureGrid, tree_sum
from .states import FiducialSpec, Label, _effective_widths
from .symbols import lower_symbol_fn

__all__ = [
    "MetricSpec",
    "WienerConfig",
    "BridgePath",
    "heat_kernel",
    "chapman_kolmogorov_residual",
    "brownian_bridge_covariance",
    "sample_pinned_bridge",
    "sample_pinned_bridges",
    "regularized_propagator_mc",
    "regularized_propagator_quadrature",
]

_TAG_MAIN = 0
_TAG_CALIBRATION = 1


@dataclass(frozen=True)
class MetricSpec:
    """Flat diagonal metric: axis k carries weight w_k in the kinetic form.

    The heat kernel on axis k is sqrt(w/(2 pi nu t)) exp(-w dx^2/(2 nu t)),
    i.e. larger weight means stiffer axis and variance nu t / w.
    """

    weights: np.ndarray

    def __init__(self, weights):
        w = np.atleast_1d(np.asarray(weights, dtype=float)).copy()
        if w.ndim != 1 or not np.all(np.isfinite(w)) or not np.all(w > 0):
            raise PreconditionError("metric weights must be finite and positive")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @classmethod
    def unit(cls, n_axes: int) -> "MetricSpec":
        return cls(np.ones(n_axes))


@dataclass(frozen=True)
class WienerConfig:
    """Parameters of one regularized Monte-Carlo run."""

    nu: float
    n_samples: int
    seed: int
    lattice: LatticeConfig

    def __post_init__(self):
        if not (self.nu > 0 and math.isfinite(self.nu)):
            raise PreconditionError("nu must be finite and positive")
        if self.n_samples < 2:
            raise PreconditionError("need at least two samples")
        if not 0 <= int(self.seed) < 2**64:
            raise PreconditionError("seed must fit in uint64")


@dataclass(frozen=True)
class BridgePath:
    """One sampled pinned path: times (K,), values (K, n_axes)."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.times.ndim != 1 or self.values.shape[0] != self.times.shape[0]:
            raise DimensionMismatchError("times and values disagree on node count")


def _axis_weights(weights, n_axes: int) -> np.ndarray:
    if weights is None:
        return np.ones(n_axes)
    w = weights.weights if isinstance(weights, MetricSpec) else np.asarray(weights, float)
    if w.shape != (n_axes,):
        raise DimensionMismatchError(f"expected {n_axes} axis weights, got {w.shape}")
    return w


def heat_kernel(a, b, t: float, nu: float, weights=None) -> float:
    """Flat heat kernel prod_k sqrt(w_k/(2 pi nu t)) exp(-w_k (b-a)_k^2 / (2 nu t))."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise DimensionMismatchError("endpoint shapes differ")
    if not (t > 0 and math.isfinite(t)):
        raise PreconditionError("time must be finite and positive")
    if not (nu > 0 and math.isfinite(nu)):
        raise PreconditionError("nu must be finite and positive")
    w = _axis_weights(weights, a.shape[0])
    var = nu * t / w
    return float(
        np.prod(1.0 / np.sqrt(2.0 * math.pi * var))
        * np.exp(-np.sum((b - a) ** 2 / (2.0 * var)))
    )


def chapman_kolmogorov_residual(
    a, b, t_first: float, t_second: float, nu: float, grid: QuadratureGrid, weights=None
):
    """| K(a,b; t1+t2) - integral dx K(a,x;t1) K(x,b;t2) | on a grid.

    Returns (residual, boundary_contribution); the boundary term plays
    the usual grid-too-small tattletale role.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if grid.ndim != a.shape[0]:
        raise DimensionMismatchError(
            f"grid has {grid.ndim} axes, endpoints have {a.shape[0]}"
        )
    w = _axis_weights(weights, a.shape[0])
    nodes = grid.nodes()
    var1 = nu * t_first / w
    var2 = nu * t_second / w
    k1 = np.prod(1.0 / np.sqrt(2 * math.pi * var1)) * np.exp(
        -np.sum((nodes - a) ** 2 / (2 * var1), axis=1)
    )
    k2 = np.prod(1.0 / np.sqrt(2 * math.pi * var2)) * np.exp(
        -np.sum((b - nodes) ** 2 / (2 * var2), axis=1)
    )
    terms = k1 * k2 * grid.weights()
    total = float(tree_sum(terms))
    mask = grid.boundary_mask()
    boundary = float(abs(tree_sum(terms[mask]))) if mask.any() else 0.0
    direct = heat_kernel(a, b, t_first + t_second, nu, weights)
    return abs(direct - total), boundary


def brownian_bridge_covariance(interior_times, t_start: float, t_end: float, nu: float):
    """Cov[B(t_j), B(t_k)] = nu (t_end - t_max)(t_min - t_start)/(t_end - t_start)
    for a bridge pinned to zero at both ends (unit axis weight)."""
    t = np.asarray(interior_times, dtype=float)
    if np.any(t <= t_start) or np.any(t >= t_end):
        raise PreconditionError("interior times must lie strictly inside (t_start, t_end)")
    span = t_end - t_start
    tmin = np.minimum.outer(t, t)
    tmax = np.maximum.outer(t, t)
    return nu * (t_end - tmax) * (tmin - t_start) / span


def _sample_generator(seed: int, tag: int, index: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(tag, index)))
    )


def _march_bridge(normals, a, b, times, nu, w):
    """Turn (n, K-2, d) standard normals into pinned paths (n, K, d)."""
    n, _, d = normals.shape
    K = times.shape[0]
    out = np.empty((n, K, d))
    out[:, 0, :] = a
    out[:, -1, :] = b
    t_end = times[-1]
    x = np.broadcast_to(a, (n, d)).copy()
    for k in range(1, K - 1):
        dt = times[k] - times[k - 1]
        rem = t_end - times[k - 1]
        mean = x + (b - x) * (dt / rem)
        var = nu * dt * (t_end - times[k]) / rem / w
        x = mean + np.sqrt(var) * normals[:, k - 1, :]
        out[:, k, :] = x
    return out


def sample_pinned_bridge(
    seed: int, a, b, times, nu: float, weights=None, tag: int = _TAG_MAIN, index: int = 0
) -> BridgePath:
    """One exact pinned Brownian bridge; values[0] == a, values[-1] == b.

    Marched Gaussian conditioning: x_{k+1} | x_k, endpoint is normal with
    mean x_k + (b - x_k) dt / remaining and variance
    nu dt (t_end - t_{k+1}) / remaining / w per axis — no discretization
    error beyond the chosen time grid.
    """
    values = sample_pinned_bridges(seed, 1, a, b, times, nu, weights, tag=tag, first_index=index)[0]
    return BridgePath(np.asarray(times, dtype=float), values)


def sample_pinned_bridges(
    seed: int,
    n_samples: int,
    a,
    b,
    times,
    nu: float,
    weights=None,
    tag: int = _TAG_MAIN,
    first_index: int = 0,
) -> np.ndarray:
    """Sample ``n_samples`` pinned bridges; returns (n_samples, K, d).

    Sample i uses the substream (seed, tag, first_index + i) and always
    draws the same (K-2, d) block of normals, so any sample can be
    regenerated in isolation.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.shape[0] < 2:
        raise PreconditionError("need at least the two endpoint times")
    if np.any(np.diff(times) <= 0):
        raise PreconditionError("times must be strictly increasing")
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise DimensionMismatchError("endpoint shapes differ")
    d = a.shape[0]
    w = _axis_weights(weights, d)
    K = times.shape[0]
    normals = np.empty((n_samples, K - 2, d))
    for i in range(n_samples):
        gen = _sample_generator(seed, tag, first_index + i)
        normals[i] = gen.standard_normal((K - 2, d))
    return _march_bridge(normals, a, b, times, nu, w)


def _chain_log_values(op, paths, widths, hbar, eps, route, lower_fn):
    """Sum of log short-time kernels along each sampled path.

    paths: (n, K, 2M) flat coordinates; returns (n,) complex.  The
    lattice convention is shared with the deterministic evaluators via
    the same kernel helper: link k runs x_k -> x_{k+1} and the kernel is
    K(x_{k+1}, x_k).
    """
    n, K, d = paths.shape
    coords = paths.reshape(n, K, d // 2, 2)
    logk = _kernel_log_coords(
        op, coords[:, 1:], coords[:, :-1], widths, hbar, eps, route, lower_fn
    )
    return np.sum(logk, axis=1)


def _mean_and_se(values: np.ndarray):
    n = values.shape[0]
    mean = complex(tree_sum(values) / n)
    var = float(
        tree_sum(np.abs(values - mean) ** 2).real / max(1, n - 1)
    )
    return mean, math.sqrt(var / n)


def regularized_propagator_mc(
    op: PolynomialOperator,
    a: Label,
    b: Label,
    config: WienerConfig,
    metric: MetricSpec | None = None,
    fiducial: FiducialSpec | None = None,
) -> PropagatorResult:
    """nu-regularized propagator <a| ... |b> by bridge Monte Carlo.

    Paths are pinned Brownian bridges from b (t = 0) to a (t = T) over
    all 2M flat phase-space coordinates; each path is scored with the
    product of short-time kernels of the configured route.  The reported
    value is

        heat(a,b;T) E[f]  /  ( heat(b,b;T) E[f_cal] ),

    with the calibration run (same nu, same slicing, op = 0, equal
    endpoints b) pinning the h = 0 normalization to 1.  Increment
    translation-invariance makes the calibration anchor immaterial.

    ``error_estimate`` is the propagated Monte-Carlo standard error of
    the ratio (1 sigma); the systematic nu- and eps-biases are *not* in
    it — they are what the nu-ladder trend tests quantify.
    """
    if a.space != b.space:
        raise DimensionMismatchError("endpoint labels live on different mode spaces")
    space = a.space
    d = 2 * space.n_modes
    w = _axis_weights(metric, d)
    widths = _effective_widths(space, fiducial)
    lat = config.lattice
    if lat.total_time <= 0:
        raise PreconditionError("Monte-Carlo propagator needs total_time > 0")
    times = np.linspace(0.0, lat.total_time, lat.n_slices + 2)
    lower_fn = lower_symbol_fn(op)

    paths = sample_pinned_bridges(
        config.seed, config.n_samples, b.flat(), a.flat(), times, config.nu, w,
        tag=_TAG_MAIN,
    )
    f = np.exp(
        _chain_log_values(op, paths, widths, space.hbar, lat.epsilon, lat.route, lower_fn)
    )
    mean, se = _mean_and_se(f)

    cal_paths = sample_pinned_bridges(
        config.seed, config.n_samples, b.flat(), b.flat(), times, config.nu, w,
        tag=_TAG_CALIBRATION,
    )
    zero_op = PolynomialOperator(op.n_modes, {})
    f_cal = np.exp(
        _chain_log_values(zero_op, cal_paths, widths, space.hbar, lat.epsilon, lat.route, None)
    )
    mean_cal, se_cal = _mean_and_se(f_cal)
    if mean_cal == 0:
        raise PreconditionError("calibration mean vanished; increase n_samples")

    rho_num = heat_kernel(b.flat(), a.flat(), lat.total_time, config.nu, w)
    rho_cal = heat_kernel(b.flat(), b.flat(), lat.total_time, config.nu, w)
    estimate = rho_num * mean / (rho_cal * mean_cal)
    # rho * E[f] = integral of (heat chain) * (kernel chain), so the ratio
    # is exactly what regularized_propagator_quadrature evaluates on a grid.
    rel = math.hypot(se / abs(mean) if mean != 0 else float("inf"), se_cal / abs(mean_cal))
    return PropagatorResult(
        complex(estimate),
        "wiener_mc",
        abs(estimate) * rel,
        {
            "nu": config.nu,
            "n_samples": config.n_samples,
            "seed": config.seed,
            "n_slices": lat.n_slices,
            "epsilon": lat.epsilon,
            "route": lat.route,
            "raw_mean": mean,
            "raw_se": se,
            "calibration_mean": mean_cal,
            "calibration_se": se_cal,
        },
    )


def _heat_chain(paths: np.ndarray, eps: float, nu: float, w: np.ndarray) -> np.ndarray:
    """prod_k heat(x_{k+1}, x_k; eps) for paths of shape (n, K, d) -> (n,)."""
    var = nu * eps / w
    diffs = np.diff(paths, axis=1)
    log_norm = -0.5 * float(np.sum(np.log(2.0 * math.pi * var))) * diffs.shape[1]
    return np.exp(log_norm - np.sum(diffs**2 / (2.0 * var), axis=(1, 2)))


def regularized_propagator_quadrature(
    op: PolynomialOperator,
    a: Label,
    b: Label,
    nu: float,
    lattice: LatticeConfig,
    grid: QuadratureGrid,
    metric: MetricSpec | None = None,
    fiducial: FiducialSpec | None = None,
) -> PropagatorResult:
    """The exact integral the Monte-Carlo estimator targets, on a grid.

    Same ratio as :func:`regularized_propagator_mc` — heat-damped kernel
    chain over the interior slices, normalized by the equal-endpoint
    h = 0 chain — but with both integrals done by deterministic
    quadrature, so MC runs can be validated at matching (nu, slicing).
    The grid spans all interior slices jointly (ndim = n_slices * 2M),
    which confines it to one or two slices in practice.
    """
    if a.space != b.space:
        raise DimensionMismatchError("endpoint labels live on different mode spaces")
    space = a.space
    d = 2 * space.n_modes
    if grid.ndim != lattice.n_slices * d:
        raise DimensionMismatchError(
            f"grid has {grid.ndim} axes; need n_slices * 2M = {lattice.n_slices * d}"
        )
    w = _axis_weights(metric, d)
    widths = _effective_widths(space, fiducial)
    eps = lattice.epsilon
    interior = grid.nodes().reshape(-1, lattice.n_slices, d)
    n_pts = interior.shape[0]
    weights_q = grid.weights()

    def chain(op_, end_a, end_b, lower_fn):
        paths = np.concatenate(
            [
                np.broadcast_to(end_b, (n_pts, 1, d)),
                interior,
                np.broadcast_to(end_a, (n_pts, 1, d)),
            ],
            axis=1,
        )
        vals = _heat_chain(paths, eps, nu, w) * np.exp(
            _chain_log_values(op_, paths, widths, space.hbar, eps, lattice.route, lower_fn)
        )
        return weights_q * vals

    terms_num = chain(op, a.flat(), b.flat(), lower_symbol_fn(op))
    terms_cal = chain(PolynomialOperator(op.n_modes, {}), b.flat(), b.flat(), None)
    numerator = complex(tree_sum(terms_num))
    denominator = complex(tree_sum(terms_cal))
    if denominator == 0:
        raise PreconditionError("normalization integral vanished on this grid")
    mask = grid.boundary_mask()
    boundary = float(abs(tree_sum(terms_num[mask]))) if mask.any() else 0.0
    estimate = numerator / denominator
    return PropagatorResult(
        estimate,
        "wiener_quadrature",
        boundary / abs(denominator),
        {
            "nu": nu,
            "n_slices": lattice.n_slices,
            "epsilon": eps,
            "route": lattice.route,
            "normalization": denominator,
        },
    )
