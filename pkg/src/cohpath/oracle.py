"""Brute-force references: truncated Fock evolution, Gaussian moments,
tensor-grid quadrature.

Everything in here is deliberately dumb and independent of the lattice
machinery, so the two can disagree meaningfully.  The Fock propagator
builds the operator as a dense matrix in a number basis truncated at
``n_trunc`` per mode and exponentiates it with scipy's Pade
scaling-and-squaring; the coherent vectors it contracts against refuse
to run when their truncated norm loss exceeds ``loss_tol`` and report
the basis size that would do.
"""

from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np
from scipy.linalg import expm
from scipy.special import gammainc, gammaincc

from .errors import PreconditionError, TruncationError
from .operators import PolynomialOperator
from .quadrature import QuadratureGrid, tree_sum
from .states import FiducialSpec, Label, _effective_widths
from .symbols import label_alphas

__all__ = [
    "annihilation_matrix",
    "coherent_fock_vector",
    "operator_fock_matrix",
    "fock_propagator",
    "FockResult",
    "gaussian_moment",
    "brute_quadrature",
    "QuadResult",
]

DEFAULT_N_TRUNC = 60
DEFAULT_LOSS_TOL = 1e-10


def annihilation_matrix(size: int) -> np.ndarray:
    """The truncated ladder matrix a with a|n> = sqrt(n)|n-1>."""
    return np.diag(np.sqrt(np.arange(1, size)), k=1).astype(complex)


def coherent_norm_loss(alpha: complex, size: int) -> float:
    """Exact probability mass of |alpha> above the truncation.

    The Fock weights are Poisson(|alpha|^2), so the tail is a regularized
    incomplete gamma — no summation, no cancellation.
    """
    x = abs(alpha) ** 2
    if x == 0.0:
        return 0.0
    return float(gammainc(size, x))


def _required_size(alpha: complex, tol: float) -> int:
    x = abs(alpha) ** 2
    size = max(4, int(x))
    while gammainc(size, x) > tol and size < 100000:
        size = int(size * 1.5) + 1
    # tighten back down
    lo, hi = 1, size
    while lo < hi:
        mid = (lo + hi) // 2
        if gammainc(mid, x) <= tol:
            hi = mid
        else:
            lo = mid + 1
    return lo


def coherent_fock_vector(
    label: Label,
    n_trunc: int = DEFAULT_N_TRUNC,
    fiducial: FiducialSpec | None = None,
    loss_tol: float = DEFAULT_LOSS_TOL,
) -> np.ndarray:
    """|label> in the truncated number basis (kron over modes).

    Includes the label phase exp(-i p q / 2 hbar) per mode, matching the
    generator ordering exp(-iqP/hbar) exp(+ipQ/hbar) |eta>.  Raises
    :class:`TruncationError` when the total norm loss would exceed
    ``loss_tol``, reporting the per-mode basis size that suffices.
    """
    alphas = label_alphas(label, fiducial)
    hbar = label.space.hbar
    total_loss = 0.0
    vecs = []
    for k, alpha in enumerate(alphas):
        loss = coherent_norm_loss(alpha, n_trunc)
        total_loss += loss
        if loss > loss_tol:
            raise TruncationError(
                f"mode {k}: truncated coherent vector loses {loss:.3e} norm at "
                f"n_trunc={n_trunc} (tolerance {loss_tol:.1e})",
                required_size=_required_size(alpha, loss_tol),
            )
        c = np.zeros(n_trunc, dtype=complex)
        c[0] = np.exp(-0.5 * abs(alpha) ** 2)
        for n in range(1, n_trunc):
            c[n] = c[n - 1] * alpha / np.sqrt(n)
        p, q = label.coords[k]
        c *= np.exp(-0.5j * p * q / hbar)
        vecs.append(c)
    out = vecs[0]
    for v in vecs[1:]:
        out = np.kron(out, v)
    return out


def operator_fock_matrix(op: PolynomialOperator, n_trunc: int = DEFAULT_N_TRUNC):
    """Dense matrix of the operator in the truncated kron number basis."""
    size = n_trunc**op.n_modes
    single = {}

    def mode_matrix(m: int, n: int) -> np.ndarray:
        if (m, n) not in single:
            a = annihilation_matrix(n_trunc)
            mat = np.eye(n_trunc, dtype=complex)
            for _ in range(n):
                mat = a @ mat
            for _ in range(m):
                mat = a.conj().T @ mat
            single[(m, n)] = mat
        return single[(m, n)]

    out = np.zeros((size, size), dtype=complex)
    for key, coeff in op.terms.items():
        term = np.array([[1.0 + 0j]])
        for m, n in key:
            term = np.kron(term, mode_matrix(m, n))
        out += coeff * term
    return out


class FockResult(NamedTuple):
    amplitude: complex
    norm_loss: float
    n_trunc: int


def fock_propagator(
    op: PolynomialOperator,
    a: Label,
    b: Label,
    total_time: float,
    n_trunc: int = DEFAULT_N_TRUNC,
    fiducial: FiducialSpec | None = None,
    loss_tol: float = DEFAULT_LOSS_TOL,
) -> FockResult:
    """<a| exp(-i T Op / hbar) |b> by dense matrix exponentiation.

    The reference value every lattice route is measured against.  The
    ``norm_loss`` field is the summed coherent-tail mass of the two
    endpoint vectors — the scale of the truncation error.
    """
    if a.space != b.space:
        raise PreconditionError("endpoint labels live on different mode spaces")
    if op.n_modes != a.space.n_modes:
        raise PreconditionError("operator and labels disagree on mode count")
    va = coherent_fock_vector(a, n_trunc, fiducial, loss_tol)
    vb = coherent_fock_vector(b, n_trunc, fiducial, loss_tol)
    hmat = operator_fock_matrix(op, n_trunc)
    u = expm(-1j * total_time / a.space.hbar * hmat)
    amp = complex(np.vdot(va, u @ vb))
    loss_a = sum(coherent_norm_loss(al, n_trunc) for al in label_alphas(a, fiducial))
    loss_b = sum(coherent_norm_loss(al, n_trunc) for al in label_alphas(b, fiducial))
    return FockResult(amp, float(loss_a + loss_b), n_trunc)


def gaussian_moment(power: int, sigma2: float) -> float:
    """E[X^power] for X ~ N(0, sigma2): (power-1)!! sigma^power, 0 for odd."""
    if power < 0:
        raise PreconditionError("power must be non-negative")
    if sigma2 < 0:
        raise PreconditionError("variance must be non-negative")
    if power % 2 == 1:
        return 0.0
    val = 1.0
    for k in range(power - 1, 0, -2):
        val *= k
    return val * sigma2 ** (power // 2)


class QuadResult(NamedTuple):
    value: complex
    boundary_estimate: float


def brute_quadrature(f: Callable, grid: QuadratureGrid) -> QuadResult:
    """Tensor trapezoid integral of a vectorized integrand.

    ``f`` receives the full (num_points, ndim) node array and must
    return one value per node.  ``boundary_estimate`` is the weighted
    magnitude of the boundary shell's contribution — the caller's
    truncation diagnostic.
    """
    nodes = grid.nodes()
    values = np.asarray(f(nodes)).reshape(-1)
    if values.shape[0] != grid.num_points:
        raise PreconditionError("integrand returned wrong number of values")
    weighted = values * grid.weights()
    total = tree_sum(weighted)
    mask = grid.boundary_mask()
    boundary = abs(complex(tree_sum(weighted[mask]))) if mask.any() else 0.0
    return QuadResult(complex(total), float(boundary))
