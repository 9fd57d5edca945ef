"""Exact complex Gaussian integrals over quadratic exponents.

A :class:`QuadExpr` is the exponent F(x) = c + l.x + x.Q.x (Q symmetric,
everything complex) of an amplitude exp(F).  Integrating out a subset v
of the variables against Lebesgue measure uses

    integral dv exp(v.S.v + b.v)
        = pi^(k/2) det(-S)^(-1/2) exp(-(1/4) b.Sinv.b),

valid when Re(-S) is positive definite.  det(-S)^(-1/2) is evaluated as
exp(-(1/2) sum log lambda_i) with principal-branch logs: positive
definiteness of the real part confines the numerical range — hence the
eigenvalues — of -S to the open right half-plane, and it stays there
along the homotopy (1-t) I + t (-S), so the per-eigenvalue principal
branch agrees with the analytic continuation from the real case and no
branch tracking is needed.

The chain evaluators use :func:`compose` (glue two transfer kernels,
integrate the shared slice) and :func:`kernel_power` (square-and-multiply,
so a 10^6-slice chain costs ~40 compositions).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DimensionMismatchError, PreconditionError

__all__ = ["LinForm", "QuadExpr", "gauss_integrate", "compose", "kernel_power"]

_RE_PD_TOL = 1e-12


class LinForm(NamedTuple):
    """Affine form const + vec . x."""

    const: complex
    vec: np.ndarray


@dataclass
class QuadExpr:
    """Quadratic exponent c + l.x + x.Q.x over dim(l) real variables."""

    c: complex
    l: np.ndarray
    Q: np.ndarray

    @classmethod
    def zeros(cls, dim: int) -> "QuadExpr":
        return cls(0.0 + 0j, np.zeros(dim, dtype=complex), np.zeros((dim, dim), dtype=complex))

    @property
    def dim(self) -> int:
        return self.l.shape[0]

    def copy(self) -> "QuadExpr":
        return QuadExpr(self.c, self.l.copy(), self.Q.copy())

    def add_const(self, value: complex):
        self.c += value

    def add_form(self, coeff: complex, f: LinForm):
        """Add coeff * (const + vec.x)."""
        self.c += coeff * f.const
        self.l += coeff * f.vec

    def add_form_product(self, coeff: complex, f1: LinForm, f2: LinForm):
        """Add coeff * f1(x) * f2(x), symmetrizing the quadratic part."""
        self.c += coeff * f1.const * f2.const
        self.l += coeff * (f1.const * f2.vec + f2.const * f1.vec)
        self.Q += coeff * 0.5 * (np.outer(f1.vec, f2.vec) + np.outer(f2.vec, f1.vec))

    def add_monomial(self, coeff: complex, factors):
        """Add coeff * prod(factors) for zero, one or two linear factors."""
        if len(factors) == 0:
            self.add_const(coeff)
        elif len(factors) == 1:
            self.add_form(coeff, factors[0])
        elif len(factors) == 2:
            self.add_form_product(coeff, factors[0], factors[1])
        else:
            raise PreconditionError(
                "quadratic-form exponents hold at most two linear factors per monomial"
            )

    def __add__(self, other: "QuadExpr") -> "QuadExpr":
        if self.dim != other.dim:
            raise DimensionMismatchError("quadratic exponents have different dims")
        return QuadExpr(self.c + other.c, self.l + other.l, self.Q + other.Q)

    def evaluate(self, x) -> complex:
        x = np.asarray(x, dtype=complex).reshape(-1)
        if x.shape[0] != self.dim:
            raise DimensionMismatchError(f"expected {self.dim} coordinates, got {x.shape[0]}")
        return complex(self.c + self.l @ x + x @ self.Q @ x)


def _log_det_neg(S: np.ndarray) -> complex:
    """log det(-S), principal-branch eigenvalue logs; see module docstring."""
    neg = -S
    re_min = float(np.min(np.linalg.eigvalsh(0.5 * (neg.real + neg.real.T))))
    scale = max(1.0, float(np.max(np.abs(neg))))
    if re_min <= _RE_PD_TOL * scale:
        raise PreconditionError(
            "Gaussian integral does not converge: Re of the integrated block "
            f"is not positive definite (min eigenvalue {re_min:.3e})"
        )
    lam = np.linalg.eigvals(neg)
    return complex(np.sum(np.log(lam)))


def gauss_integrate(expr: QuadExpr, idx) -> QuadExpr:
    """Integrate exp(expr) over the variables listed in ``idx``.

    Returns the quadratic exponent of the result over the remaining
    variables (kept in their original relative order); with every
    variable integrated the result is 0-dimensional and its ``c`` is the
    log of the full integral.
    """
    idx = np.asarray(sorted(set(int(i) for i in idx)), dtype=int)
    if idx.size == 0:
        return expr.copy()
    if idx.min() < 0 or idx.max() >= expr.dim:
        raise PreconditionError("integration index out of range")
    keep = np.asarray([i for i in range(expr.dim) if i not in set(idx.tolist())], dtype=int)

    S = expr.Q[np.ix_(idx, idx)]
    lv = expr.l[idx]
    k = idx.size
    log_pref = 0.5 * k * np.log(np.pi) - 0.5 * _log_det_neg(S)

    Sinv_lv = np.linalg.solve(S, lv)
    c = expr.c + log_pref - 0.25 * complex(lv @ Sinv_lv)

    if keep.size == 0:
        return QuadExpr(c, np.zeros(0, dtype=complex), np.zeros((0, 0), dtype=complex))

    Quv = expr.Q[np.ix_(keep, idx)]
    lu = expr.l[keep] - Quv @ Sinv_lv
    Quu = expr.Q[np.ix_(keep, keep)] - Quv @ np.linalg.solve(S, Quv.T)
    return QuadExpr(c, lu, 0.5 * (Quu + Quu.T))


def compose(later: QuadExpr, earlier: QuadExpr, slice_dim: int, log_measure: complex) -> QuadExpr:
    """Chain two transfer kernels K(out, mid) and K(mid, in).

    Both arguments are exponents over 2*slice_dim variables ordered
    (out-block, in-block); the shared slice is integrated with an extra
    additive ``log_measure`` constant (the per-slice measure density).
    """
    d = slice_dim
    if later.dim != 2 * d or earlier.dim != 2 * d:
        raise DimensionMismatchError("transfer kernels must have dim 2*slice_dim")
    big = QuadExpr.zeros(3 * d)
    big.c = later.c + earlier.c + log_measure
    # later occupies (out, mid) = axes [0:d) + [d:2d); earlier (mid, in) = [d:2d) + [2d:3d)
    li = np.arange(2 * d)
    ei = np.arange(d, 3 * d)
    big.l[li] += later.l
    big.l[ei] += earlier.l
    big.Q[np.ix_(li, li)] += later.Q
    big.Q[np.ix_(ei, ei)] += earlier.Q
    return gauss_integrate(big, np.arange(d, 2 * d))


def kernel_power(kernel: QuadExpr, n_links: int, slice_dim: int, log_measure: complex) -> QuadExpr:
    """n_links-fold chain of one transfer kernel (n_links - 1 integrations).

    Square-and-multiply on the composition monoid; powers of a single
    kernel commute with each other, so the combine order is immaterial.
    """
    if n_links < 1:
        raise PreconditionError("chain needs at least one link")
    result = None
    base = kernel
    n = n_links
    while n:
        if n & 1:
            result = base if result is None else compose(result, base, slice_dim, log_measure)
        n >>= 1
        if n:
            base = compose(base, base, slice_dim, log_measure)
    return result
