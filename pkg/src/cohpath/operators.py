"""Polynomial operators in per-mode ladder monomials.

An operator is stored normal-ordered: a dict mapping per-mode exponent
pairs ((m_0, n_0), ..., (m_M-1, n_M-1)) -> coefficient, meaning

    prod_k (adag_k)^m_k (a_k)^n_k

with a_k = (Q_k / w_k + i w_k P_k) / sqrt(2 hbar).  Products are
re-normal-ordered exactly with the usual contraction formula

    (adag^m1 a^n1)(adag^m2 a^n2)
        = sum_k k! C(n1, k) C(m2, k) adag^(m1+m2-k) a^(n1+n2-k),

modes commute, so multi-mode products factor through per-mode products.
Coefficients are exact complex numbers at fixed hbar; hbar-dependence of
a physical operator enters through the constructors below.
"""

from __future__ import annotations

import math
from math import comb, factorial

import numpy as np

from .errors import DimensionMismatchError, PreconditionError
from .states import FiducialSpec, ModeSpace, _effective_widths

__all__ = [
    "PolynomialOperator",
    "identity",
    "ladder_term",
    "position",
    "momentum",
    "number_op",
    "harmonic_oscillator",
    "free_particle",
    "commutator",
]

_ZERO_TOL = 0.0  # coefficients pruned only when exactly zero


class PolynomialOperator:
    """Normal-ordered polynomial in the mode ladder operators."""

    def __init__(self, n_modes: int, terms=None):
        if n_modes < 1:
            raise PreconditionError("operator needs at least one mode")
        self.n_modes = n_modes
        self.terms = {}
        if terms:
            for key, coeff in dict(terms).items():
                key = tuple((int(m), int(n)) for m, n in key)
                if len(key) != n_modes:
                    raise DimensionMismatchError(
                        f"term {key} has {len(key)} modes, operator has {n_modes}"
                    )
                if any(m < 0 or n < 0 for m, n in key):
                    raise PreconditionError(f"negative ladder power in term {key}")
                coeff = complex(coeff)
                if coeff != 0:
                    self.terms[key] = self.terms.get(key, 0) + coeff
            self.terms = {k: c for k, c in self.terms.items() if c != 0}

    # -- algebra -------------------------------------------------------

    def _check_compatible(self, other: "PolynomialOperator"):
        if self.n_modes != other.n_modes:
            raise DimensionMismatchError(
                f"operators act on {self.n_modes} vs {other.n_modes} modes"
            )

    def __add__(self, other):
        if np.isscalar(other):
            other = identity(self.n_modes) * complex(other)
        self._check_compatible(other)
        out = dict(self.terms)
        for key, coeff in other.terms.items():
            out[key] = out.get(key, 0) + coeff
        return PolynomialOperator(self.n_modes, out)

    __radd__ = __add__

    def __neg__(self):
        return PolynomialOperator(self.n_modes, {k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        if np.isscalar(other):
            other = identity(self.n_modes) * complex(other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if np.isscalar(other):
            c = complex(other)
            return PolynomialOperator(
                self.n_modes, {k: c * v for k, v in self.terms.items()}
            )
        self._check_compatible(other)
        out = {}
        for key1, c1 in self.terms.items():
            for key2, c2 in other.terms.items():
                base = c1 * c2
                # per-mode contraction expansions, combined multiplicatively
                expansions = []
                for (m1, n1), (m2, n2) in zip(key1, key2):
                    kmax = min(n1, m2)
                    expansions.append(
                        [
                            (
                                (m1 + m2 - k, n1 + n2 - k),
                                factorial(k) * comb(n1, k) * comb(m2, k),
                            )
                            for k in range(kmax + 1)
                        ]
                    )
                partial = [((), base)]
                for exp in expansions:
                    partial = [
                        (key + (pair,), coeff * w)
                        for key, coeff in partial
                        for pair, w in exp
                    ]
                for key, coeff in partial:
                    out[key] = out.get(key, 0) + coeff
        return PolynomialOperator(self.n_modes, out)

    def __rmul__(self, other):
        if np.isscalar(other):
            return self.__mul__(other)
        return NotImplemented

    def __truediv__(self, other):
        return self * (1.0 / complex(other))

    def __pow__(self, exponent: int):
        if not isinstance(exponent, int) or exponent < 0:
            raise PreconditionError("operator powers must be non-negative integers")
        out = identity(self.n_modes)
        for _ in range(exponent):
            out = out * self
        return out

    def dagger(self) -> "PolynomialOperator":
        return PolynomialOperator(
            self.n_modes,
            {tuple((n, m) for m, n in key): np.conj(c) for key, c in self.terms.items()},
        )

    # -- queries -------------------------------------------------------

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        diff = self - self.dagger()
        return all(abs(c) <= tol for c in diff.terms.values())

    def degree(self) -> int:
        """Total ladder degree across all modes (0 for the zero operator)."""
        if not self.terms:
            return 0
        return max(sum(m + n for m, n in key) for key in self.terms)

    def touched_modes(self) -> tuple:
        touched = set()
        for key in self.terms:
            for k, (m, n) in enumerate(key):
                if m or n:
                    touched.add(k)
        return tuple(sorted(touched))

    def norm1(self) -> float:
        return float(sum(abs(c) for c in self.terms.values()))

    def __eq__(self, other):
        return (
            isinstance(other, PolynomialOperator)
            and self.n_modes == other.n_modes
            and self.terms == other.terms
        )

    def __repr__(self):
        inner = ", ".join(f"{k}: {c:.6g}" for k, c in sorted(self.terms.items()))
        return f"PolynomialOperator({self.n_modes}, {{{inner}}})"


def _single_mode_key(n_modes: int, mode: int, m: int, n: int) -> tuple:
    if not 0 <= mode < n_modes:
        raise PreconditionError(f"mode {mode} out of range for {n_modes} modes")
    return tuple((m, n) if k == mode else (0, 0) for k in range(n_modes))


def identity(n_modes: int) -> PolynomialOperator:
    return PolynomialOperator(n_modes, {tuple((0, 0) for _ in range(n_modes)): 1.0})


def ladder_term(n_modes: int, mode: int, m: int, n: int, coeff=1.0) -> PolynomialOperator:
    """coeff * (adag_mode)^m (a_mode)^n."""
    return PolynomialOperator(n_modes, {_single_mode_key(n_modes, mode, m, n): coeff})


def position(space: ModeSpace, mode: int, fiducial: FiducialSpec | None = None):
    """Q_mode = w sqrt(hbar/2) (a + adag)."""
    w = _effective_widths(space, fiducial)[mode]
    c = w * math.sqrt(space.hbar / 2.0)
    return ladder_term(space.n_modes, mode, 0, 1, c) + ladder_term(
        space.n_modes, mode, 1, 0, c
    )

def momentum(space: ModeSpace, mode: int, fiducial: FiducialSpec | None = None):
    """P_mode = (i/w) sqrt(hbar/2) (adag - a)."""
    w = _effective_widths(space, fiducial)[mode]
    c = math.sqrt(space.hbar / 2.0) / w
    return ladder_term(space.n_modes, mode, 1, 0, 1j * c) + ladder_term(
        space.n_modes, mode, 0, 1, -1j * c
    )


def number_op(space: ModeSpace, mode: int) -> PolynomialOperator:
    return ladder_term(space.n_modes, mode, 1, 1)


def harmonic_oscillator(space: ModeSpace, mode: int, fiducial: FiducialSpec | None = None):
    """(P^2 + Q^2)/2 on one mode; at unit width this is hbar (n + 1/2)."""
    P = momentum(space, mode, fiducial)
    Q = position(space, mode, fiducial)
    return (P * P + Q * Q) * 0.5


def free_particle(space: ModeSpace, mode: int, fiducial: FiducialSpec | None = None):
    """P^2 / 2 on one mode."""
    P = momentum(space, mode, fiducial)
    return (P * P) * 0.5


def commutator(a: PolynomialOperator, b: PolynomialOperator) -> PolynomialOperator:
    return a * b - b * a
