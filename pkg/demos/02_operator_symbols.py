"""Upper and lower symbols of ladder polynomials, and their hbar gap.

    python3 demos/02_operator_symbols.py

The upper symbol is the diagonal expectation <x|Op|x>; the lower symbol
is the density that reassembles the operator from projectors.  They
differ at O(hbar), and smoothing the lower symbol against |<x|x'>|^2
must give back the upper one — checked here by quadrature.
"""

from cohpath.operators import harmonic_oscillator, momentum, number_op, position
from cohpath.quadrature import AxisSpec, QuadratureGrid
from cohpath.states import Label, ModeSpace
from cohpath.symbols import (
    lower_symbol,
    symbol_gap,
    upper_from_lower,
    upper_symbol,
)

space = ModeSpace(0, 1, 1.0)
label = Label(space, z=[[-0.2, 0.5]])

ops = {
    "N": number_op(space, 0),
    "HO": harmonic_oscillator(space, 0),
    "P^2": momentum(space, 0) ** 2,
    "Q^2": position(space, 0) ** 2,
    "Q^4": position(space, 0) ** 4,
}

print(f"{'op':<6} {'upper':>12} {'lower':>12} {'gap':>12}")
for name, op in ops.items():
    up = upper_symbol(op, label).real
    low = lower_symbol(op, label).real
    print(f"{name:<6} {up:>12.6f} {low:>12.6f} {up - low:>12.6f}")

# For the oscillator the gap is a pure constant: exactly hbar.
print("\noscillator gap across hbar:")
for hbar in (1.0, 0.5, 0.25):
    sp = ModeSpace(0, 1, hbar)
    lab = Label(sp, z=[[-0.2, 0.5]])
    ho = harmonic_oscillator(sp, 0)
    gap = (upper_symbol(ho, lab) - lower_symbol(ho, lab)).real
    print(f"  hbar = {hbar:<5} gap = {gap:.15f}")

# symbol_gap gives the same thing as a polynomial; for linear operators
# it is empty (both symbols coincide exactly).
print("\ngap polynomial, HO :", symbol_gap(harmonic_oscillator(space, 0)).coeffs)
print("gap polynomial, Q  :", symbol_gap(position(space, 0)).coeffs)

# Smoothing identity: integrate the lower symbol against the kernel
# density and compare with the direct upper symbol.
grid = QuadratureGrid([AxisSpec.from_step(-8.0, 8.0, 0.05)] * 2)
print("\nsmoothing identity on the standard grid:")
for name, op in ops.items():
    smoothed = upper_from_lower(op, label, grid)
    direct = upper_symbol(op, label)
    print(f"  {name:<4} |smoothed - direct| = {abs(smoothed - direct):.3e}")
