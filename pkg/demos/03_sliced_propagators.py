"""Time-sliced propagators against the truncated-basis oracle.

    python3 demos/03_sliced_propagators.py

Builds the oscillator propagator <a|exp(-iTH)|b> three ways — exact
truncated-basis evolution, the analytic Gaussian kernel chain, and grid
quadrature of the same lattice — then shows the O(1/N) approach of both
symbol routes to the common limit.  Saves the convergence plot next to
this script.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from cohpath.lattice import (
    LatticeConfig,
    convergence_study,
    propagator_gaussian_chain,
    propagator_quadrature,
)
from cohpath.operators import harmonic_oscillator
from cohpath.oracle import fock_propagator
from cohpath.quadrature import AxisSpec, QuadratureGrid
from cohpath.states import Label, ModeSpace

space = ModeSpace(0, 1, 1.0)
a = Label(space, z=[[-0.2, 0.5]])
b = Label(space, z=[[0.4, -0.3]])
ho = harmonic_oscillator(space, 0)
T = 0.9

exact = fock_propagator(ho, a, b, T)
print(f"oracle amplitude        = {exact.amplitude:+.12f}")

chain = propagator_gaussian_chain(ho, a, b, LatticeConfig(64, T, "upper"))
print(f"gaussian chain, N=64    = {chain.amplitude:+.12f}"
      f"   |err| = {abs(chain.amplitude - exact.amplitude):.2e}")

grid = QuadratureGrid([AxisSpec(-6.0, 6.0, 61)] * 2)
quad = propagator_quadrature(ho, a, b, LatticeConfig(2, T, "upper"), grid)
chain2 = propagator_gaussian_chain(ho, a, b, LatticeConfig(2, T, "upper"))
print(f"quadrature,     N=2     = {quad.amplitude:+.12f}"
      f"   |chain - quad| = {abs(chain2.amplitude - quad.amplitude):.2e}")

# Both symbol routes walk down to the same limit like 1/N.
study = convergence_study(ho, a, b, T, [2, 4, 8, 16, 32, 64])
print(f"\n{'route':<7} {'N':>4} {'epsilon':>9} {'|error|':>11}")
for route in ("upper", "lower"):
    for n, eps, amp, err in study.rows[route]:
        print(f"{route:<7} {n:>4} {eps:>9.5f} {err:>11.3e}")
    print(f"{route:<7} slope = {study.slopes[route]:+.3f}"
          f"   extrapolated = {study.extrapolated[route]:+.10f}")
print(f"route limit gap = {study.route_limit_gap:.3e}")

fig, ax = plt.subplots(figsize=(5.0, 3.6))
for route, marker in (("upper", "o"), ("lower", "s")):
    ns = [row[0] for row in study.rows[route]]
    errs = [row[3] for row in study.rows[route]]
    ax.loglog(ns, errs, marker=marker, label=f"{route} route")
ax.set_xlabel("interior slices N")
ax.set_ylabel("|amplitude - oracle|")
ax.set_title(f"oscillator propagator, T = {T}")
ax.grid(True, which="both", alpha=0.3)
ax.legend()
out = os.path.join(os.path.dirname(os.path.abspath(__file__)),
                   "03_convergence.png")
fig.tight_layout()
fig.savefig(out, dpi=150)
print(f"\nwrote {out}")
