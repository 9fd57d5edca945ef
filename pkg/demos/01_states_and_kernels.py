"""Tour of the state layer: labels, overlaps, and the reproducing kernel.

Run from the repository root:

    python3 demos/01_states_and_kernels.py

Everything here is exact-arithmetic-small: a couple of phase-space
labels, their overlap kernel, and the two quadrature identities that
make the kernel "reproducing" — the resolution of the identity and the
position-space cross-check.
"""

import numpy as np

from cohpath.quadrature import AxisSpec, QuadratureGrid
from cohpath.states import (
    FiducialSpec,
    Label,
    ModeSpace,
    coherent_wavefunction,
    fiducial_moment,
    overlap,
    resolution_residual,
)

# One unconstrained mode at hbar = 1.  Labels are phase-space points:
# z rows are (p, q) pairs for the physical sector.
space = ModeSpace(n_constrained=0, n_reduced=1, hbar=1.0)
a = Label(space, z=[[-0.2, 0.5]])
b = Label(space, z=[[0.4, -0.3]])

print("== basic kernel values ==")
print(f"<a|a>            = {overlap(a, a):+.12f}   (normalized)")
print(f"<a|b>            = {overlap(a, b):+.12f}")
print(f"conj(<b|a>)      = {np.conj(overlap(b, a)):+.12f}   (Hermitian symmetry)")
print(f"|<a|b>|          = {abs(overlap(a, b)):.12f}   (< 1: distinct states)")

# The fiducial is physically centered: odd moments vanish, and the
# second moments carry the width/hbar scaling.
print("\n== fiducial moments ==")
for power in (1, 2, 4):
    mq = fiducial_moment(space, "position", power)
    mp = fiducial_moment(space, "momentum", power)
    print(f"<Q^{power}> = {mq:<8g} <P^{power}> = {mp:<8g}")
wide = FiducialSpec([2.0])
print(f"width-2 fiducial: <Q^2> = {fiducial_moment(space, 'position', 2, fiducial=wide)},"
      f" <P^2> = {fiducial_moment(space, 'momentum', 2, fiducial=wide)}")

# Resolution of the identity: integrating |x><x| over phase space with
# the flat measure reproduces the overlap.  The second number is the
# boundary shell's share — watch it, not just the residual, when
# shrinking grids.
print("\n== resolution of the identity ==")
for extent, step in ((8.0, 0.05), (4.0, 0.05), (2.0, 0.05)):
    axis = AxisSpec.from_step(-extent, extent, step)
    residual, boundary = resolution_residual(a, b, QuadratureGrid([axis, axis]))
    print(f"extent +-{extent:>3}: residual {residual:.3e}   boundary share {boundary:.3e}")

# Position-space cross-check: the same overlap from the wavefunctions.
axis = AxisSpec.from_step(-10.0, 10.0, 0.01)
xs = axis.nodes()[:, None]
quad = np.sum(np.conj(coherent_wavefunction(a, xs)) * coherent_wavefunction(b, xs)
              * axis.weights())
print("\n== wavefunction quadrature ==")
print(f"grid integral    = {quad:+.12f}")
print(f"overlap          = {overlap(a, b):+.12f}")
print(f"difference       = {abs(quad - overlap(a, b)):.3e}")
