"""Deterministic tensor-product trapezoid grids.

Shared by the brute-force oracle, the resolution-of-identity checks and
the sliced-propagator quadrature route.  Everything here is exact
bookkeeping: nodes, weights, boundary shells, and a fixed-order pairwise
summation so results do not depend on how work happens to be chunked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BudgetError, PreconditionError

__all__ = ["AxisSpec", "QuadratureGrid", "tree_sum"]

MAX_AXES = 8
MAX_POINTS = 1 << 22


def tree_sum(values: np.ndarray):
    """Sum with a fixed pairwise reduction order.

    The order is a function of the element count only, so any
    partitioning of the same array (e.g. across workers) reproduces the
    identical floating-point result by summing leaves in index order.
    """
    values = np.asarray(values).reshape(-1)
    if values.size == 0:
        return values.dtype.type(0)
    work = values
    while work.size > 1:
        half = work.size // 2
        head = work[: 2 * half]
        work = np.concatenate([head[0::2] + head[1::2], work[2 * half :]])
    return work[0]


@dataclass(frozen=True)
class AxisSpec:
    """One quadrature axis: ``num`` evenly spaced nodes on [lo, hi].

    Trapezoid weights (h/2 at the ends, h inside).  A degenerate
    single-node axis keeps unit weight — point evaluation — so that a
    collapsed grid reports its true residual instead of a silent zero.
    """

    lo: float
    hi: float
    num: int

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise PreconditionError("axis endpoints must be finite")
        if self.num < 1:
            raise PreconditionError("axis needs at least one node")
        if self.num > 1 and not self.hi > self.lo:
            raise PreconditionError("axis needs hi > lo for more than one node")

    @classmethod
    def from_step(cls, lo: float, hi: float, step: float) -> "AxisSpec":
        if not step > 0:
            raise PreconditionError("step must be positive")
        num = int(round((hi - lo) / step)) + 1
        return cls(lo, lo + (num - 1) * step, num)

    def nodes(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.num)

    def weights(self) -> np.ndarray:
        if self.num == 1:
            return np.ones(1)
        h = (self.hi - self.lo) / (self.num - 1)
        w = np.full(self.num, h)
        w[0] = w[-1] = h / 2.0
        return w


class QuadratureGrid:
    """Tensor product of :class:`AxisSpec` axes, enumerated in C order.

    Refuses to build more than ``MAX_AXES`` axes or ``MAX_POINTS`` total
    nodes; both the budget and the request appear in the error message.
    """

    def __init__(self, axes):
        axes = tuple(axes)
        if len(axes) == 0:
            raise PreconditionError("grid needs at least one axis")
        if len(axes) > MAX_AXES:
            raise BudgetError(
                f"grid has {len(axes)} axes, budget is {MAX_AXES}: "
                "reduce the dimension or integrate analytically"
            )
        total = 1
        for ax in axes:
            total *= ax.num
        if total > MAX_POINTS:
            raise BudgetError(
                f"grid would enumerate {total} nodes, budget is {MAX_POINTS}: "
                "coarsen an axis or shrink the extents"
            )
        self.axes = axes
        self.num_points = total

    @classmethod
    def uniform(cls, ndim: int, lo: float, hi: float, step: float) -> "QuadratureGrid":
        return cls([AxisSpec.from_step(lo, hi, step)] * ndim)

    @property
    def ndim(self) -> int:
        return len(self.axes)

    def nodes(self) -> np.ndarray:
        """All grid nodes, shape (num_points, ndim)."""
        mesh = np.meshgrid(*[ax.nodes() for ax in self.axes], indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=-1)

    def weights(self) -> np.ndarray:
        """Tensor trapezoid weights, shape (num_points,)."""
        out = np.ones(1)
        for ax in self.axes:
            out = np.multiply.outer(out, ax.weights()).reshape(-1)
        return out

    def boundary_mask(self) -> np.ndarray:
        """True where any axis sits at its first or last node (multi-node axes only)."""
        masks = []
        for ax in self.axes:
            m = np.zeros(ax.num, dtype=bool)
            if ax.num > 1:
                m[0] = m[-1] = True
            masks.append(m)
        out = np.zeros(1, dtype=bool)
        for m in masks:
            out = (out[:, None] | m[None, :]).reshape(-1)
        return out

    def integrate(self, values: np.ndarray):
        """Weighted fixed-order sum of per-node values."""
        values = np.asarray(values).reshape(-1)
        if values.shape[0] != self.num_points:
            raise PreconditionError(
                f"got {values.shape[0]} values for {self.num_points} nodes"
            )
        return tree_sum(values * self.weights())
