import numpy as np
import pytest

from cohpath.states import Label, ModeSpace


@pytest.fixture
def rng():
    return np.random.default_rng(20260817)


@pytest.fixture
def mode_1r():
    """One reduced mode, no constraints."""
    return ModeSpace(0, 1)


@pytest.fixture
def mode_1c1r():
    """One constrained mode plus one reduced mode."""
    return ModeSpace(1, 1)


@pytest.fixture
def labels_1r(mode_1r):
    a = Label(mode_1r, z=[[-0.2, 0.5]])
    b = Label(mode_1r, z=[[0.4, -0.3]])
    return a, b


def random_label(space: ModeSpace, rng, scale: float = 1.0) -> Label:
    coords = rng.normal(scale=scale, size=(space.n_modes, 2))
    return Label.from_coords(space, coords)
