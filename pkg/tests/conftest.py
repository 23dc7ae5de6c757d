import numpy as np
import pytest

from stickygraph.graph import build_graph
from stickygraph.paths import NONSTICKY, Path

SQRT2 = 2**0.5


@pytest.fixture
def sym3():
    """Three edges, uniform weights, sigma^2 = 2, no drift, eta = 1/2."""
    return build_graph({"n_edges": 3, "rho": [1 / 3] * 3, "eta": 0.5, "sigma": SQRT2, "drift": 0.0})


@pytest.fixture
def skew3():
    return build_graph({"n_edges": 3, "rho": [0.5, 0.3, 0.2], "eta": 0.5, "sigma": 1.0, "drift": 0.0})


@pytest.fixture
def jump_path():
    """Nonsticky path with one local-time jump of 0.2 at s = 0.5."""
    return Path(
        times=np.array([0.0, 0.25, 0.5, 0.75, 1.0]),
        edges=np.array([1, 1, 1, 2, 2]),
        xs=np.array([0.3, 0.2, 0.0, 0.1, 0.2]),
        ell=np.array([0.0, 0.0, 0.0, 0.2, 0.2]),
        kind=NONSTICKY,
    )
