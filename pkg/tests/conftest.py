import numpy as np
import pytest

from netlod.coarse_space import CoarseSpace
from netlod.generators import FiberConfig, gen_fiber_network
from netlod.network import SpatialNetwork
from netlod.operators import assemble_mass, assemble_weighted_laplacian, random_edge_weights
from netlod.partition import Partition, gonzalez_partition

# 198 nodes after refinement; small enough for dense oracles
SMALL_FIBER = FiberConfig(n_lines=150, line_length=0.2, seed=1, max_edge_length=0.07)
TINY_FIBER = FiberConfig(n_lines=120, line_length=0.25, seed=0, max_edge_length=0.08)


def line_net(xs, dirichlet=(0,), boundary=None):
    """Path graph with nodes at positions ``xs`` on the x-axis."""
    xs = np.asarray(xs, float)
    n = len(xs)
    coords = np.column_stack([xs, np.zeros(n)])
    edges = np.column_stack([np.arange(n - 1), np.arange(1, n)])
    d = np.zeros(n, bool)
    d[list(dirichlet)] = True
    b = None
    if boundary is not None:
        b = np.zeros(n, bool)
        b[list(boundary)] = True
    return SpatialNetwork(coords, edges, d, b)


def grid_net(k, dirichlet_boundary=True):
    """``k x k`` unit-spaced grid scaled to the unit square."""
    ii, jj = np.meshgrid(np.arange(k), np.arange(k))
    coords = np.column_stack([ii.ravel(), jj.ravel()]) / (k - 1)
    idx = lambda i, j: j * k + i  # noqa: E731
    e = [(idx(i, j), idx(i + 1, j)) for j in range(k) for i in range(k - 1)]
    e += [(idx(i, j), idx(i, j + 1)) for j in range(k - 1) for i in range(k)]
    bnd = np.any((coords == 0) | (coords == 1), axis=1)
    if dirichlet_boundary:
        d = bnd
    else:
        d = np.zeros(k * k, bool)
        d[0] = True
    return SpatialNetwork(coords, np.array(e), d, bnd)


def labels_partition(net, labels, centers):
    return Partition(net, np.asarray(labels), np.asarray(centers))


@pytest.fixture
def p3():
    return line_net([0.0, 1.0, 3.0])


@pytest.fixture
def unit_p3():
    return line_net([0.0, 1.0, 2.0])


@pytest.fixture
def unit_p5():
    return line_net([0.0, 1.0, 2.0, 3.0, 4.0])


@pytest.fixture
def p5_split(unit_p5):
    return labels_partition(unit_p5, [0, 0, 0, 1, 1], [0, 4])


@pytest.fixture(scope="session")
def small_fiber():
    return gen_fiber_network(SMALL_FIBER)


@pytest.fixture(scope="session")
def tiny_fiber():
    return gen_fiber_network(TINY_FIBER)


class Setup:
    """Network with weighted Laplacian, mass and a coarse space."""

    def __init__(self, net, N, seed=0, alpha=1.0):
        self.net = net
        self.alpha = alpha
        self.M = assemble_mass(net, alpha)
        self.weights = random_edge_weights(net, seed=seed)
        self.K = assemble_weighted_laplacian(net, alpha, self.weights)
        self.part = gonzalez_partition(net, N)
        self.cs = CoarseSpace(net, self.part, self.M)


@pytest.fixture(scope="session")
def small_setup(small_fiber):
    return Setup(small_fiber, 8)


@pytest.fixture(scope="session")
def tiny_setup(tiny_fiber):
    return Setup(tiny_fiber, 4)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.REPORT:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.REPORT, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
