"""Shared instance builders for the test suite."""

import numpy as np

from radmm.core import Params
from radmm.costs import QuadraticCost, centralized_solve, random_quadratic
from radmm.topology import Graph


def random_connected_graph(rng, n_min=3, n_max=10, extra_max=4):
    """Random connected graph: a random spanning tree plus extra edges.

    Covers trees (no extra edges) through dense graphs, so downstream
    spectral code sees every cycle-rank regime.
    """
    N = int(rng.integers(n_min, n_max + 1))
    edges = set()
    perm = rng.permutation(N)
    for idx in range(1, N):
        j = perm[idx]
        i = perm[rng.integers(0, idx)]
        edges.add((min(i, j), max(i, j)))
    possible = [(i, j) for i in range(N) for j in range(i + 1, N)
                if (i, j) not in edges]
    extra = int(rng.integers(0, extra_max + 1))
    if extra and possible:
        for idx in rng.choice(len(possible), size=min(extra, len(possible)),
                              replace=False):
            edges.add(possible[idx])
    return Graph(N, sorted(edges))


def random_quadratic_instance(rng, n=None, n_min=3, n_max=10, extra_max=4,
                              alpha=None, rho=None, cond=10.0):
    """(graph, costs, x_star, params, n) with per-node random SPD quadratics."""
    graph = random_connected_graph(rng, n_min, n_max, extra_max)
    n = int(rng.integers(1, 3)) if n is None else n
    costs = [
        random_quadratic(n, cond, np.random.SeedSequence([int(rng.integers(2**31)), i]))
        for i in range(graph.num_nodes)
    ]
    x_star = centralized_solve(costs)
    p = Params(
        alpha=float(rng.uniform(0.15, 0.95)) if alpha is None else alpha,
        rho=float(rng.uniform(0.1, 10.0)) if rho is None else rho,
    )
    return graph, costs, x_star, p, n


def scalar_quadratic(a):
    """f(x) = (x - a)^2 / 2 as a 1-d quadratic cost."""
    return QuadraticCost(np.array([[1.0]]), np.array([float(a)]))


def cycle_rank(graph):
    return len(graph.edges) - graph.num_nodes + 1
