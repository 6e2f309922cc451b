import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import scalar_quadratic
from radmm.costs import (
    LocalCost,
    NewtonNotConvergedError,
    QuadraticCost,
    QuarticCost,
    centralized_solve,
    costs_from_spec,
    random_quadratic,
)


class SoftplusCost(LocalCost):
    """Generic strongly convex C^2 cost exercising the Newton prox path."""

    n = 1
    modulus = 0.5

    def value(self, x):
        x = float(np.asarray(x).reshape(()))
        return np.logaddexp(0.0, x) + 0.25 * x**2

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        return 1.0 / (1.0 + np.exp(-x)) + 0.5 * x

    def hessian(self, x):
        x = np.asarray(x, dtype=float).reshape(())
        s = 1.0 / (1.0 + np.exp(-x))
        return np.array([[s * (1.0 - s) + 0.5]])


def quartic_prox_bisection(q, sigma, v, tol=1e-14):
    """Independent root finder for y^3/3 + q y + sigma (y - v) = 0."""

    def g(y):
        return y**3 / 3.0 + q * y + sigma * (y - v)

    lo, hi = -1.0 - abs(v), 1.0 + abs(v)
    while g(lo) > 0:
        lo *= 2
    while g(hi) < 0:
        hi *= 2
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if g(mid) <= 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_quadratic_prox_scalar_closed_form():
    a = 1.7
    c = scalar_quadratic(a)
    # minimizer is a fixed point of its own prox
    assert c.prox(0.8, np.array([a])) == pytest.approx(a, abs=1e-14)
    c0 = scalar_quadratic(0.0)
    assert c0.prox(1.0, np.array([2.0]))[0] == pytest.approx(1.0, abs=1e-15)
    # general closed form (a + sigma v) / (1 + sigma)
    for sigma, v in [(0.3, -1.2), (2.5, 4.0)]:
        assert c.prox(sigma, np.array([v]))[0] == pytest.approx(
            (a + sigma * v) / (1 + sigma), rel=1e-14
        )


def test_quadratic_prox_batch_matches_single():
    c = random_quadratic(3, 10, seed=0)
    V = np.random.default_rng(1).normal(size=(3, 7))
    batch = c.prox(2.0, V)
    for b in range(7):
        assert np.allclose(batch[:, b], c.prox(2.0, V[:, b]), atol=1e-14)


def test_quartic_prox_symmetric_zero():
    c = QuarticCost(1.0)
    assert c.prox(1.0, np.array([0.0]))[0] == 0.0


def test_quartic_prox_against_bisection():
    c = QuarticCost(1.0)
    got = float(c.prox(2.0, np.array([3.0]))[0])
    want = quartic_prox_bisection(1.0, 2.0, 3.0)
    assert got == pytest.approx(want, abs=1e-12)
    rng = np.random.default_rng(2)
    for _ in range(50):
        q, sigma, v = rng.uniform(0.1, 5), rng.uniform(0.1, 5), rng.normal() * 4
        got = float(QuarticCost(q).prox(sigma, np.array([v]))[0])
        assert got == pytest.approx(quartic_prox_bisection(q, sigma, v), abs=1e-11)


def test_prox_first_order_residual():
    rng = np.random.default_rng(3)
    costs = [random_quadratic(4, 10, seed=5), QuarticCost(0.7), SoftplusCost()]
    for c in costs:
        for _ in range(20):
            sigma = rng.uniform(0.05, 8.0)
            v = rng.normal(size=c.n) * 3
            y = c.prox(sigma, v)
            resid = np.linalg.norm(c.gradient(y) + sigma * (y - v))
            assert resid <= 1e-12 * (1 + sigma * np.linalg.norm(v))


def test_prox_newton_budget_error():
    class Stubborn(SoftplusCost):
        def gradient(self, x):  # lies: gradient never matches the objective
            return super().gradient(x) + 10.0

        def hessian(self, x):
            return np.array([[1e-18]])

    with pytest.raises(NewtonNotConvergedError):
        Stubborn().prox(1.0, np.array([0.0]))


@given(st.floats(0.05, 10), st.integers(0, 2**31 - 1))
@settings(max_examples=30, deadline=None)
def test_prox_firm_nonexpansive_and_contractive(sigma, seed):
    rng = np.random.default_rng(seed)
    for c in (random_quadratic(2, 10, seed=seed % 1000), QuarticCost(1.3)):
        u = rng.normal(size=c.n) * 3
        v = rng.normal(size=c.n) * 3
        du = np.linalg.norm(c.prox(sigma, u) - c.prox(sigma, v))
        dv = np.linalg.norm(u - v)
        assert du <= dv + 1e-12
        assert du <= dv / (1 + c.modulus / sigma) + 1e-10


def test_gradient_hessian_vs_finite_differences():
    rng = np.random.default_rng(4)
    for c in (random_quadratic(3, 10, seed=6), QuarticCost(2.0), SoftplusCost()):
        for _ in range(5):
            x = rng.normal(size=c.n)
            h = 1e-6
            g_fd = np.empty(c.n)
            H_fd = np.empty((c.n, c.n))
            for i in range(c.n):
                e = np.zeros(c.n)
                e[i] = h
                g_fd[i] = (c.value(x + e) - c.value(x - e)) / (2 * h)
                H_fd[:, i] = (c.gradient(x + e) - c.gradient(x - e)) / (2 * h)
            scale = 1 + np.linalg.norm(c.gradient(x))
            assert np.linalg.norm(c.gradient(x) - g_fd) / scale <= 1e-6
            hscale = 1 + np.linalg.norm(c.hessian(x))
            assert np.linalg.norm(c.hessian(x) - H_fd) / hscale <= 1e-6


def test_modulus_lower_bounds_hessian():
    rng = np.random.default_rng(5)
    for c in (random_quadratic(4, 10, seed=7), QuarticCost(0.9), SoftplusCost()):
        for _ in range(5):
            x = rng.normal(size=c.n) * 2
            w = np.linalg.eigvalsh(c.hessian(x))
            assert w[0] >= c.modulus - 1e-10


def test_centralized_two_scalar_quadratics_mean():
    a1, a2 = 0.4, 2.6
    x = centralized_solve([scalar_quadratic(a1), scalar_quadratic(a2)])
    assert x[0] == pytest.approx((a1 + a2) / 2, abs=1e-14)


def test_centralized_identical_quadratics():
    c = random_quadratic(3, 10, seed=8)
    x = centralized_solve([c] * 6)
    assert np.allclose(x, c.minimizer(), atol=1e-12)


def test_centralized_quartics_symmetric():
    x = centralized_solve([QuarticCost(1.0) for _ in range(10)])
    assert abs(x[0]) <= 1e-12


def test_centralized_mixed_newton_path():
    costs = [scalar_quadratic(1.0), SoftplusCost()]
    x = centralized_solve(costs)
    grad = sum(c.gradient(x) for c in costs)
    assert np.linalg.norm(grad) <= 1e-12 * len(costs)


def test_random_quadratic_structure():
    c = random_quadratic(5, 10, seed=9)
    w = np.linalg.eigvalsh(c.Q)
    assert w[0] == pytest.approx(1.0, rel=1e-10)
    assert w[-1] == pytest.approx(10.0, rel=1e-10)
    assert c.modulus == pytest.approx(1.0, rel=1e-10)
    c2 = random_quadratic(5, 10, seed=9)
    assert np.array_equal(c.Q, c2.Q) and np.array_equal(c.r, c2.r)


def test_costs_from_spec():
    cs = costs_from_spec({"type": "quadratic", "Q": [[2.0]], "r": [1.0]}, 3)
    assert len(cs) == 3 and cs[0].modulus == 2.0
    cs = costs_from_spec({"type": "quartic", "q": 0.5}, 4)
    assert all(isinstance(c, QuarticCost) for c in cs)
    cs = costs_from_spec({"type": "random_quadratic", "n": 2, "cond": 10, "seed": 3}, 4)
    assert len({id(c) for c in cs}) == 4
    assert not np.array_equal(cs[0].Q, cs[1].Q)
    cs2 = costs_from_spec({"type": "random_quadratic", "n": 2, "cond": 10, "seed": 3}, 4)
    assert np.array_equal(cs[2].Q, cs2[2].Q)
    with pytest.raises(ValueError):
        costs_from_spec({"type": "cubic"}, 2)
