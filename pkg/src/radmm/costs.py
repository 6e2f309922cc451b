"""Local objectives: value/gradient/Hessian, proximal maps, reference solver.

Every cost exposes the proximal map in *penalty form*,

    prox(sigma, v) = argmin_y { f(y) + (sigma/2) ||y - v||^2 },    sigma > 0,

i.e. ``sigma`` is the coefficient of the quadratic proximity term (the
reciprocal of the usual penalty-parameter convention). Proximal evaluations
accept a single point ``(n,)`` or a batch ``(n, B)`` and are exact to a fixed
first-order-residual tolerance, so fixed-point diagnostics downstream stay
meaningful.
"""

import numpy as np
from scipy.linalg import cho_factor, cho_solve

PROX_TOL = 1e-12
NEWTON_MAX_ITER = 100


class NewtonNotConvergedError(RuntimeError):
    """An inner Newton solve did not reach tolerance within the budget."""


class LocalCost:
    """Interface of a node's objective.

    Subclasses provide ``value``, ``gradient``, ``hessian`` at a point
    ``(n,)``, and the strong-convexity modulus ``modulus`` (0 when merely
    convex). The generic ``prox`` solves the penalized problem by damped
    Newton; strongly structured families override it in closed form.
    """

    n = None
    modulus = 0.0

    def value(self, x):
        raise NotImplementedError

    def gradient(self, x):
        raise NotImplementedError

    def hessian(self, x):
        raise NotImplementedError

    def prox(self, sigma, v):
        if sigma <= 0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        v = np.asarray(v, dtype=float)
        if v.ndim == 1:
            return self._prox_newton(sigma, v)
        return np.stack(
            [self._prox_newton(sigma, v[:, b]) for b in range(v.shape[1])], axis=1
        )

    def _prox_newton(self, sigma, v):
        # minimize f(y) + sigma/2 ||y - v||^2; Hessian >= sigma I, so plain
        # Newton with Armijo backtracking is safe
        y = v.copy()
        tol = PROX_TOL * (1.0 + sigma * np.linalg.norm(v))
        for _ in range(NEWTON_MAX_ITER):
            grad = self.gradient(y) + sigma * (y - v)
            if np.linalg.norm(grad) <= tol:
                return y
            hess = self.hessian(y) + sigma * np.eye(self.n)
            step = np.linalg.solve(hess, -grad)
            phi = self.value(y) + 0.5 * sigma * np.dot(y - v, y - v)
            t = 1.0
            while t > 1e-14:
                cand = y + t * step
                phi_c = self.value(cand) + 0.5 * sigma * np.dot(cand - v, cand - v)
                if phi_c <= phi + 1e-4 * t * np.dot(grad, step):
                    break
                t *= 0.5
            y = y + t * step
        grad = self.gradient(y) + sigma * (y - v)
        if np.linalg.norm(grad) <= tol:
            return y
        raise NewtonNotConvergedError(
            f"prox Newton residual {np.linalg.norm(grad):.3e} > {tol:.3e} "
            f"after {NEWTON_MAX_ITER} iterations"
        )


class QuadraticCost(LocalCost):
    """f(x) = (1/2) x'Qx - <r, x> with symmetric positive definite Q.

    The proximal map is the linear solve ``(Q + sigma I) y = r + sigma v``;
    factorizations are cached per ``sigma``.
    """

    def __init__(self, Q, r):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if Q.shape[0] != Q.shape[1] or Q.shape[0] != r.shape[0]:
            raise ValueError("Q must be square and conformable with r")
        if not np.allclose(Q, Q.T):
            raise ValueError("Q must be symmetric")
        w = np.linalg.eigvalsh(Q)
        if w[0] <= 0:
            raise ValueError(f"Q must be positive definite (min eig {w[0]:.3e})")
        self.Q = Q
        self.r = r
        self.n = r.shape[0]
        self.modulus = float(w[0])
        self._chol = {}

    def value(self, x):
        return 0.5 * np.dot(x, self.Q @ x) - np.dot(self.r, x)

    def gradient(self, x):
        return self.Q @ x - self.r

    def hessian(self, x):
        return self.Q

    def minimizer(self):
        return np.linalg.solve(self.Q, self.r)

    def prox(self, sigma, v):
        if sigma <= 0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        v = np.asarray(v, dtype=float)
        if sigma not in self._chol:
            self._chol[sigma] = cho_factor(self.Q + sigma * np.eye(self.n))
        rhs = self.r.reshape(-1, *([1] * (v.ndim - 1))) + sigma * v
        return cho_solve(self._chol[sigma], rhs)


class QuarticCost(LocalCost):
    """Scalar f(x) = x^4/12 + q x^2/2 with curvature parameter q > 0.

    The Hessian is x^2 + q >= q, so the modulus is q. The proximal map solves
    the cubic y^3/3 + q y + sigma (y - v) = 0 by a vectorized Newton iteration
    (monotone cubic, unique root).
    """

    n = 1

    def __init__(self, q):
        if q <= 0:
            raise ValueError(f"q must be positive, got {q}")
        self.q = float(q)
        self.modulus = float(q)

    def value(self, x):
        x = float(np.asarray(x).reshape(()))
        return x**4 / 12.0 + self.q * x**2 / 2.0

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        return x**3 / 3.0 + self.q * x

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        return (x**2 + self.q).reshape(1, 1)

    def prox(self, sigma, v):
        if sigma <= 0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        v = np.asarray(v, dtype=float)
        y = v / (1.0 + self.q + sigma)  # damped start, exact for the q-part
        tol = PROX_TOL * (1.0 + sigma * np.abs(v))
        for _ in range(NEWTON_MAX_ITER):
            g = y**3 / 3.0 + self.q * y + sigma * (y - v)
            if np.all(np.abs(g) <= tol):
                return y
            y = y - g / (y**2 + self.q + sigma)
        g = y**3 / 3.0 + self.q * y + sigma * (y - v)
        if np.all(np.abs(g) <= tol):
            return y
        raise NewtonNotConvergedError("quartic prox Newton did not converge")


def random_quadratic(n, cond, seed):
    """Random SPD quadratic with eigenvalues spread over [1, cond].

    The orthogonal frame comes from a sign-fixed QR of a Gaussian matrix, so
    the cost is bit-reproducible given ``seed``.
    """
    rng = np.random.default_rng(seed)
    eigs = np.logspace(0.0, np.log10(cond), n) if n > 1 else np.ones(1)
    G = rng.normal(size=(n, n))
    U, R = np.linalg.qr(G)
    U = U * np.sign(np.diag(R))
    Q = (U * eigs) @ U.T
    Q = 0.5 * (Q + Q.T)
    r = rng.normal(size=n)
    return QuadraticCost(Q, r)


def centralized_solve(costs, x0=None, tol_scale=1e-12, max_iter=100):
    """Reference minimizer of ``sum_i f_i`` (the consensus target).

    All-quadratic instances are solved exactly via ``(sum Q_i) x = sum r_i``;
    otherwise a damped Newton iteration drives ``||sum grad f_i||`` below
    ``tol_scale * N``.
    """
    n = costs[0].n
    if any(c.n != n for c in costs):
        raise ValueError("all costs must share the same dimension")
    if all(isinstance(c, QuadraticCost) for c in costs):
        Q = sum(c.Q for c in costs)
        r = sum(c.r for c in costs)
        return np.linalg.solve(Q, r)

    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    tol = tol_scale * len(costs)
    for _ in range(max_iter):
        grad = sum(c.gradient(x) for c in costs)
        if np.linalg.norm(grad) <= tol:
            return x
        hess = sum(c.hessian(x) for c in costs)
        step = np.linalg.solve(hess, -grad)
        val = sum(c.value(x) for c in costs)
        t = 1.0
        while t > 1e-14:
            cand = x + t * step
            if sum(c.value(cand) for c in costs) <= val + 1e-4 * t * np.dot(grad, step):
                break
            t *= 0.5
        x = x + t * step
    grad = sum(c.gradient(x) for c in costs)
    if np.linalg.norm(grad) <= tol:
        return x
    raise NewtonNotConvergedError(
        f"centralized Newton residual {np.linalg.norm(grad):.3e} > {tol:.3e}"
    )


def costs_from_spec(spec, num_nodes):
    """Build the per-node cost list from a JSON-style specification.

    Supported forms::

        {"type": "quadratic", "Q": [[...]], "r": [...]}       # same cost at every node
        {"type": "quartic", "q": 1.0}
        {"type": "random_quadratic", "n": 5, "cond": 10, "seed": 3}

    Random quadratics draw one independent cost per node from seeds derived
    from ``(seed, node)``.
    """
    kind = spec["type"]
    if kind == "quadratic":
        c = QuadraticCost(np.array(spec["Q"], dtype=float), np.array(spec["r"], dtype=float))
        return [c] * num_nodes
    if kind == "quartic":
        return [QuarticCost(spec["q"]) for _ in range(num_nodes)]
    if kind == "random_quadratic":
        seed = spec.get("seed", 0)
        return [
            random_quadratic(spec["n"], spec.get("cond", 10.0), np.random.SeedSequence([seed, i]))
            for i in range(num_nodes)
        ]
    raise ValueError(f"unknown cost type {kind!r}")
