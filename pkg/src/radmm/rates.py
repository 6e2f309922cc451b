"""Spectral convergence-rate machinery for the linearized iteration.

For twice-differentiable strongly convex costs, around the consensus optimum
``x*`` the auxiliary update linearizes to ``z <- T z + u`` with

    H = blockdiag(rho d_i I_n + hess f_i(x*)),
    T = (1 - alpha) I - alpha P + 2 alpha rho P A H^{-1} A',
    u = 2 alpha rho P A H^{-1} g,   g_i = hess f_i(x*) x* - grad f_i(x*).

``gamma_M``, the largest non-unit eigenvalue magnitude of T, bounds the
deterministic local rate. Note that T is *not* symmetric for any connected
graph with three or more nodes (slot (i, j) is driven by the origin's slots
(j, l) with no reciprocal coupling), and its spectrum may be complex; what
does hold is that all eigenvalues lie in the disk of radius alpha centered
at 1 - alpha, and that eigenvectors at eigenvalue 1 lie in ker(A').

Under masked updates with refresh indicators beta, the slotwise iteration is
``z <- [I - B (I - T)] z + B u`` with B = diag(beta_slot I_n). The mean-square
error evolves under the lifted operator

    L = E[T_hat (x) T_hat]
      = I(x)I - I(x)EB + I(x)EB T - EB(x)I + EB T(x)I + EBB (I-T)(x)(I-T),

where EB = E[B] and EBB = E[B (x) B] are diagonal. ``bar_gamma_M``, the
largest non-unit eigenvalue magnitude of L, is the theoretical mean rate
that the experiment harness compares against fitted empirical rates. With
row-major vectorization, ``L vec(D) = vec(E[T_hat D T_hat'])``.
"""

from dataclasses import dataclass

import numpy as np

from radmm.events import EventStream, beta_probabilities
from radmm.topology import build_matrices

TOL_ONE = 1e-9


class SingularHError(RuntimeError):
    """Defensive: the prox linearization matrix H was singular."""


class DimensionMismatchError(ValueError):
    """Operator assembly received inconsistently sized pieces."""


class InconsistentSystemError(RuntimeError):
    """u is not in range(I - T) beyond tolerance; the model is miswired."""


class EstimatorVarianceTooHighError(RuntimeError):
    """Monte Carlo moment estimate too noisy at the requested sample count."""


@dataclass
class RateModel:
    """Linearized-update data at the optimum."""

    graph: object
    n: int
    params: object
    mats: object          # TopologyMatrices (A, P)
    H: np.ndarray         # (nN, nN) blockdiag
    Hinv: np.ndarray
    g: np.ndarray         # (nN,) affine offset of the primal map
    T: np.ndarray         # (nM, nM)
    u: np.ndarray         # (nM,)
    eigenvalues: np.ndarray
    gamma_M: float
    eig_one_count: int
    zeta: float           # max_i 1 / (m_i + rho d_i), primal contraction factor
    tol_one: float = TOL_ONE


@dataclass
class RandomizedRateModel:
    """Lifted second-moment operator and its rate."""

    EB: np.ndarray        # (nM, nM) diagonal
    EBB: np.ndarray       # ((nM)^2,) diagonal entries of E[B (x) B]
    L: np.ndarray         # ((nM)^2, (nM)^2)
    eigenvalues: np.ndarray
    bar_gamma_M: float
    eig_one_count: int
    tol_one: float = TOL_ONE


def build_rate_model(graph, costs, p, x_star, tol_one=TOL_ONE):
    """Assemble H, T, u and the spectral quantities at ``x_star``."""
    n = costs[0].n
    N, M = graph.num_nodes, graph.num_slots
    mats = build_matrices(graph, n)
    H = np.zeros((n * N, n * N))
    Hinv = np.zeros_like(H)
    g = np.empty(n * N)
    for i in range(N):
        hess = costs[i].hessian(x_star)
        blk = p.rho * graph.degrees[i] * np.eye(n) + hess
        sl = slice(n * i, n * (i + 1))
        H[sl, sl] = blk
        if np.linalg.cond(blk) > 1e14:
            raise SingularHError(f"H block of node {i} is numerically singular")
        Hinv[sl, sl] = np.linalg.inv(blk)
        g[sl] = hess @ x_star - costs[i].gradient(x_star)

    A, P = mats.A, mats.P
    PAHinv = P @ A @ Hinv
    T = (1 - p.alpha) * np.eye(n * M) - p.alpha * P + (2 * p.alpha * p.rho) * (PAHinv @ A.T)
    u = (2 * p.alpha * p.rho) * (PAHinv @ g)

    w = np.linalg.eigvals(T)
    unit = np.abs(w - 1.0) <= tol_one
    nonunit = np.abs(w) < 1.0 - tol_one
    gamma_M = float(np.abs(w[nonunit]).max()) if nonunit.any() else 0.0
    zeta = max(1.0 / (costs[i].modulus + p.rho * graph.degrees[i]) for i in range(N))
    return RateModel(
        graph=graph, n=n, params=p, mats=mats, H=H, Hinv=Hinv, g=g, T=T, u=u,
        eigenvalues=w, gamma_M=gamma_M, eig_one_count=int(unit.sum()),
        zeta=zeta, tol_one=tol_one,
    )


def recover_primal(model, z):
    """Primal vector induced by an auxiliary vector: ``H^{-1}(A'z + g)``."""
    return model.Hinv @ (model.mats.A.T @ z + model.g)


def check_lemma2(model, mats=None, eigvec_tol=1e-8):
    """Spectral sanity report for T (carries failures, never raises).

    Checks that every eigenvalue lies in the closed unit disk (with
    unit-magnitude only at 1) and that eigenvectors at eigenvalue 1 are in
    ker(A'). Also reports the symmetry defect and largest imaginary part:
    T is asymmetric by construction, so these are diagnostics, not
    invariants.
    """
    mats = model.mats if mats is None else mats
    A = mats.A
    w, V = np.linalg.eig(model.T)
    unit = np.abs(w - 1.0) <= model.tol_one
    resid = 0.0
    for idx in np.nonzero(unit)[0]:
        v = V[:, idx]
        resid = max(resid, np.linalg.norm(A.T @ v) / np.linalg.norm(v))
    nonunit_abs = float(np.abs(w[~unit]).max()) if (~unit).any() else 0.0
    disk_ok = bool(np.abs(w).max() <= 1.0 + 1e-12)
    report = {
        "eig_one_count": int(unit.sum()),
        "max_nonunit_abs": nonunit_abs,
        "max_abs_eigenvalue": float(np.abs(w).max()),
        "spectrum_in_unit_disk": disk_ok,
        "max_unit_eigvec_residual": float(resid),
        "unit_eigvecs_in_kernel": bool(resid <= eigvec_tol),
        "symmetry_defect": float(np.linalg.norm(model.T - model.T.T)),
        "max_imag_part": float(np.abs(w.imag).max()),
        "spectrum_real_in_minus1_1": bool(
            np.abs(w.imag).max() <= 1e-12 and np.abs(w.real).max() <= 1.0 + 1e-12
        ),
    }
    report["pass"] = disk_ok and report["unit_eigvecs_in_kernel"]
    return report


def expected_B(model, graph, n):
    """E[B]: diagonal of per-slot refresh probabilities, n-expanded."""
    p = beta_probabilities(model, graph)
    return np.diag(np.repeat(p, n))


def expected_B_kron(model, graph, n, samples=10**6, se_tol=1e-3, chunk=10**5):
    """Diagonal entries of E[B (x) B] as an ((nM)^2,) vector.

    Uniform models use the closed form: for slots s1 = (i, j), s2 = (h, l),

        E[beta_s1 beta_s2] = p_beta              if s1 == s2,
                             p_beta^2 / p_mu     if j == l (shared origin),
                             p_beta^2            otherwise,

    since betas sharing an origin reuse that node's activation draw.
    Heterogeneous models fall back to Monte Carlo over structural event
    draws with the model's seed; per-entry standard errors above ``se_tol``
    raise :class:`EstimatorVarianceTooHighError`.
    """
    M = graph.num_slots
    if model.uniform:
        p_mu = float(model.p_mu)
        p_beta = p_mu * (1.0 - float(model.p_lambda))
        same_origin = graph.origin[:, None] == graph.origin[None, :]
        V = np.where(same_origin, p_beta**2 / p_mu, p_beta**2)
        np.fill_diagonal(V, p_beta)
    else:
        V = _mc_second_moment(model, graph, samples, se_tol, chunk)
    return np.repeat(np.repeat(V, n, axis=0), n, axis=1).reshape(-1)


def _mc_second_moment(model, graph, samples, se_tol, chunk):
    rng = EventStream(model.seed, trial=0x4D4F).generator(0)
    p_mu = model.node_activation(graph)
    p_lam = model.slot_loss(graph)
    M = graph.num_slots
    acc = np.zeros((M, M))
    done = 0
    while done < samples:
        s = min(chunk, samples - done)
        mu = rng.random((s, graph.num_nodes)) < p_mu
        dl = rng.random((s, M)) >= p_lam
        beta = (mu[:, graph.origin] & dl).astype(float)
        acc += beta.T @ beta
        done += s
    m2 = acc / samples
    se = np.sqrt(np.clip(m2 * (1.0 - m2), 0.0, None) / samples)
    if se.max() > se_tol:
        raise EstimatorVarianceTooHighError(
            f"max standard error {se.max():.2e} > {se_tol:.2e} at {samples} samples"
        )
    return m2


def build_L(model, EB, EBB, tol_one=None):
    """Assemble the lifted operator L and its rate ``bar_gamma_M``."""
    tol_one = model.tol_one if tol_one is None else tol_one
    T = model.T
    nM = T.shape[0]
    if EB.shape != (nM, nM):
        raise DimensionMismatchError(f"EB must be {(nM, nM)}, got {EB.shape}")
    if EBB.shape != (nM * nM,):
        raise DimensionMismatchError(f"EBB must be ({nM * nM},), got {EBB.shape}")
    eye = np.eye(nM)
    W = eye - T
    EBT = EB @ T
    L = (
        np.kron(eye, eye)
        - np.kron(eye, EB)
        + np.kron(eye, EBT)
        - np.kron(EB, eye)
        + np.kron(EBT, eye)
        + EBB[:, None] * np.kron(W, W)
    )
    w = np.linalg.eigvals(L)
    unit = np.abs(w - 1.0) <= tol_one
    bar = float(np.abs(w[~unit]).max()) if (~unit).any() else 0.0
    return RandomizedRateModel(
        EB=EB, EBB=EBB, L=L, eigenvalues=w, bar_gamma_M=bar,
        eig_one_count=int(unit.sum()), tol_one=tol_one,
    )


def randomized_rate(graph, costs, p, x_star, loss_model, **kron_kwargs):
    """Convenience: build T, EB, EBB and L in one call."""
    model = build_rate_model(graph, costs, p, x_star)
    EB = expected_B(loss_model, graph, model.n)
    EBB = expected_B_kron(loss_model, graph, model.n, **kron_kwargs)
    return model, build_L(model, EB, EBB)


def fixed_point_z(model):
    """Minimum-norm solution of ``(I - T) z = u`` (the affine fixed-point set).

    Raises :class:`InconsistentSystemError` when the least-squares residual
    shows u outside range(I - T), which would indicate a build bug.
    """
    nM = model.T.shape[0]
    zbar, *_ = np.linalg.lstsq(np.eye(nM) - model.T, model.u, rcond=None)
    resid = np.linalg.norm((np.eye(nM) - model.T) @ zbar - model.u)
    if resid > 1e-8 * (1.0 + np.linalg.norm(model.u)):
        raise InconsistentSystemError(
            f"fixed-point system residual {resid:.3e}; u not in range(I - T)"
        )
    return zbar


def lifted_action(rmodel, D):
    """Apply L to a matrix: row-major ``vec(E[T_hat D T_hat'])``."""
    nM = int(np.sqrt(rmodel.L.shape[0]))
    return (rmodel.L @ np.asarray(D, dtype=float).reshape(-1)).reshape(nM, nM)


def montecarlo_lifted_action(model, loss_model, D, samples=10**5, batches=50, seed=0):
    """Monte Carlo estimate of E[T_hat D T_hat'] with per-entry standard errors.

    Returns ``(mean, se)``; the exact counterpart is :func:`lifted_action`.
    Uses the closed form of the sandwich in the mask moments, so each batch
    costs one mask-matrix product.
    """
    graph, n = model.graph, model.n
    nM = model.T.shape[0]
    D = np.asarray(D, dtype=float)
    W = np.eye(nM) - model.T
    U = W @ D
    V = D @ W.T
    K = W @ D @ W.T
    p_mu = loss_model.node_activation(graph)
    p_lam = loss_model.slot_loss(graph)
    rng = EventStream(seed, trial=0xACC).generator(0)
    per_batch = samples // batches
    ests = np.empty((batches, nM, nM))
    for b in range(batches):
        mu = rng.random((per_batch, graph.num_nodes)) < p_mu
        dl = rng.random((per_batch, graph.num_slots)) >= p_lam
        beta = np.repeat((mu[:, graph.origin] & dl).astype(float), n, axis=1)
        mb = beta.mean(axis=0)
        m2 = beta.T @ beta / per_batch
        ests[b] = D - mb[:, None] * U - V * mb[None, :] + m2 * K
    mean = ests.mean(axis=0)
    se = ests.std(axis=0, ddof=1) / np.sqrt(batches)
    return mean, se


def observable_mean_rate(model, p_beta, visibility_tol=1e-8):
    """Largest non-unit |1 - p_beta (1 - lambda)| over primal-visible modes of T.

    T's eigenvectors inside ker(A') never reach the primal error
    x - x* = H^{-1} A'(z - zbar); in particular the exact modes at 1 - 2 alpha
    (kernel vectors fixed by the swap P) are invisible. Fitted trajectory
    rates track this visible-mode quantity, which can be strictly smaller
    than the all-mode ``bar_gamma_M`` when an invisible mode dominates.
    """
    w, V = np.linalg.eig(model.T)
    A = model.mats.A
    best = 0.0
    for i in range(w.size):
        if np.abs(w[i] - 1.0) <= model.tol_one:
            continue
        v = V[:, i]
        if np.linalg.norm(A.T @ v) / np.linalg.norm(v) < visibility_tol:
            continue
        best = max(best, float(np.abs(1.0 - p_beta * (1.0 - w[i]))))
    return best


def rate_report(model, rmodel=None, lemma2=None):
    """JSON-serializable summary of the spectral analysis."""
    lemma2 = check_lemma2(model) if lemma2 is None else lemma2
    rep = {
        "gamma_M": model.gamma_M,
        "eig_one_count": model.eig_one_count,
        "zeta": model.zeta,
        "lemma2_pass": lemma2["pass"],
        "lemma2": lemma2,
        "spectrum_T": [[float(v.real), float(v.imag)] for v in model.eigenvalues],
    }
    if rmodel is not None:
        top = sorted(rmodel.eigenvalues, key=lambda v: -abs(v))[:10]
        rep.update(
            {
                "bar_gamma_M": rmodel.bar_gamma_M,
                "sqrt_bar_gamma_M": float(np.sqrt(rmodel.bar_gamma_M)),
                "eig_one_count_L": rmodel.eig_one_count,
                "top_eigs_L": [[float(v.real), float(v.imag)] for v in top],
            }
        )
    return rep
