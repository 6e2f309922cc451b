"""Edge-based relaxed consensus ADMM: one iteration as a pure state map.

State lives in a stacked primal vector ``x`` (one block per node) and a
stacked auxiliary vector ``z`` (one block per directed slot, in the canonical
slot ordering). A synchronous iteration is

    x_i  <- argmin_x { f_i(x) - <sum_j z_ij, x> + (rho d_i / 2) ||x||^2 }
          = prox_{f_i}(rho d_i, [A'z]_i / (rho d_i))
    q_{j->i} = -z_ji + 2 rho x_j                      (packet sent by j)
    z_ij <- (1 - alpha) z_ij + alpha q_{j->i}

where alpha is the relaxation and rho the penalty. The asynchronous variant
updates x only at activated nodes and slot (i, j) only when the packet from j
survives the loss mask. Both the vectorized steps and the explicit per-node
message-passing shadows below evaluate the packet expression with the same
floating-point operation order, so they agree bit for bit; the affine matrix
form (see :mod:`radmm.rates`) agrees to rounding.

Relaxations in (0, 1) with rho > 0 are the provably convergent regime;
larger relaxations are accepted for stability scans.
"""

import csv
from dataclasses import dataclass, field

import numpy as np


class NotNeighborsError(ValueError):
    """Packet requested between non-adjacent nodes."""


class MaskInconsistentError(ValueError):
    """A slot is marked updated although its packet origin was inactive."""


@dataclass(frozen=True)
class Params:
    """Relaxation ``alpha`` and penalty ``rho``.

    ``alpha`` in (0, 1) and ``rho > 0`` guarantee convergence; values
    ``alpha >= 1`` are accepted so stability boundaries can be scanned.
    """

    alpha: float
    rho: float

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")


@dataclass
class SolverState:
    """Stacked primal ``x`` (nN,), auxiliary ``z`` (nM,), iteration ``k``."""

    x: np.ndarray
    z: np.ndarray
    k: int = 0


@dataclass
class Packet:
    """Payload ``-z_ji + 2 rho x_j`` carried from ``origin`` j to ``destination`` i."""

    origin: int
    destination: int
    payload: np.ndarray


@dataclass
class LagrangianState:
    """State of the multiplier-based variant: primal ``x``, multipliers ``w``,
    bridge variables ``y`` (both per-slot, nM)."""

    x: np.ndarray
    w: np.ndarray
    y: np.ndarray
    k: int = 0


def initial_state(graph, n, z0=None, x0=None):
    """Zero-initialized state (overridable per experiment)."""
    N, M = graph.num_nodes, graph.num_slots
    z = np.zeros(n * M) if z0 is None else np.asarray(z0, dtype=float).copy()
    x = np.zeros(n * N) if x0 is None else np.asarray(x0, dtype=float).copy()
    if z.shape != (n * M,) or x.shape != (n * N,):
        raise ValueError("state dimensions inconsistent with graph and n")
    return SolverState(x=x, z=z, k=0)


def _owner_sums(zmat, graph):
    """Per-node sums of owned slots, accumulated in slot order.

    Sequential left-to-right accumulation keeps the message-passing shadow
    bit-identical.
    """
    out = np.empty((graph.num_nodes,) + zmat.shape[1:])
    for i in range(graph.num_nodes):
        a, b = graph.owner_starts[i], graph.owner_starts[i + 1]
        acc = zmat[a].copy()
        for k in range(a + 1, b):
            acc = acc + zmat[k]
        out[i] = acc
    return out


def primal_update(i, z, cost, graph, p):
    """Node ``i``'s minimizer given the auxiliary vector, via the prox form.

    Evaluates prox_{f_i}(rho d_i, [A'z]_i / (rho d_i)); the direct
    regularized minimization agrees with this to solver tolerance.
    """
    n = cost.n
    zmat = z.reshape(graph.num_slots, n)
    agg = _owner_sums(zmat, graph)[i]
    sigma = p.rho * graph.degrees[i]
    return cost.prox(sigma, agg / sigma)


def make_packet(j, i, state, graph, p, n):
    """Packet from ``j`` to its neighbor ``i``: ``-z_ji + 2 rho x_j``.

    ``state.x`` must already hold node ``j``'s fresh update.
    """
    if (j, i) not in graph.slot_index:
        raise NotNeighborsError(f"nodes {j} and {i} are not adjacent")
    s = graph.slot_index[(j, i)]
    z_ji = state.z[n * s : n * (s + 1)]
    x_j = state.x[n * j : n * (j + 1)]
    return Packet(origin=j, destination=i, payload=-z_ji + (2 * p.rho) * x_j)


def apply_packet(z_ij, payload, alpha):
    """Relaxed slot update ``(1 - alpha) z_ij + alpha q``."""
    return (1 - alpha) * z_ij + alpha * payload


def sync_step(state, costs, graph, p):
    """One synchronous iteration: all nodes update, all packets delivered."""
    n = costs[0].n
    M = graph.num_slots
    zmat = state.z.reshape(M, n)
    agg = _owner_sums(zmat, graph)
    x = np.empty_like(state.x)
    for i in range(graph.num_nodes):
        sigma = p.rho * graph.degrees[i]
        x[n * i : n * (i + 1)] = costs[i].prox(sigma, agg[i] / sigma)
    xmat = x.reshape(graph.num_nodes, n)
    q = -zmat[graph.mirror] + (2 * p.rho) * xmat[graph.origin]
    znew = (1 - p.alpha) * zmat + p.alpha * q
    return SolverState(x=x, z=znew.reshape(-1), k=state.k + 1)


def sync_step_message_passing(state, costs, graph, p):
    """Per-node shadow of :func:`sync_step` built from explicit packets.

    Bit-identical to the vectorized step; exercises that every slot update
    uses only data local to its two endpoints.
    """
    n = costs[0].n
    new = SolverState(x=state.x.copy(), z=state.z.copy(), k=state.k + 1)
    for i in range(graph.num_nodes):
        new.x[n * i : n * (i + 1)] = primal_update(i, state.z, costs[i], graph, p)
    inbox = {}
    for j in range(graph.num_nodes):
        for i in graph.neighbors[j]:
            inbox[(j, i)] = make_packet(j, i, SolverState(new.x, state.z, state.k), graph, p, n)
    for i in range(graph.num_nodes):
        for j in graph.neighbors[i]:
            s = graph.slot_index[(i, j)]
            pkt = inbox[(j, i)]
            new.z[n * s : n * (s + 1)] = apply_packet(
                state.z[n * s : n * (s + 1)], pkt.payload, p.alpha
            )
    return new


def async_step(state, costs, graph, p, beta_mask, active_mask):
    """One masked iteration: activated nodes update and transmit; slot
    ``(i, j)`` is refreshed only where ``beta_mask`` is set.

    ``beta_mask[slot(i, j)]`` requires ``active_mask[j]``: a slot can only be
    refreshed by a packet its origin actually produced. Inactive nodes keep
    their previous ``x`` (retained for error logging).
    """
    beta_mask = np.asarray(beta_mask, dtype=bool)
    active_mask = np.asarray(active_mask, dtype=bool)
    if beta_mask.shape != (graph.num_slots,) or active_mask.shape != (graph.num_nodes,):
        raise ValueError("mask shapes inconsistent with graph")
    bad = beta_mask & ~active_mask[graph.origin]
    if bad.any():
        s = int(np.nonzero(bad)[0][0])
        raise MaskInconsistentError(
            f"slot {graph.slots[s]} marked updated but origin {graph.origin[s]} inactive"
        )
    n = costs[0].n
    M = graph.num_slots
    zmat = state.z.reshape(M, n)
    agg = _owner_sums(zmat, graph)
    x = state.x.copy()
    for i in np.nonzero(active_mask)[0]:
        sigma = p.rho * graph.degrees[i]
        x[n * i : n * (i + 1)] = costs[i].prox(sigma, agg[i] / sigma)
    xmat = x.reshape(graph.num_nodes, n)
    q = -zmat[graph.mirror] + (2 * p.rho) * xmat[graph.origin]
    znew = np.where(
        beta_mask[:, None], (1 - p.alpha) * zmat + p.alpha * q, zmat
    )
    return SolverState(x=x, z=znew.reshape(-1), k=state.k + 1)


def async_step_message_passing(state, costs, graph, p, beta_mask, active_mask):
    """Per-node shadow of :func:`async_step` (bit-identical)."""
    n = costs[0].n
    beta_mask = np.asarray(beta_mask, dtype=bool)
    active_mask = np.asarray(active_mask, dtype=bool)
    bad = beta_mask & ~active_mask[graph.origin]
    if bad.any():
        s = int(np.nonzero(bad)[0][0])
        raise MaskInconsistentError(
            f"slot {graph.slots[s]} marked updated but origin {graph.origin[s]} inactive"
        )
    new = SolverState(x=state.x.copy(), z=state.z.copy(), k=state.k + 1)
    for i in np.nonzero(active_mask)[0]:
        new.x[n * i : n * (i + 1)] = primal_update(i, state.z, costs[i], graph, p)
    for i in range(graph.num_nodes):
        for j in graph.neighbors[i]:
            s = graph.slot_index[(i, j)]
            if not beta_mask[s]:
                continue
            pkt = make_packet(j, i, SolverState(new.x, state.z, state.k), graph, p, n)
            new.z[n * s : n * (s + 1)] = apply_packet(
                state.z[n * s : n * (s + 1)], pkt.payload, p.alpha
            )
    return new


def fixed_point_residual(state, costs, graph, p):
    """``||z_after_one_synchronous_step - z||_inf``; zero exactly on the
    fixed-point set of the deterministic update."""
    return float(np.abs(sync_step(state, costs, graph, p).z - state.z).max())


# -- multiplier-based variant (independent cross-check of the operator form) --

def lagrangian_step(state, costs, graph, p):
    """One iteration of the augmented-multiplier form.

    Three stages: regularized local minimization for ``x``; multiplier update
    ``w``; bridge averaging ``y_ij = (x_i + x_j)/2 - (w_ij + w_ji)/(2 rho)``,
    which enforces ``y_ij = y_ji`` by construction. At ``alpha = 1/2`` the
    correction terms vanish and the classical consensus ADMM is recovered.
    """
    n = costs[0].n
    N, M = graph.num_nodes, graph.num_slots
    a, rho = p.alpha, p.rho
    x, w, y = state.x, state.w, state.y
    wmat = w.reshape(M, n)
    ymat = y.reshape(M, n)
    xmat = x.reshape(N, n)

    coef = wmat + (2 * a * rho) * ymat - (rho * (2 * a - 1)) * xmat[graph.owner]
    csum = _owner_sums(coef, graph)
    xnew = np.empty_like(x)
    for i in range(N):
        sigma = rho * graph.degrees[i]
        xnew[n * i : n * (i + 1)] = costs[i].prox(sigma, csum[i] / sigma)
    xnmat = xnew.reshape(N, n)

    wnew = (
        wmat
        - (rho * (2 * a - 1)) * (xmat[graph.owner] - ymat)
        - rho * (xnmat[graph.owner] - ymat)
    )
    ynew = 0.5 * (xnmat[graph.owner] + xnmat[graph.origin]) - (
        wnew + wnew[graph.mirror]
    ) / (2 * rho)
    return LagrangianState(
        x=xnew, w=wnew.reshape(-1), y=ynew.reshape(-1), k=state.k + 1
    )


def matched_z0(lag_state, graph, p, n):
    """Auxiliary initialization making the operator form track this state:
    ``z(0) = w(0) - rho (2 alpha - 1) (A x(0) - y(0)) + rho y(0)``."""
    xmat = lag_state.x.reshape(graph.num_nodes, n)
    ax = xmat[graph.owner].reshape(-1)
    return (
        lag_state.w
        - p.rho * (2 * p.alpha - 1) * (ax - lag_state.y)
        + p.rho * lag_state.y
    )


# -- reference runners and the per-trial trajectory log --

@dataclass
class TrajectoryLog:
    """Per-iteration diagnostics of a single trial."""

    rows: list = field(default_factory=list)  # (k, err_inf, err_2, z_residual)

    def append(self, k, err_inf, err_2, z_residual):
        self.rows.append((k, err_inf, err_2, z_residual))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["k", "err_inf", "err_2", "z_residual"])
            for k, ei, e2, zr in self.rows:
                wr.writerow([k, f"{ei:.17g}", f"{e2:.17g}", f"{zr:.17g}"])


def errors_vs(x, x_star, n):
    """(max_i ||x_i - x*||, ||x - x*||_2) for a stacked primal vector."""
    d = (x - np.tile(x_star, x.shape[0] // n)).reshape(-1, n)
    per_node = np.sqrt((d**2).sum(axis=1))
    return float(per_node.max()), float(np.linalg.norm(d))


def run_sync(costs, graph, p, num_iter, z0=None, x0=None, tol=None, x_star=None, log=None):
    """Run synchronous iterations until the residual stopping rule or budget.

    Stops early when ``fixed_point_residual <= tol`` (if ``tol`` is given).
    When ``log`` is a :class:`TrajectoryLog`, per-iteration errors against
    ``x_star`` and the auxiliary residual are recorded.
    """
    n = costs[0].n
    state = initial_state(graph, n, z0=z0, x0=x0)
    for _ in range(num_iter):
        new = sync_step(state, costs, graph, p)
        # displacement = residual of the pre-step state; cheap stopping rule
        resid = float(np.abs(new.z - state.z).max())
        if log is not None:
            ei, e2 = errors_vs(new.x, x_star, n)
            log.append(new.k, ei, e2, fixed_point_residual(new, costs, graph, p))
        state = new
        if tol is not None and resid <= tol:
            break
    return state


def run_async(costs, graph, p, num_iter, model, stream, z0=None, x0=None,
              tol=None, x_star=None, log=None):
    """Run masked iterations with events drawn from ``model`` via ``stream``.

    ``stream`` is an :class:`radmm.events.EventStream`; the draw at iteration
    ``k`` is random-access, so replays are exact.
    """
    from radmm.events import draw_events

    n = costs[0].n
    state = initial_state(graph, n, z0=z0, x0=x0)
    for it in range(num_iter):
        ev = draw_events(model, graph, state.k, stream)
        new = async_step(state, costs, graph, p, ev.beta, ev.active)
        if log is not None or tol is not None:
            resid = fixed_point_residual(new, costs, graph, p)
        else:
            resid = None
        if log is not None:
            ei, e2 = errors_vs(new.x, x_star, n)
            log.append(new.k, ei, e2, resid)
        state = new
        if tol is not None and resid <= tol:
            break
    return state
