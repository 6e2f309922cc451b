"""Random activation and packet-loss events driving the masked iteration.

Per iteration ``k`` every node activates independently (probability
``p_mu``) and every directed transmission ``j -> i`` is lost independently
(probability ``p_lambda``). Slot ``(i, j)`` is refreshed exactly when its
origin activated *and* the packet survived:

    beta[slot(i, j)] = active[j] and delivered[j -> i],

so within one iteration the betas sharing an origin are positively
correlated (they reuse that origin's activation draw), while draws at
distinct iterations are independent.

Draws come from a counter-based generator keyed by ``(seed, iteration)``:
any iteration's events can be regenerated in isolation, so replays are exact
and trial order is irrelevant.
"""

from dataclasses import dataclass

import numpy as np

# Counter stride per iteration (in 2^64-unit steps of the Philox counter);
# generously exceeds any per-iteration draw volume at desk scale.
_STRIDE = 1 << 20


class EventStream:
    """Random-access stream of per-iteration generators.

    Parameters
    ----------
    seed : int
        Base seed.
    trial : int, optional
        Extra key component giving each Monte Carlo trial its own stream.
    """

    def __init__(self, seed, trial=None):
        entropy = [int(seed)] if trial is None else [int(seed), int(trial)]
        self._key = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint64)

    def generator(self, k):
        """Generator positioned at iteration ``k`` (bit-reproducible)."""
        bg = np.random.Philox(key=self._key)
        bg.advance(int(k) * _STRIDE)
        return np.random.Generator(bg)


@dataclass
class LossModel:
    """Activation/loss probabilities, uniform or heterogeneous.

    ``p_mu`` is a scalar or per-node array of activation probabilities in
    (0, 1]; ``p_lambda`` is a scalar or per-slot array of loss probabilities
    in [0, 1), where entry ``slot(i, j)`` governs the transmission
    ``j -> i``. Every slot's refresh probability p_mu * (1 - p_lambda) must
    be positive.
    """

    p_mu: object
    p_lambda: object
    seed: int = 0

    def __post_init__(self):
        self.p_mu = np.asarray(self.p_mu, dtype=float)
        self.p_lambda = np.asarray(self.p_lambda, dtype=float)
        if np.any(self.p_mu <= 0) or np.any(self.p_mu > 1):
            raise ValueError("p_mu entries must lie in (0, 1]")
        if np.any(self.p_lambda < 0) or np.any(self.p_lambda >= 1):
            raise ValueError("p_lambda entries must lie in [0, 1)")

    @property
    def uniform(self):
        return self.p_mu.ndim == 0 and self.p_lambda.ndim == 0

    def node_activation(self, graph):
        """Per-node activation probabilities, broadcast to length N."""
        return np.broadcast_to(self.p_mu, (graph.num_nodes,))

    def slot_loss(self, graph):
        """Per-slot loss probabilities, broadcast to length M."""
        return np.broadcast_to(self.p_lambda, (graph.num_slots,))

    @classmethod
    def from_spec(cls, spec):
        """Parse ``{"type": "uniform"|"per_edge", "p_mu": ..., "p_lambda": ..., "seed": ...}``."""
        kind = spec.get("type", "uniform")
        if kind not in ("uniform", "per_edge"):
            raise ValueError(f"unknown loss model type {kind!r}")
        return cls(spec["p_mu"], spec["p_lambda"], spec.get("seed", 0))


@dataclass
class EventDraw:
    """Realized events of one iteration."""

    k: int
    active: np.ndarray     # (N,) bool, node activations
    delivered: np.ndarray  # (M,) bool, per-slot packet survival
    beta: np.ndarray       # (M,) bool, slot refresh indicators


def draw_events(model, graph, k, stream):
    """Draw iteration ``k``'s events; deterministic given (stream key, k)."""
    rng = stream.generator(k)
    active = rng.random(graph.num_nodes) < model.node_activation(graph)
    delivered = rng.random(graph.num_slots) >= model.slot_loss(graph)
    beta = active[graph.origin] & delivered
    return EventDraw(k=k, active=active, delivered=delivered, beta=beta)


def effective_beta_probability(model, graph, slot):
    """Exact refresh probability of one slot: p_mu(origin) * (1 - p_lambda(slot))."""
    return float(beta_probabilities(model, graph)[slot])


def beta_probabilities(model, graph):
    """Per-slot refresh probabilities as an (M,) vector."""
    p = model.node_activation(graph)[graph.origin] * (1.0 - model.slot_loss(graph))
    if np.any(p <= 0):
        raise ValueError("every slot needs positive refresh probability")
    return p
