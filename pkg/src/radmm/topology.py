"""Communication graph and the structural matrices of the edge-based splitting.

The solver state keeps one auxiliary variable per *directed edge slot*
``(i, j)``: the slot is owned by node ``i`` and is fed by packets from the
neighbor ``j``. Slots are ordered canonically by owner ascending, then by
neighbor ascending, so that owner blocks are contiguous. Every module in the
package (solver, event masks, rate analysis) indexes per-edge state through
this ordering.

Two structural matrices are derived from a graph:

* ``A`` (nM x nN): row block of slot ``(i, j)`` selects the owner's ``x_i``;
* ``P`` (nM x nM): permutation swapping slot ``(i, j)`` with ``(j, i)``.
"""

import json

import numpy as np


class GraphError(ValueError):
    """Invalid graph construction input."""


class SelfLoopError(GraphError):
    """An edge (i, i) was supplied."""


class DuplicateEdgeError(GraphError):
    """The same undirected edge was supplied twice."""


class DisconnectedError(GraphError):
    """The graph is not connected."""


class ConnectivityRetriesExceededError(GraphError):
    """No connected random geometric graph found within the attempt budget."""


class Graph:
    """Undirected connected graph with the canonical directed-slot ordering.

    Parameters
    ----------
    num_nodes : int
        Number of nodes ``N >= 2``; nodes are labeled ``0 .. N-1``.
    edges : iterable of pairs
        Undirected edges; self-loops and duplicates are rejected.

    Attributes
    ----------
    num_nodes : int
    edges : list of tuple
        Normalized edge list (``i < j``, sorted).
    neighbors : list of list
        Sorted adjacency lists.
    degrees : ndarray
        Node degrees ``d_i``.
    num_slots : int
        ``M = 2 |edges|``, the number of directed slots.
    slots : list of tuple
        Slot ``k`` is the ordered pair ``(owner, neighbor)``.
    slot_index : dict
        Maps ``(i, j)`` to its slot id.
    owner, origin : ndarray
        Per-slot owner ``i`` and packet origin ``j``.
    mirror : ndarray
        ``mirror[slot(i, j)] = slot(j, i)``.
    owner_starts : ndarray
        Offsets of the contiguous owner blocks (degree prefix sums,
        length ``N + 1``).
    """

    def __init__(self, num_nodes, edges):
        if num_nodes < 2:
            raise GraphError(f"need at least 2 nodes, got {num_nodes}")
        norm = []
        seen = set()
        for i, j in edges:
            i, j = int(i), int(j)
            if not (0 <= i < num_nodes and 0 <= j < num_nodes):
                raise GraphError(f"edge ({i}, {j}) out of range for N={num_nodes}")
            if i == j:
                raise SelfLoopError(f"self-loop at node {i}")
            e = (min(i, j), max(i, j))
            if e in seen:
                raise DuplicateEdgeError(f"duplicate edge {e}")
            seen.add(e)
            norm.append(e)
        norm.sort()

        self.num_nodes = num_nodes
        self.edges = norm
        self.neighbors = [[] for _ in range(num_nodes)]
        for i, j in norm:
            self.neighbors[i].append(j)
            self.neighbors[j].append(i)
        for nb in self.neighbors:
            nb.sort()
        self.degrees = np.array([len(nb) for nb in self.neighbors], dtype=int)
        self.num_slots = int(self.degrees.sum())

        _check_connected(num_nodes, norm)

        self.slots = [(i, j) for i in range(num_nodes) for j in self.neighbors[i]]
        self.slot_index = {s: k for k, s in enumerate(self.slots)}
        self.owner = np.array([i for i, _ in self.slots], dtype=int)
        self.origin = np.array([j for _, j in self.slots], dtype=int)
        self.mirror = np.array(
            [self.slot_index[(j, i)] for i, j in self.slots], dtype=int
        )
        self.owner_starts = np.concatenate(([0], np.cumsum(self.degrees)))

    def slot(self, i, j):
        """Slot id of the ordered pair ``(i, j)``."""
        return self.slot_index[(i, j)]

    def __repr__(self):
        return f"Graph(N={self.num_nodes}, |E|={len(self.edges)})"

    def to_json(self):
        """Serialize as ``{"n_nodes": N, "edges": [[i, j], ...]}``."""
        return json.dumps(
            {"n_nodes": self.num_nodes, "edges": [list(e) for e in self.edges]}
        )

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(d["n_nodes"], [tuple(e) for e in d["edges"]])


class TopologyMatrices:
    """Dense structural matrices ``A`` and ``P`` for per-node dimension ``n``.

    ``A.T @ A == blockdiag(d_i * I_n)`` and ``P @ P == I`` hold exactly.
    """

    def __init__(self, graph, n):
        if n < 1:
            raise GraphError(f"per-node dimension must be >= 1, got {n}")
        self.graph = graph
        self.n = n
        N, M = graph.num_nodes, graph.num_slots
        A = np.zeros((n * M, n * N))
        P = np.zeros((n * M, n * M))
        eye = np.eye(n)
        for k in range(M):
            i = graph.owner[k]
            A[n * k : n * (k + 1), n * i : n * (i + 1)] = eye
            m = graph.mirror[k]
            P[n * k : n * (k + 1), n * m : n * (m + 1)] = eye
        self.A = A
        self.P = P


def build_graph(num_nodes, edges):
    """Build a :class:`Graph`, rejecting disconnected or malformed inputs."""
    return Graph(num_nodes, edges)


def build_matrices(graph, n):
    """Build the dense :class:`TopologyMatrices` for ``graph`` and dimension ``n``."""
    return TopologyMatrices(graph, n)


def complete_graph(num_nodes):
    """Complete graph on ``num_nodes`` nodes."""
    edges = [(i, j) for i in range(num_nodes) for j in range(i + 1, num_nodes)]
    return Graph(num_nodes, edges)


def random_geometric_graph(num_nodes, radius, seed, max_attempts=100):
    """Random geometric graph on the unit square, resampled until connected.

    Nodes are drawn uniformly in ``[0, 1]^2`` and joined when their Euclidean
    distance is at most ``radius``. The draw is deterministic given ``seed``;
    disconnected draws are retried up to ``max_attempts`` times.

    Raises
    ------
    ConnectivityRetriesExceededError
        If no connected draw is found within the budget.
    """
    if not 0 < radius <= np.sqrt(2):
        raise GraphError(f"radius must lie in (0, sqrt(2)], got {radius}")
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        pts = rng.random((num_nodes, 2))
        diff = pts[:, None, :] - pts[None, :, :]
        dist = np.sqrt((diff**2).sum(axis=2))
        ii, jj = np.nonzero(np.triu(dist <= radius, k=1))
        edges = list(zip(ii.tolist(), jj.tolist()))
        try:
            return Graph(num_nodes, edges)
        except DisconnectedError:
            continue
    raise ConnectivityRetriesExceededError(
        f"no connected geometric graph in {max_attempts} attempts "
        f"(N={num_nodes}, radius={radius}, seed={seed})"
    )


def _check_connected(num_nodes, edges):
    # union-find; rejects per-component consensus silently happening later
    parent = list(range(num_nodes))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
    roots = {find(i) for i in range(num_nodes)}
    if len(roots) > 1:
        raise DisconnectedError(
            f"graph has {len(roots)} connected components, expected 1"
        )
