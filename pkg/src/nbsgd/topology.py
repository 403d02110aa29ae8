"""Communication graphs, matching decompositions and Metropolis mixing matrices."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components


class TopologyError(ValueError):
    pass


class NumericalError(RuntimeError):
    pass


Edge = tuple[int, int]


@dataclass(frozen=True)
class Topology:
    num_workers: int
    edges: tuple[Edge, ...]
    matchings: tuple[tuple[Edge, ...], ...]
    connected: bool

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.num_workers, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.num_workers, self.num_workers), dtype=bool)
        for i, j in self.edges:
            adj[i, j] = adj[j, i] = True
        return adj


def _normalize_edges(P: int, edges) -> tuple[Edge, ...]:
    out = set()
    for e in edges:
        i, j = (int(v) for v in e)
        if i == j:
            raise TopologyError(f"self-loop at node {i}")
        if not (0 <= i < P and 0 <= j < P):
            raise TopologyError(f"edge ({i}, {j}) out of range for {P} workers")
        out.add((min(i, j), max(i, j)))
    return tuple(sorted(out))


def is_connected(P: int, edges) -> bool:
    if P <= 1:
        return True
    if not edges:
        return False
    rows, cols = zip(*edges)
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(P, P))
    n_comp, _ = connected_components(graph, directed=False)
    return n_comp == 1


def greedy_matchings(P: int, edges) -> tuple[tuple[Edge, ...], ...]:
    """Proper edge coloring: each edge takes the lowest color free at both endpoints."""
    used: list[set[int]] = [set() for _ in range(P)]
    colors: dict[int, list[Edge]] = {}
    for i, j in edges:
        c = 0
        while c in used[i] or c in used[j]:
            c += 1
        used[i].add(c)
        used[j].add(c)
        colors.setdefault(c, []).append((i, j))
    return tuple(tuple(colors[c]) for c in sorted(colors))


def make_topology(P: int, edges, *, require_connected: bool = True) -> Topology:
    if P < 2:
        raise TopologyError("need at least 2 workers")
    edges = _normalize_edges(P, edges)
    connected = is_connected(P, edges)
    if require_connected and not connected:
        raise TopologyError("graph is disconnected")
    return Topology(P, edges, greedy_matchings(P, edges), connected)


def build_graph(kind: str, P: int, *, p: float = 0.35, seed: int | None = None,
                edges=None, max_retries: int = 1000) -> Topology:
    """Build a connected base topology: ``ring``, ``complete``, ``erdos_renyi`` or ``edge_list``."""
    if P < 2:
        raise TopologyError("need at least 2 workers")
    if kind == "ring":
        return make_topology(P, [(i, (i + 1) % P) for i in range(P)])
    if kind == "complete":
        return make_topology(P, [(i, j) for i in range(P) for j in range(i + 1, P)])
    if kind == "edge_list":
        if edges is None:
            raise TopologyError("edge_list topology needs edges")
        return make_topology(P, edges)
    if kind == "erdos_renyi":
        if not 0 < p <= 1:
            raise TopologyError("erdos_renyi needs 0 < p <= 1")
        rng = np.random.default_rng(seed)
        pairs = [(i, j) for i in range(P) for j in range(i + 1, P)]
        for _ in range(max_retries):
            keep = rng.random(len(pairs)) < p
            chosen = [e for e, k in zip(pairs, keep) if k]
            if is_connected(P, chosen):
                return make_topology(P, chosen)
        raise TopologyError(f"no connected erdos_renyi({P}, {p}) graph in {max_retries} draws")
    raise TopologyError(f"unknown topology kind {kind!r}")


def load_edge_list(path: str | Path) -> list[Edge]:
    """Read ``i j`` pairs (0-indexed), one per line; blank lines and ``#`` comments skipped."""
    edges = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise TopologyError(f"{path}:{lineno}: expected 'i j', got {line!r}")
        try:
            edges.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise TopologyError(f"{path}:{lineno}: non-integer node id in {line!r}") from None
    return edges


@dataclass(frozen=True, eq=False)
class MixingMatrix:
    weights: np.ndarray

    @cached_property
    def spectral_rho(self) -> float:
        return spectral_gap(self)

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    def to_csv(self, path: str | Path) -> None:
        np.savetxt(path, self.weights, delimiter=",", fmt="%.17g")


def metropolis_weights(t: Topology, *, allow_disconnected: bool = False) -> MixingMatrix:
    """``W_ij = 1 / (1 + max(deg_i, deg_j))`` on edges, diagonal fills rows to one.

    Isolated nodes (only possible with ``allow_disconnected``) get an identity row.
    """
    if not t.connected and not allow_disconnected:
        raise TopologyError("metropolis_weights needs a connected topology")
    deg = t.degrees()
    w = np.zeros((t.num_workers, t.num_workers))
    for i, j in t.edges:
        w[i, j] = w[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
    np.fill_diagonal(w, 1.0 - w.sum(axis=1))
    return MixingMatrix(w)


def spectral_gap(w: MixingMatrix | np.ndarray, *, tol: float = 1e-10,
                 max_iter: int = 1_000_000, seed: int = 0) -> float:
    """Second-largest eigenvalue magnitude of a symmetric doubly stochastic W.

    Power iteration on ``(W - J/P)^2``: removing the consensus direction leaves
    rho^2 as the dominant eigenvalue, and squaring makes +rho and -rho agree.
    """
    weights = w.weights if isinstance(w, MixingMatrix) else np.asarray(w, dtype=float)
    P = weights.shape[0]
    deflated = weights - np.full((P, P), 1.0 / P)
    m = deflated @ deflated
    v = np.random.default_rng(seed).standard_normal(P)
    v -= v.mean()
    norm = np.linalg.norm(v)
    if norm == 0.0:
        return 0.0
    v /= norm
    for _ in range(max_iter):
        mv = m @ v
        mu = float(v @ mv)
        resid = np.linalg.norm(mv - mu * v)
        if resid <= tol:
            return float(np.sqrt(max(mu, 0.0)))
        nrm = np.linalg.norm(mv)
        if nrm <= tol:
            return 0.0
        v = mv / nrm
    raise NumericalError(f"power iteration did not reach residual {tol} in {max_iter} steps")


def sample_active_topology(t: Topology, budget_cb: float, rng: np.random.Generator | int | None) -> Topology:
    """Activate each matching independently with probability ``budget_cb``."""
    if not 0 < budget_cb <= 1:
        raise ValueError("budget_cb must lie in (0, 1]")
    if budget_cb == 1:
        return t
    rng = np.random.default_rng(rng)
    active = rng.random(len(t.matchings)) < budget_cb
    matchings = tuple(mt for mt, a in zip(t.matchings, active) if a)
    edges = tuple(sorted(e for mt in matchings for e in mt))
    return Topology(t.num_workers, edges, matchings, is_connected(t.num_workers, edges))
