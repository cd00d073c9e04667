"""Covariate construction: posting-rhythm profiles, weighted network
centralities and standardization."""
from __future__ import annotations

import heapq
import math
import warnings
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

SCOPES = ("trap", "statespace", "occasion", "session", "trap_occasion")


@dataclass
class CovariateSurface:
    """A named numeric field on one index set.

    Shapes: trap (J,), statespace (G,) or (S, G), occasion (K,), session (S,),
    trap_occasion (J, K) or (S, J, K).
    """

    name: str
    scope: str
    values: np.ndarray
    standardized: bool = False
    mean: float = 0.0
    sd: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scope not in SCOPES:
            raise ValueError(f"unknown covariate scope {self.scope!r}")
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"covariate {self.name!r} has non-finite values")
        ndim_ok = {"trap": (1,), "statespace": (1, 2), "occasion": (1,), "session": (1,),
                   "trap_occasion": (2, 3)}[self.scope]
        if self.values.ndim not in ndim_ok:
            raise ValueError(f"covariate {self.name!r} with scope {self.scope} has shape {self.values.shape}")


def standardize(surface: CovariateSurface) -> CovariateSurface:
    """Centre and scale to unit sample standard deviation (ddof=1).

    The mean and sd are kept on the result so coefficients can be mapped back
    to the raw scale.
    """
    v = surface.values
    if np.unique(v).size < 2:
        raise ValueError(f"degenerate covariate {surface.name!r}: fewer than two distinct values")
    mean = float(v.mean())
    sd = float(v.std(ddof=1))
    return CovariateSurface(surface.name, surface.scope, (v - mean) / sd, True, mean, sd,
                            dict(surface.meta, sd_convention="sample (n-1)"))


# ---------------------------------------------------------------------------
# posting rhythm


def tweetogram(user_ids, timestamps, utc_offset_hours: float = 0.0, window_start=None,
               n_days: int | None = None, bin_hours: float = 1.0, per_day: bool = False) -> np.ndarray:
    """Per-user-normalized posting activity profile.

    For each local day every user's post counts are divided by that user's
    total for the day, then averaged over the users active that day. Days are
    then averaged into a single profile (``per_day=False``, shape (B,)) or
    returned individually (shape (D, B)). Each day's profile sums to one.

    ``timestamps`` are epoch seconds; bins are taken in local time given by
    ``utc_offset_hours``. ``window_start`` is the epoch second of the first
    local midnight; by default the local midnight preceding the first post.
    """
    ts = np.asarray(timestamps, dtype=float)
    users = np.asarray([str(u) for u in user_ids])
    if ts.size != users.size:
        raise ValueError("user ids and timestamps differ in length")
    if ts.size == 0:
        raise ValueError("no post events")
    bins_per_day = 24.0 / bin_hours
    if abs(bins_per_day - round(bins_per_day)) > 1e-9:
        raise ValueError("bin width must divide 24 hours")
    bins_per_day = int(round(bins_per_day))
    local = ts + utc_offset_hours * 3600.0
    if window_start is None:
        start_local = math.floor(local.min() / 86400.0) * 86400.0
    else:
        start_local = float(window_start) + utc_offset_hours * 3600.0
    if n_days is None:
        n_days = int(math.floor((local.max() - start_local) / 86400.0)) + 1
    if n_days < 1:
        raise ValueError("window must cover at least one full day")

    rel = local - start_local
    inside = (rel >= 0) & (rel < n_days * 86400.0)
    outside_users = set(users[~inside]) - set(users[inside])
    if outside_users:
        warnings.warn(f"{len(outside_users)} users have no posts in the window and are excluded", stacklevel=2)
    rel, users = rel[inside], users[inside]
    day = (rel // 86400.0).astype(int)
    slot = ((rel - day * 86400.0) // (bin_hours * 3600.0)).astype(int)

    profiles = np.zeros((n_days, bins_per_day))
    for d in range(n_days):
        on_day = day == d
        if not on_day.any():
            continue
        counts = defaultdict(lambda: np.zeros(bins_per_day))
        for u, b in zip(users[on_day], slot[on_day]):
            counts[u][b] += 1.0
        acc = np.zeros(bins_per_day)
        for u in sorted(counts):
            f = counts[u]
            acc += f / f.sum()
        profiles[d] = acc / len(counts)
    if per_day:
        return profiles
    active = profiles.sum(axis=1) > 0
    return profiles[active].mean(axis=0)


# ---------------------------------------------------------------------------
# weighted centralities


@dataclass
class WeightedGraph:
    """Undirected graph; edge weights are positive lengths (metres)."""

    nodes: list[str]
    edges: list[tuple[str, str, float]]

    def __post_init__(self):
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError("node ids are not unique")
        idx = {n: i for i, n in enumerate(self.nodes)}
        self._adj: list[dict[int, float]] = [dict() for _ in self.nodes]
        for u, v, w in self.edges:
            if u == v:
                raise ValueError(f"self-loop at node {u!r}")
            if not w > 0:
                raise ValueError(f"edge {u!r}-{v!r} has non-positive weight {w}")
            if u not in idx or v not in idx:
                raise ValueError(f"edge {u!r}-{v!r} references an unknown node")
            a, b = idx[u], idx[v]
            if b in self._adj[a]:
                raise ValueError(f"duplicate edge {u!r}-{v!r}")
            self._adj[a][b] = float(w)
            self._adj[b][a] = float(w)

    @classmethod
    def from_edges(cls, edges):
        edges = [(str(u), str(v), float(w)) for u, v, w in edges]
        nodes = sorted({u for u, _, _ in edges} | {v for _, v, _ in edges})
        return cls(nodes, edges)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def neighbours(self, i: int) -> dict[int, float]:
        return self._adj[i]


def weighted_degree(g: WeightedGraph, alpha: float) -> np.ndarray:
    """k^(1-alpha) * s^alpha, with k the edge count and s the summed weight."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    out = np.zeros(g.n_nodes)
    for i in range(g.n_nodes):
        nb = g.neighbours(i)
        if not nb:
            continue
        k = len(nb)
        s = math.fsum(nb.values())
        out[i] = k ** (1 - alpha) * s ** alpha
    return out


def _costs(g: WeightedGraph, alpha: float, invert: bool):
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    sign = -1.0 if invert else 1.0
    return [{j: w ** (sign * alpha) for j, w in g.neighbours(i).items()} for i in range(g.n_nodes)]


def _dijkstra(costs, source):
    """Single-source shortest paths with path counts and predecessor lists."""
    n = len(costs)
    dist = [math.inf] * n
    sigma = [0.0] * n
    preds: list[list[int]] = [[] for _ in range(n)]
    order = []
    dist[source] = 0.0
    sigma[source] = 1.0
    heap = [(0.0, source)]
    done = [False] * n
    while heap:
        d, v = heapq.heappop(heap)
        if done[v]:
            continue
        done[v] = True
        order.append(v)
        for w, c in sorted(costs[v].items()):
            nd = d + c
            tol = 1e-12 * max(1.0, nd)
            if nd < dist[w] - tol:
                dist[w] = nd
                sigma[w] = sigma[v]
                preds[w] = [v]
                heapq.heappush(heap, (nd, w))
            elif abs(nd - dist[w]) <= tol and not done[w]:
                sigma[w] += sigma[v]
                preds[w].append(v)
    return dist, sigma, preds, order


def weighted_shortest_paths(g: WeightedGraph, alpha: float, invert_weights: bool = False) -> np.ndarray:
    """All-pairs shortest path costs with edge cost weight**alpha (inf when unreachable)."""
    costs = _costs(g, alpha, invert_weights)
    out = np.empty((g.n_nodes, g.n_nodes))
    for s in range(g.n_nodes):
        out[s] = _dijkstra(costs, s)[0]
    return out


def _source_chunk(costs, sources):
    n = len(costs)
    between = np.zeros(n)
    far = np.zeros(n)
    for s in sources:
        dist, sigma, preds, order = _dijkstra(costs, s)
        far[s] = math.fsum(d for d in dist if math.isfinite(d))
        delta = [0.0] * n
        for w in reversed(order):
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                between[w] += delta[w]
    return between, far


def _centrality_sums(g, alpha, invert, workers, chunk=64):
    costs = _costs(g, alpha, invert)
    chunks = [range(a, min(a + chunk, g.n_nodes)) for a in range(0, g.n_nodes, chunk)]
    if workers and workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda c: _source_chunk(costs, c), chunks))
    else:
        parts = [_source_chunk(costs, c) for c in chunks]
    between = np.zeros(g.n_nodes)
    far = np.zeros(g.n_nodes)
    # fixed chunk order keeps the reduction independent of worker count
    for b, f in parts:
        between += b
        far += f
    return between, far


def weighted_betweenness(g: WeightedGraph, alpha: float, invert_weights: bool = False, workers: int = 1) -> np.ndarray:
    """Sum over unordered node pairs of the share of shortest paths through each node."""
    between, _ = _centrality_sums(g, alpha, invert_weights, workers)
    return between / 2.0


def weighted_closeness(g: WeightedGraph, alpha: float, invert_weights: bool = False, workers: int = 1) -> np.ndarray:
    """Inverse total shortest-path cost to reachable nodes; nan for nodes that reach nothing."""
    _, far = _centrality_sums(g, alpha, invert_weights, workers)
    with np.errstate(divide="ignore"):
        out = np.where(far > 0, 1.0 / np.where(far > 0, far, 1.0), np.nan)
    return out


def centralities(g: WeightedGraph, alpha: float, invert_weights: bool = False, workers: int = 1) -> dict[str, np.ndarray]:
    between, far = _centrality_sums(g, alpha, invert_weights, workers)
    close = np.full(g.n_nodes, np.nan)
    close[far > 0] = 1.0 / far[far > 0]
    return {"degree": weighted_degree(g, alpha), "betweenness": between / 2.0, "closeness": close}
