"""Q-valued functions sampled on graphs and regular grids.

Lipschitz constants are always the edgewise estimate
``max G(u(p), u(q)) / |p - q|`` over adjacency edges.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import ConvexHull
from scipy.spatial.distance import pdist

from .polynomial import Polynomial
from .qpoints import QPoint, batch_distances, cost_matrix, optimal_matching


class AmbiguousBranch(ValueError):
    """Branches cannot be told apart locally, so no per-branch derivative exists."""


class DecompositionError(RuntimeError):
    """A split licensed by the gap test failed its post-conditions on the samples."""


class _NotSeparated:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __bool__(self) -> bool:
        return False

    def __repr__(self) -> str:
        return "NotSeparated"


#: Returned by :func:`decompose` when the gap test fails.
NotSeparated = _NotSeparated()


def grid_edges(shape: Sequence[int]) -> np.ndarray:
    """Axis-neighbour edges of a C-ordered grid."""
    idx = np.arange(int(np.prod(shape))).reshape(shape)
    edges = []
    for ax in range(len(shape)):
        a = np.take(idx, range(shape[ax] - 1), axis=ax).ravel()
        b = np.take(idx, range(1, shape[ax]), axis=ax).ravel()
        edges.append(np.stack([a, b], axis=1))
    if not edges:
        return np.zeros((0, 2), int)
    return np.concatenate(edges).astype(int)


def grid_points(axes: Sequence[Sequence[float]]) -> np.ndarray:
    mesh = np.meshgrid(*[np.asarray(a, float) for a in axes], indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


class SampledQField:
    """One Q-point per vertex of a connected adjacency graph in R^m."""

    def __init__(self, points, edges, samples: Sequence[QPoint], axes=None):
        points = np.asarray(points, float)
        if points.ndim == 1:
            points = points[:, None]
        edges = np.asarray(edges, int).reshape(-1, 2)
        samples = list(samples)
        if len(samples) != len(points):
            raise ValueError("every domain point needs exactly one sample")
        if not samples:
            raise ValueError("empty field")
        Q, n = samples[0].Q, samples[0].n
        for s in samples:
            if s.Q != Q or s.n != n:
                raise ValueError("all samples must share Q and n")
        if len(edges) and (edges.min() < 0 or edges.max() >= len(points)):
            raise ValueError("edge endpoint out of range")
        N = len(points)
        if N > 1:
            graph = coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(N, N))
            ncomp, _ = connected_components(graph, directed=False)
            if ncomp != 1:
                raise ValueError(f"adjacency graph has {ncomp} components, expected 1")
        self.points = points
        self.edges = edges
        self.samples = samples
        self.Q, self.n, self.m = Q, n, points.shape[1]
        self.axes = None if axes is None else [np.asarray(a, float) for a in axes]
        self._expanded = None
        self._neighbors = None

    @classmethod
    def on_grid(cls, axes, func: Callable[[np.ndarray], QPoint]) -> "SampledQField":
        axes = [np.asarray(a, float) for a in axes]
        pts = grid_points(axes)
        shape = [len(a) for a in axes]
        return cls(pts, grid_edges(shape), [func(p) for p in pts], axes=axes)

    @classmethod
    def from_sheets(cls, axes, sheets: Sequence[Callable], mults: Sequence[int] | None = None):
        """Grid field ``sum_l m_l [[g_l(p)]]`` from single-valued callables."""
        mults = list(mults) if mults is not None else [1] * len(sheets)

        def sample(p):
            vals = [np.atleast_1d(np.asarray(g(p), float)) for g in sheets]
            return QPoint(np.array(vals), mults)

        return cls.on_grid(axes, sample)

    @property
    def N(self) -> int:
        return len(self.points)

    @property
    def grid_shape(self) -> tuple[int, ...] | None:
        return None if self.axes is None else tuple(len(a) for a in self.axes)

    def __getitem__(self, k: int) -> QPoint:
        return self.samples[k]

    def expanded(self) -> np.ndarray:
        """``(N, Q, n)`` stack of expanded samples."""
        if self._expanded is None:
            arr = np.stack([s.expanded() for s in self.samples])
            arr.setflags(write=False)
            self._expanded = arr
        return self._expanded

    def edge_lengths(self) -> np.ndarray:
        d = self.points[self.edges[:, 0]] - self.points[self.edges[:, 1]]
        return np.sqrt(np.einsum("ij,ij->i", d, d))

    def edge_distances(self) -> np.ndarray:
        X = self.expanded()
        return batch_distances(X[self.edges[:, 0]], X[self.edges[:, 1]])

    def neighbors(self) -> list[list[int]]:
        if self._neighbors is None:
            nb: list[list[int]] = [[] for _ in range(self.N)]
            for a, b in self.edges:
                nb[a].append(int(b))
                nb[b].append(int(a))
            self._neighbors = [sorted(set(x)) for x in nb]
        return self._neighbors

    def with_samples(self, samples: Sequence[QPoint]) -> "SampledQField":
        return SampledQField(self.points, self.edges, samples, axes=self.axes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SampledQField):
            return NotImplemented
        return (
            np.array_equal(self.points, other.points)
            and np.array_equal(self.edges, other.edges)
            and self.samples == other.samples
        )

    def to_json(self) -> dict:
        if self.axes is not None:
            grid = {"axes": [a.tolist() for a in self.axes]}
        else:
            grid = {"points": self.points.tolist(), "edges": self.edges.tolist()}
        return {"grid": grid, "samples": [s.to_json() for s in self.samples]}

    @classmethod
    def from_json(cls, doc: dict) -> "SampledQField":
        grid = doc["grid"]
        if "axes" in grid:
            axes = [np.asarray(a, float) for a in grid["axes"]]
            points = grid_points(axes)
            edges = grid_edges([len(a) for a in axes])
        else:
            axes = None
            points = np.asarray(grid["points"], float)
            edges = np.asarray(grid.get("edges", []), int).reshape(-1, 2)
        if "samples" in doc:
            samples = [QPoint.from_json(s) for s in doc["samples"]]
        elif "sheets" in doc:
            polys = [Polynomial.from_json(s["poly"]) for s in doc["sheets"]]
            mults = [sheet_multiplicity(s) for s in doc["sheets"]]
            values = np.stack([p(points.reshape(len(points), -1)) for p in polys], axis=1)
            samples = [QPoint(values[k], mults) for k in range(len(points))]
        else:
            raise ValueError("field JSON needs 'samples' or 'sheets'")
        return cls(points, edges, samples, axes=axes)


def sheet_multiplicity(entry: dict) -> int:
    """Multiplicity of a ``{"poly": ..., "multiplicity": k}`` sheet entry (``mult``/``m`` accepted)."""
    for key in ("multiplicity", "mult", "m"):
        if key in entry:
            return int(entry[key])
    return 1


def lipschitz_estimate(u: SampledQField) -> float:
    """Edgewise Lipschitz surrogate of ``u``."""
    if len(u.edges) == 0:
        return 0.0
    lengths = u.edge_lengths()
    if np.any(lengths == 0):
        raise ValueError("zero-length edge in the adjacency graph")
    return float(np.max(u.edge_distances() / lengths))


def domain_diameter(points: np.ndarray) -> float:
    """Largest pairwise distance between sample points."""
    points = np.asarray(points, float)
    if len(points) < 2:
        return 0.0
    if points.shape[1] == 1:
        return float(points.max() - points.min())
    if len(points) > 2000:
        try:
            points = points[ConvexHull(points).vertices]
        except Exception:  # degenerate hull: fall through to the full scan
            pass
    return float(pdist(points).max())


def chain_clusters(vectors: np.ndarray, link: float) -> np.ndarray:
    """Labels of the transitive closure of ``|a - b| <= link``.

    Labels are numbered in order of each cluster's first member.
    """
    V = np.asarray(vectors, float)
    k = len(V)
    adj = cost_matrix(V, V) <= link * link
    _, raw = connected_components(adj, directed=False)
    relabel: dict[int, int] = {}
    out = np.empty(k, dtype=int)
    for i, r in enumerate(raw):
        out[i] = relabel.setdefault(int(r), len(relabel))
    return out


def cluster_values(T: QPoint, h: float) -> list[QPoint]:
    """Split the support of ``T`` into chains whose links are at most 4h."""
    if h <= 0:
        raise ValueError("h must be positive")
    labels = chain_clusters(T.vectors, 4.0 * h)
    mults = np.asarray(T.mults)
    parts = []
    for lab in range(labels.max() + 1):
        sel = labels == lab
        parts.append(QPoint(T.vectors[sel], mults[sel].tolist()))
    return parts


def _bfs_order(u: SampledQField, root: int) -> list[tuple[int, int]]:
    """(parent, child) pairs of a breadth-first spanning tree."""
    nb = u.neighbors()
    seen = {root}
    queue = deque([root])
    order = []
    while queue:
        p = queue.popleft()
        for q in nb[p]:
            if q not in seen:
                seen.add(q)
                order.append((p, q))
                queue.append(q)
    return order


def decompose(u: SampledQField, p0: int, i: int, j: int):
    """Split ``u`` in two when atoms ``i`` and ``j`` of ``u(p0)`` are far apart.

    Returns ``(u1, u2)`` where ``u1`` carries the cluster of atom ``i``, or
    :data:`NotSeparated` when ``|u_i(p0) - u_j(p0)| <= 3 (Q-1) Lip diam``.
    """
    if not 0 <= p0 < u.N:
        raise IndexError(f"p0={p0} out of range")
    T0 = u.samples[p0]
    k = len(T0.mults)
    if not (0 <= i < k and 0 <= j < k):
        raise IndexError(f"atom indices must lie in [0, {k})")
    if i == j:
        raise IndexError("i and j must index distinct atoms")

    ell = lipschitz_estimate(u)
    diam = domain_diameter(u.points)
    gap = float(np.linalg.norm(T0.vectors[i] - T0.vectors[j]))
    if not gap > 3.0 * (u.Q - 1) * ell * diam:
        return NotSeparated

    labels = chain_clusters(T0.vectors, 3.0 * ell * diam)
    atom_in_first = labels == labels[i]
    X = u.expanded()
    flags = np.zeros((u.N, u.Q), dtype=bool)
    flags[p0] = np.repeat(atom_in_first, T0.mults)
    for p, q in _bfs_order(u, p0):
        sigma = optimal_matching(X[p], X[q])
        flags[q, sigma] = flags[p]

    first, second = [], []
    for q in range(u.N):
        A, B = X[q][flags[q]], X[q][~flags[q]]
        if cost_matrix(A, B).min() == 0.0:
            raise DecompositionError(f"parts share an atom at sample {q}")
        first.append(QPoint(A))
        second.append(QPoint(B))
    u1, u2 = u.with_samples(first), u.with_samples(second)
    for part in (u1, u2):
        if lipschitz_estimate(part) > ell + 1e-9:
            raise DecompositionError("a part is less regular than the field")
    return u1, u2


@dataclass(frozen=True)
class SheetPiece:
    """Samples ``indices`` with ``branches[l, k]`` the l-th branch at ``indices[k]``."""

    indices: np.ndarray
    branches: np.ndarray


@dataclass(frozen=True)
class SheetSelection:
    pieces: list[SheetPiece]

    def piece_of(self) -> dict[int, int]:
        return {int(v): k for k, pc in enumerate(self.pieces) for v in pc.indices}

    def check(self, u: SampledQField, tol: float = 1e-9) -> list[str]:
        """Invariant violations (empty when the selection is valid)."""
        problems = []
        ell = lipschitz_estimate(u)
        owner = self.piece_of()
        if sorted(owner) != list(range(u.N)):
            problems.append("pieces do not partition the domain")
        for k, pc in enumerate(self.pieces):
            for col, v in enumerate(pc.indices):
                if QPoint(pc.branches[:, col]) != u.samples[v]:
                    problems.append(f"piece {k} does not reproduce sample {v}")
        position = {int(v): (owner[int(v)], c) for pc in self.pieces for c, v in enumerate(pc.indices)}
        for (a, b), length in zip(u.edges, u.edge_lengths()):
            (ka, ca), (kb, cb) = position[int(a)], position[int(b)]
            if ka != kb:
                continue
            br = self.pieces[ka].branches
            step = np.linalg.norm(br[:, ca] - br[:, cb], axis=1).max()
            if step / length > ell + tol:
                problems.append(f"branch slope {step / length} on edge ({a},{b}) exceeds {ell}")
        return problems


def select_sheets(u: SampledQField, rtol: float = 1e-12) -> SheetSelection:
    """Greedy branch propagation with cycle-consistency cuts."""
    X = u.expanded()
    nb = u.neighbors()
    owner = np.full(u.N, -1)
    perm = np.zeros((u.N, u.Q), dtype=int)
    pieces = []

    def consistent(r: int, q: int, cand: np.ndarray) -> bool:
        A, B = X[r][perm[r]], X[q][cand]
        labelled = float(np.sum((A - B) ** 2))
        sigma = optimal_matching(X[r], X[q])
        best = float(np.sum((X[r] - X[q][sigma]) ** 2))
        return labelled <= best + rtol * max(1.0, best)

    for seed in range(u.N):
        if owner[seed] >= 0:
            continue
        pid = len(pieces)
        owner[seed] = pid
        perm[seed] = np.arange(u.Q)
        members = [seed]
        queue = deque([seed])
        while queue:
            p = queue.popleft()
            for q in nb[p]:
                if owner[q] >= 0:
                    continue
                cand = optimal_matching(X[p][perm[p]], X[q])
                if all(consistent(r, q, cand) for r in nb[q] if owner[r] == pid):
                    owner[q] = pid
                    perm[q] = cand
                    members.append(q)
                    queue.append(q)
        idx = np.array(sorted(members))
        branches = np.stack([X[v][perm[v]] for v in idx], axis=1)
        pieces.append(SheetPiece(idx, branches))
    return SheetSelection(pieces)


def finite_difference_gradient(u: SampledQField, p) -> QPoint:
    """Per-branch central differences at an interior grid point.

    Returns a Q-point in R^{n*m}; each atom is the row-major flattening of an
    ``(n, m)`` derivative matrix.
    """
    if u.axes is None:
        raise ValueError("finite differences need a regular grid")
    shape = u.grid_shape
    multi = np.unravel_index(p, shape) if np.isscalar(p) else tuple(int(a) for a in p)
    for ax, k in enumerate(multi):
        if not 0 < k < shape[ax] - 1:
            raise ValueError("finite differences need an interior grid point")
    flat = int(np.ravel_multi_index(multi, shape))
    T = u.samples[flat]
    X = u.expanded()
    ell = lipschitz_estimate(u)

    steps = []
    for ax in range(u.m):
        a = u.axes[ax]
        steps.append(max(a[multi[ax] + 1] - a[multi[ax]], a[multi[ax]] - a[multi[ax] - 1]))
    step = max(steps)
    if len(T.mults) > 1:
        V = T.vectors
        gaps = [np.linalg.norm(V[a] - V[b]) for a, b in itertools.combinations(range(len(V)), 2)]
        if min(gaps) <= 2.0 * ell * step:
            raise AmbiguousBranch(f"atoms closer than 2*Lip*step = {2 * ell * step}")

    owner_row = np.repeat(np.arange(len(T.mults)), T.mults)
    grads = np.zeros((u.Q, u.n, u.m))
    for ax in range(u.m):
        plus, minus = list(multi), list(multi)
        plus[ax] += 1
        minus[ax] -= 1
        ip = int(np.ravel_multi_index(plus, shape))
        im = int(np.ravel_multi_index(minus, shape))
        matched = []
        for nbr in (ip, im):
            sigma = optimal_matching(X[flat], X[nbr])
            vals = X[nbr][sigma]
            for atom in range(len(T.mults)):
                group = vals[owner_row == atom]
                if np.any(np.abs(group - group[0]) > 1e-12 * max(1.0, np.abs(group).max())):
                    raise AmbiguousBranch("coincident branches separate at a neighbour")
            matched.append(vals)
        dx = u.axes[ax][plus[ax]] - u.axes[ax][minus[ax]]
        grads[:, :, ax] = (matched[0] - matched[1]) / dx
    return QPoint(grads.reshape(u.Q, u.n * u.m))


def sampled_field_from_polynomials(points, edges, polys: Sequence[Polynomial], mults, axes=None):
    """Sample ``sum_l m_l [[g_l]]`` at ``points``."""
    points = np.asarray(points, float)
    values = np.stack([g(points) for g in polys], axis=1)
    samples = [QPoint(values[k], mults) for k in range(len(points))]
    return SampledQField(points, edges, samples, axes=axes)


def field_norm(u: SampledQField) -> float:
    """max_p |u(p)| = max_p G(u(p), Q[[0]])."""
    X = u.expanded()
    return float(math.sqrt(np.max(np.einsum("kqn,kqn->k", X, X))))
