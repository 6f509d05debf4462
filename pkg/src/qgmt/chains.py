"""Integer simplicial chains, the simplicial flat norm, and push-forwards.

A chain is a finite sum of oriented simplices embedded in R^d.  Simplices are
identified by their vertex coordinates (quantized at 1e-12), so two chains
that share geometry cancel or merge regardless of how they were built.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csr_matrix, hstack, identity

from .qpoints import QPoint, diameter
from .qfields import SampledQField, SheetSelection

#: Vertex coordinates closer than this are treated as the same vertex.
VERTEX_TOL = 1e-12
#: Simplices whose edge matrix has a singular value below this are degenerate.
DEGENERACY_TOL = 1e-12

VertexMap = Callable[[np.ndarray], np.ndarray]


class RefinementError(ValueError):
    """A Q-valued map is not affine on some simplex it is asked to push."""


def vertex_key(v: np.ndarray) -> tuple[int, ...]:
    return tuple(int(x) for x in np.rint(np.asarray(v, float) / VERTEX_TOL))


def permutation_sign(order: Sequence[int]) -> int:
    order = list(order)
    sign = 1
    for i in range(len(order)):
        while order[i] != i:
            j = order[i]
            order[i], order[j] = order[j], order[i]
            sign = -sign
    return sign


def simplex_volume(verts: np.ndarray) -> float:
    """m-dimensional volume of the simplex spanned by ``m + 1`` rows."""
    verts = np.asarray(verts, float)
    m = len(verts) - 1
    if m == 0:
        return 1.0
    E = verts[1:] - verts[0]
    gram = E @ E.T
    det = float(np.linalg.det(gram))
    return math.sqrt(max(det, 0.0)) / math.factorial(m)


def is_degenerate(verts: np.ndarray) -> bool:
    verts = np.asarray(verts, float)
    if len(verts) == 1:
        return False
    E = verts[1:] - verts[0]
    if len(E) > E.shape[1]:
        return True
    return float(np.linalg.svd(E, compute_uv=False)[-1]) <= DEGENERACY_TOL


class SimplicialChain:
    """Integer combination of oriented m-simplices in R^d, kept canonical.

    Canonical form sorts each simplex's vertices lexicographically (flipping
    the sign on odd permutations), merges equal simplices, and drops zero
    coefficients and degenerate simplices.
    """

    __slots__ = ("m", "d", "_terms")

    def __init__(self, m: int, d: int, terms: Iterable[tuple[np.ndarray, int]] = ()):
        self.m = int(m)
        self.d = int(d)
        acc: dict[tuple, list] = {}
        for verts, c in terms:
            c = int(c)
            if c == 0:
                continue
            verts = np.asarray(verts, float).reshape(self.m + 1, self.d)
            keys = [vertex_key(v) for v in verts]
            order = sorted(range(self.m + 1), key=lambda i: keys[i])
            skeys = tuple(keys[i] for i in order)
            if len(set(skeys)) < len(skeys):
                continue
            sverts = verts[order]
            if is_degenerate(sverts):
                continue
            sign = permutation_sign(order)
            if skeys in acc:
                acc[skeys][1] += sign * c
            else:
                acc[skeys] = [sverts + 0.0, sign * c]
        self._terms = {k: (v, c) for k, (v, c) in sorted(acc.items()) if c != 0}

    @classmethod
    def zero(cls, m: int, d: int) -> "SimplicialChain":
        return cls(m, d)

    @classmethod
    def simplex(cls, verts, c: int = 1) -> "SimplicialChain":
        verts = np.atleast_2d(np.asarray(verts, float))
        return cls(len(verts) - 1, verts.shape[1], [(verts, c)])

    @property
    def terms(self) -> list[tuple[np.ndarray, int]]:
        return [(v.copy(), c) for v, c in self._terms.values()]

    def keys(self) -> list[tuple]:
        return list(self._terms)

    def coefficient(self, key: tuple) -> int:
        return self._terms.get(key, (None, 0))[1]

    def __len__(self) -> int:
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def _check(self, other: "SimplicialChain") -> None:
        if (self.m, self.d) != (other.m, other.d):
            raise ValueError(f"chain shapes differ: {(self.m, self.d)} vs {(other.m, other.d)}")

    def __add__(self, other: "SimplicialChain") -> "SimplicialChain":
        self._check(other)
        return SimplicialChain(self.m, self.d, list(self._terms.values()) + list(other._terms.values()))

    def __neg__(self) -> "SimplicialChain":
        return SimplicialChain(self.m, self.d, [(v, -c) for v, c in self._terms.values()])

    def __sub__(self, other: "SimplicialChain") -> "SimplicialChain":
        return self + (-other)

    def __mul__(self, k: int) -> "SimplicialChain":
        return SimplicialChain(self.m, self.d, [(v, int(k) * c) for v, c in self._terms.values()])

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if not isinstance(other, SimplicialChain):
            return NotImplemented
        if (self.m, self.d) != (other.m, other.d):
            return False
        return {k: c for k, (_, c) in self._terms.items()} == {k: c for k, (_, c) in other._terms.items()}

    def __repr__(self) -> str:
        return f"SimplicialChain(m={self.m}, d={self.d}, terms={len(self._terms)})"

    def vertices(self) -> np.ndarray:
        seen: dict[tuple, np.ndarray] = {}
        for verts, _ in self._terms.values():
            for v in verts:
                seen.setdefault(vertex_key(v), v)
        return np.array([seen[k] for k in sorted(seen)]).reshape(-1, self.d)

    def to_json(self) -> dict:
        return {
            "m": self.m,
            "d": self.d,
            "terms": [{"verts": v.tolist(), "c": int(c)} for v, c in self._terms.values()],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "SimplicialChain":
        return cls(doc["m"], doc["d"], [(np.asarray(t["verts"], float), t["c"]) for t in doc["terms"]])


def boundary(P: SimplicialChain) -> SimplicialChain:
    """Alternating face sum."""
    if P.m < 1:
        raise ValueError("the boundary of a 0-chain is not defined here")
    faces = []
    for verts, c in P.terms:
        for i in range(P.m + 1):
            faces.append((np.delete(verts, i, axis=0), (-1) ** i * c))
    return SimplicialChain(P.m - 1, P.d, faces)


def mass(P: SimplicialChain) -> float:
    return float(sum(abs(c) * simplex_volume(v) for v, c in P.terms))


def pushforward(phi: VertexMap, P: SimplicialChain) -> SimplicialChain:
    """Image chain of a map that is affine on every simplex of ``P``.

    ``phi`` takes a ``(k, d)`` array of vertices and returns their images.
    """
    terms = [(np.atleast_2d(phi(v)), c) for v, c in P.terms]
    if not terms:
        return SimplicialChain.zero(P.m, P.d)
    d_out = terms[0][0].shape[1]
    return SimplicialChain(P.m, d_out, terms)


# ----------------------------------------------------------------------------
# complexes and the flat norm LP


class SimplicialComplex:
    """Face-closed set of simplices on a vertex list.

    Simplices are stored as increasing vertex-index tuples; that order fixes
    their orientation in the boundary matrices.
    """

    def __init__(self, vertices, simplices: Iterable[Sequence[int]], close: bool = True):
        self.vertices = np.asarray(vertices, float)
        if self.vertices.ndim == 1:
            self.vertices = self.vertices[:, None]
        self.d = self.vertices.shape[1]
        given = {tuple(sorted(int(i) for i in s)) for s in simplices}
        for s in given:
            if len(set(s)) != len(s):
                raise ValueError(f"simplex {s} repeats a vertex")
            if min(s) < 0 or max(s) >= len(self.vertices):
                raise ValueError(f"simplex {s} references a missing vertex")
        closed = set(given)
        for s in given:
            for k in range(1, len(s)):
                closed.update(itertools.combinations(s, k))
        if not close and closed != given:
            missing = sorted(closed - given)[:3]
            raise ValueError(f"complex is not closed under faces, e.g. {missing}")
        self.dim = max((len(s) - 1 for s in closed), default=-1)
        self.simplices: dict[int, list[tuple[int, ...]]] = {}
        self.index: dict[int, dict[tuple[int, ...], int]] = {}
        for k in range(self.dim + 1):
            sims = sorted(s for s in closed if len(s) == k + 1)
            self.simplices[k] = sims
            self.index[k] = {s: i for i, s in enumerate(sims)}
        self._vertex_lookup = {vertex_key(v): i for i, v in enumerate(self.vertices)}
        self._bmat: dict[int, csr_matrix] = {}

    def count(self, k: int) -> int:
        return len(self.simplices.get(k, []))

    def boundary_matrix(self, k: int) -> csr_matrix:
        """Integer matrix of the boundary from k-simplices to (k-1)-simplices."""
        if k not in self._bmat:
            rows, cols, vals = [], [], []
            for j, s in enumerate(self.simplices.get(k, [])):
                for i in range(k + 1):
                    face = s[:i] + s[i + 1:]
                    rows.append(self.index[k - 1][face])
                    cols.append(j)
                    vals.append((-1) ** i)
            self._bmat[k] = csr_matrix((vals, (rows, cols)), shape=(self.count(k - 1), self.count(k)), dtype=np.int64)
        return self._bmat[k]

    def volumes(self, k: int) -> np.ndarray:
        return np.array([simplex_volume(self.vertices[list(s)]) for s in self.simplices.get(k, [])])

    def chain_vector(self, T: SimplicialChain) -> np.ndarray:
        """Coefficients of ``T`` on the k-simplices of the complex."""
        if T.d != self.d:
            raise ValueError("chain and complex live in different ambient spaces")
        x = np.zeros(self.count(T.m), dtype=np.int64)
        for verts, c in T.terms:
            try:
                ids = [self._vertex_lookup[vertex_key(v)] for v in verts]
            except KeyError:
                raise ValueError("chain uses a vertex that is not in the complex") from None
            order = sorted(range(len(ids)), key=lambda i: ids[i])
            key = tuple(ids[i] for i in order)
            if key not in self.index.get(T.m, {}):
                raise ValueError(f"simplex {key} is not in the complex")
            x[self.index[T.m][key]] += permutation_sign(order) * c
        return x

    def chain_from_vector(self, k: int, x) -> SimplicialChain:
        x = np.asarray(x)
        terms = [(self.vertices[list(s)], int(c)) for s, c in zip(self.simplices.get(k, []), x) if c != 0]
        return SimplicialChain(k, self.d, terms)

    def fundamental_chain(self) -> SimplicialChain:
        """Top simplices oriented positively (ambient dimension == top dimension)."""
        k = self.dim
        if k != self.d:
            raise ValueError("fundamental chain needs a full-dimensional complex")
        terms = []
        for s in self.simplices[k]:
            V = self.vertices[list(s)]
            sign = 1 if np.linalg.det(V[1:] - V[0]) > 0 else -1
            terms.append((V, sign))
        return SimplicialChain(k, self.d, terms)

    def to_json(self) -> dict:
        sims = [list(s) for k in range(self.dim + 1) for s in self.simplices[k]]
        return {"vertices": self.vertices.tolist(), "simplices": sims}

    @classmethod
    def from_json(cls, doc: dict) -> "SimplicialComplex":
        return cls(doc["vertices"], doc["simplices"], close=False)

    @classmethod
    def from_chains(cls, chains: Iterable[SimplicialChain]) -> "SimplicialComplex":
        """Closure of every simplex appearing in ``chains``."""
        chains = list(chains)
        if not chains:
            raise ValueError("no chains given")
        lookup: dict[tuple, int] = {}
        coords: list[np.ndarray] = []
        sims = []
        for ch in chains:
            for verts, _ in ch.terms:
                ids = []
                for v in verts:
                    key = vertex_key(v)
                    if key not in lookup:
                        lookup[key] = len(coords)
                        coords.append(v)
                    ids.append(lookup[key])
                sims.append(ids)
        return cls(np.array(coords).reshape(-1, chains[0].d), sims)


def grid_complex(cells: int, dim: int, lo: float = 0.0, hi: float = 1.0) -> SimplicialComplex:
    """Kuhn triangulation of the cube ``[lo, hi]^dim`` with ``cells`` per axis."""
    ticks = np.linspace(lo, hi, cells + 1)
    shape = (cells + 1,) * dim
    mesh = np.meshgrid(*([ticks] * dim), indexing="ij")
    verts = np.stack([g.ravel() for g in mesh], axis=1)
    sims = []
    for corner in itertools.product(range(cells), repeat=dim):
        for perm in itertools.permutations(range(dim)):
            cur = list(corner)
            path = [np.ravel_multi_index(cur, shape)]
            for ax in perm:
                cur[ax] += 1
                path.append(np.ravel_multi_index(cur, shape))
            sims.append([int(p) for p in path])
    return SimplicialComplex(verts, sims)


@dataclass
class FlatNormResult:
    value: float
    R: np.ndarray
    S: np.ndarray
    integral: bool
    filling: SimplicialChain | None
    remainder: SimplicialChain | None


def simplicial_flat_norm(T: SimplicialChain, K: SimplicialComplex) -> FlatNormResult:
    """min mass(R) + mass(S) over T = R + dS inside K, as a linear program.

    Coefficients are relaxed to reals; ``integral`` reports whether the
    optimum found happens to be an integer chain.
    """
    t = K.chain_vector(T)
    m = T.m
    nR, nS = K.count(m), K.count(m + 1)
    volR = K.volumes(m)
    if nS == 0 or not np.any(t):
        value = float(np.abs(t) @ volR) if nR else 0.0
        return FlatNormResult(value, t.astype(float), np.zeros(nS), True, K.chain_from_vector(m + 1, np.zeros(nS, int)), T)
    volS = K.volumes(m + 1)
    B = K.boundary_matrix(m + 1).astype(float)
    I = identity(nR, format="csr")
    A_eq = hstack([I, -I, B, -B], format="csr")
    cost = np.concatenate([volR, volR, volS, volS])
    res = linprog(cost, A_eq=A_eq, b_eq=t.astype(float), bounds=(0, None), method="highs")
    if res.status != 0:  # pragma: no cover - the LP is always feasible (R = T)
        raise RuntimeError(f"flat norm LP failed: {res.message}")
    x = res.x
    R = x[:nR] - x[nR:2 * nR]
    S = x[2 * nR:2 * nR + nS] - x[2 * nR + nS:]
    integral = bool(np.allclose(R, np.rint(R), atol=1e-9) and np.allclose(S, np.rint(S), atol=1e-9))
    filling = K.chain_from_vector(m + 1, np.rint(S).astype(int)) if integral else None
    remainder = K.chain_from_vector(m, np.rint(R).astype(int)) if integral else None
    return FlatNormResult(float(res.fun), R, S, integral, filling, remainder)


# ----------------------------------------------------------------------------
# piecewise-linear Q-valued maps


class PLQField:
    """Q-valued map on a triangulation, affine on every branch of every simplex.

    ``branches[s, l, i]`` is the value of branch ``l`` of simplex ``s`` at its
    ``i``-th vertex ``vertices[simplices[s, i]]``.
    """

    def __init__(self, vertices, simplices, branches):
        self.vertices = np.asarray(vertices, float)
        if self.vertices.ndim == 1:
            self.vertices = self.vertices[:, None]
        self.simplices = np.asarray(simplices, int)
        self.branches = np.asarray(branches, float)
        S, Q, k, n = self.branches.shape
        if self.simplices.shape != (S, k):
            raise ValueError("branches must be (simplices, Q, vertices per simplex, n)")
        self.Q, self.n, self.m, self.d = Q, n, k - 1, self.vertices.shape[1]
        self._lookup = {vertex_key(v): i for i, v in enumerate(self.vertices)}
        self._faces: dict[tuple[int, ...], tuple[int, tuple[int, ...]]] = {}
        for s, sim in enumerate(self.simplices):
            for r in range(1, k + 1):
                for pos in itertools.combinations(range(k), r):
                    key = tuple(sorted(int(sim[p]) for p in pos))
                    if key not in self._faces:
                        local = tuple(sorted(pos, key=lambda p: sim[p]))
                        self._faces[key] = (s, local)

    @classmethod
    def from_sheets(cls, vertices, simplices, sheet_values) -> "PLQField":
        """Sum of Q continuous PL sheets; ``sheet_values`` is ``(Q, V, n)``."""
        simplices = np.asarray(simplices, int)
        vals = np.asarray(sheet_values, float)
        if vals.ndim == 2:
            vals = vals[:, :, None]
        branches = np.transpose(vals[:, simplices, :], (1, 0, 2, 3))
        return cls(vertices, simplices, branches)

    @classmethod
    def from_selection(cls, u: SampledQField, selection: SheetSelection, simplices) -> "PLQField":
        """Affine interpolation of a sheet selection on each simplex."""
        simplices = np.asarray(simplices, int)
        where = {}
        for k, pc in enumerate(selection.pieces):
            for c, v in enumerate(pc.indices):
                where[int(v)] = (k, c)
        branches = np.empty((len(simplices), u.Q, simplices.shape[1], u.n))
        for s, sim in enumerate(simplices):
            owners = {where[int(v)][0] for v in sim}
            if len(owners) != 1:
                raise RefinementError(f"simplex {s} straddles selection pieces {sorted(owners)}")
            for i, v in enumerate(sim):
                k, c = where[int(v)]
                branches[s, :, i, :] = selection.pieces[k].branches[:, c, :]
        return cls(u.points, simplices, branches)

    def vertex_index(self, v) -> int:
        try:
            return self._lookup[vertex_key(v)]
        except KeyError:
            raise RefinementError(f"{np.asarray(v).tolist()} is not a vertex of the triangulation") from None

    def branches_on(self, verts: np.ndarray) -> np.ndarray:
        """``(Q, len(verts), n)`` branch values on a face given by coordinates."""
        ids = [self.vertex_index(v) for v in verts]
        key = tuple(sorted(ids))
        if key not in self._faces:
            raise RefinementError(f"vertices {ids} do not span a face of the triangulation")
        s, local = self._faces[key]
        sim = self.simplices[s]
        pos_of = {int(sim[p]): p for p in local}
        return self.branches[s][:, [pos_of[i] for i in ids], :]

    def value_at(self, vertex: int) -> QPoint:
        key = (int(vertex),)
        s, local = self._faces[key]
        return QPoint(self.branches[s][:, local[0], :])

    def sampled(self) -> SampledQField:
        edges = sorted({tuple(sorted((int(a), int(b)))) for sim in self.simplices for a, b in itertools.combinations(sim, 2)})
        return SampledQField(self.vertices, edges, [self.value_at(v) for v in range(len(self.vertices))])

    def center(self) -> "PLQField":
        """Single-valued field eta o u."""
        return PLQField(self.vertices, self.simplices, self.branches.mean(axis=1, keepdims=True))

    def branch_slope(self) -> float:
        """Largest operator norm of a branch derivative over all simplices."""
        best = 0.0
        for s, sim in enumerate(self.simplices):
            P = self.vertices[sim]
            for l in range(self.Q):
                best = max(best, affine_slope(P, self.branches[s, l]))
        return best

    def to_json(self) -> dict:
        return {
            "vertices": self.vertices.tolist(),
            "simplices": self.simplices.tolist(),
            "branches": self.branches.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "PLQField":
        if "branches" in doc:
            return cls(doc["vertices"], doc["simplices"], doc["branches"])
        return cls.from_sheets(doc["vertices"], doc["simplices"], doc["sheets"])


def affine_slope(P: np.ndarray, F: np.ndarray) -> float:
    """Operator norm of the affine map sending simplex ``P`` to ``F`` (tangentially)."""
    P = np.asarray(P, float)
    F = np.asarray(F, float)
    if len(P) < 2:
        return 0.0
    E = (P[1:] - P[0]).T
    Fe = (F[1:] - F[0]).T
    _, R = np.linalg.qr(E)
    A = np.linalg.solve(R.T, Fe.T).T
    return float(np.linalg.norm(A, 2))


def _qpush(u: PLQField, P: SimplicialChain, graph: bool) -> SimplicialChain:
    if P.d != u.d:
        raise ValueError("chain and field domain have different dimensions")
    terms = []
    for verts, c in P.terms:
        vals = u.branches_on(verts)
        for l in range(u.Q):
            img = np.hstack([verts, vals[l]]) if graph else vals[l]
            terms.append((img, c))
    d_out = u.d + u.n if graph else u.n
    return SimplicialChain(P.m, d_out, terms)


def qpushforward(u: PLQField, P: SimplicialChain) -> SimplicialChain:
    """Sum over branches of the affine push-forwards of each simplex of ``P``."""
    return _qpush(u, P, graph=False)


def graph_chain(u: PLQField, P: SimplicialChain) -> SimplicialChain:
    """Push-forward through ``p -> sum_l [[(p, u_l(p))]]``."""
    return _qpush(u, P, graph=True)


@dataclass
class BoundaryReport:
    passed: bool
    image_passed: bool
    graph_passed: bool
    lhs: SimplicialChain
    rhs: SimplicialChain
    graph_lhs: SimplicialChain
    graph_rhs: SimplicialChain

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "image_passed": self.image_passed,
            "graph_passed": self.graph_passed,
            "lhs": self.lhs.to_json(),
            "rhs": self.rhs.to_json(),
        }


def check_boundary_commutation(u: PLQField, P: SimplicialChain) -> BoundaryReport:
    """Compare the boundary of the push-forward with the push-forward of the boundary.

    Both the plain image chain and the graph chain are checked.
    """
    dP = boundary(P)
    lhs, rhs = boundary(qpushforward(u, P)), qpushforward(u, dP)
    glhs, grhs = boundary(graph_chain(u, P)), graph_chain(u, dP)
    ok_img, ok_graph = lhs == rhs, glhs == grhs
    return BoundaryReport(ok_img and ok_graph, ok_img, ok_graph, lhs, rhs, glhs, grhs)


# ----------------------------------------------------------------------------
# homotopies


def affine_homotopy_fill(f: VertexMap, g: VertexMap, P: SimplicialChain) -> SimplicialChain:
    """Image of the prism ``[0,1] x P`` under ``(t, p) -> (1-t) f(p) + t g(p)``.

    Each canonical simplex ``(p_0..p_m)`` contributes the staircase simplices
    ``(-1)^i (f(p_0)..f(p_i), g(p_i)..g(p_m))``, interpolated affinely.
    Satisfies ``boundary(fill) == g#P - f#P - fill(boundary P)`` exactly.
    """
    terms = []
    for verts, c in P.terms:
        F, G = np.atleast_2d(f(verts)), np.atleast_2d(g(verts))
        for i in range(P.m + 1):
            terms.append((np.vstack([F[: i + 1], G[i:]]), (-1) ** i * c))
    if not terms:
        return SimplicialChain.zero(P.m + 1, P.d)
    return SimplicialChain(P.m + 1, terms[0][0].shape[1], terms)


@dataclass
class HomotopyBound:
    sup_gap: float
    sup_slope: float
    mass_P: float
    bound: float
    bound_linear: float


def homotopy_mass_bound(f: VertexMap, g: VertexMap, P: SimplicialChain) -> HomotopyBound:
    """``sup|f-g| * sup(|Df| + |Dg|)^m * M(P)`` over the support of P.

    ``bound_linear`` is the same product with the slope factor to the first
    power; the two agree for 1-chains.  Derivatives are tangential operator
    norms on each simplex.
    """
    gap = slope = 0.0
    for verts, _ in P.terms:
        F, G = np.atleast_2d(f(verts)), np.atleast_2d(g(verts))
        gap = max(gap, float(np.linalg.norm(F - G, axis=1).max()))
        slope = max(slope, affine_slope(verts, F) + affine_slope(verts, G))
    M = mass(P)
    return HomotopyBound(gap, slope, M, gap * slope ** P.m * M, gap * slope * M)


# ----------------------------------------------------------------------------
# flat stability of Q-valued push-forwards


def image_complex(u: PLQField, K: SimplicialComplex) -> SimplicialComplex:
    """Complex spanned by the non-degenerate branch images of all simplices of K."""
    chains = []
    for k in range(K.dim + 1):
        terms = []
        for s in K.simplices[k]:
            verts = K.vertices[list(s)]
            vals = u.branches_on(verts)
            terms.extend((vals[l], 1) for l in range(u.Q))
        chains.append(SimplicialChain(k, u.n, terms))
    return SimplicialComplex.from_chains([c for c in chains if not c.is_zero()])


@dataclass
class StabilityReport:
    domain_flat: float
    image_flat: float
    ratio: float
    constant: float
    branch_lipschitz: float
    bound: float
    passed: bool

    def to_json(self) -> dict:
        return {k: (float(v) if not isinstance(v, bool) else v) for k, v in self.__dict__.items()}


def flat_pushforward_stability(
    u: PLQField,
    P1: SimplicialChain,
    P2: SimplicialChain,
    K: SimplicialComplex,
    K_image: SimplicialComplex | None = None,
) -> StabilityReport:
    """Ratio of flat norms ``F(u#P1 - u#P2) / F(P1 - P2)``.

    The bound reported is ``Q (1 + L)^(m+1)`` with ``L`` the largest branch
    slope; 0/0 counts as ratio 0.
    """
    if K_image is None:
        K_image = image_complex(u, K)
    base = simplicial_flat_norm(P1 - P2, K).value
    img_chain = qpushforward(u, P1) - qpushforward(u, P2)
    image = simplicial_flat_norm(img_chain, K_image).value if not img_chain.is_zero() else 0.0
    if base <= 1e-15:
        ratio = 0.0 if image <= 1e-15 else math.inf
    else:
        ratio = image / base
    L = u.branch_slope()
    constant = float(u.Q)
    bound = constant * (1.0 + L) ** (P1.m + 1)
    passed = math.isfinite(ratio) and ratio <= bound + 1e-9
    return StabilityReport(base, image, ratio, constant, L, bound, passed)


# ----------------------------------------------------------------------------
# dyadic cube construction of the push-forward with boundary


@dataclass
class DyadicReport:
    level: int
    chain: SimplicialChain
    separated_cubes: int
    homotopy_cubes: int
    boundary_matches: bool
    mass: float


def dyadic_boundary_construction(u: PLQField, cells: int, level: int) -> DyadicReport:
    """Assemble T_h cube by cube and compare its boundary with G_{u|boundary}.

    ``u`` must live on ``grid_complex(cells, m)`` of the unit cube with
    ``cells`` divisible by ``2**level``.  Cubes whose values spread more than
    ``3 (Q-1) Lip(u) 2^-h sqrt(m)`` keep the graph of ``u``; the others use
    ``Q G_{eta o u} + sigma#([0,1] x G_{u|boundary C})`` with
    ``sigma(t, p, v) = (p, (1-t) eta(u(p)) + t v)``.
    """
    m = u.m
    side = 2 ** level
    if cells % side:
        raise ValueError("cells must be a multiple of 2**level")
    K = grid_complex(cells, m)
    top = K.fundamental_chain()
    eta = u.center()
    ell = _lipschitz(u)
    threshold = 3.0 * (u.Q - 1) * ell * math.sqrt(m) / side

    def eta_map(X: np.ndarray) -> np.ndarray:
        base = X[:, :m]
        vals = eta.branches_on(base)[0]
        return np.hstack([base, vals])

    identity = lambda X: X  # noqa: E731

    by_cube: dict[tuple[int, ...], list] = {}
    for verts, c in top.terms:
        cube = tuple(np.minimum(np.floor(verts.mean(axis=0) * side), side - 1).astype(int))
        by_cube.setdefault(cube, []).append((verts, c))

    total = SimplicialChain.zero(m, m + u.n)
    separated = 0
    for cube in sorted(by_cube):
        C = SimplicialChain(m, m, by_cube[cube])
        lo = np.array(cube) / side
        inside = np.all((u.vertices >= lo - 1e-12) & (u.vertices <= lo + 1.0 / side + 1e-12), axis=1)
        spread = max(diameter(u.value_at(v)) for v in np.flatnonzero(inside))
        if spread > threshold:
            total = total + graph_chain(u, C)
            separated += 1
        else:
            ring = graph_chain(u, boundary(C))
            piece = u.Q * graph_chain(eta, C) + affine_homotopy_fill(eta_map, identity, ring)
            total = total + piece
    target = graph_chain(u, boundary(top))
    return DyadicReport(level, total, separated, len(by_cube) - separated, boundary(total) == target, mass(total))


def _lipschitz(u: PLQField) -> float:
    from .qfields import lipschitz_estimate

    return lipschitz_estimate(u.sampled())


# ----------------------------------------------------------------------------
# probe fibres


def plane_intersection_number(T: SimplicialChain, origin, directions, tol: float = 1e-12) -> int:
    """Signed count of crossings of an m-chain with an affine plane of dimension d - m.

    ``directions`` holds the plane's spanning vectors as rows.  Each crossing
    contributes the coefficient times the orientation sign of
    ``(simplex edges, plane directions)``.
    """
    origin = np.asarray(origin, float)
    D = np.atleast_2d(np.asarray(directions, float))
    if T.m + len(D) != T.d:
        raise ValueError("dimensions of chain and plane must add up to the ambient dimension")
    total = 0
    for verts, c in T.terms:
        E = (verts[1:] - verts[0]).T
        M = np.hstack([E, -D.T])
        det = np.linalg.det(M) if M.size else 1.0
        if abs(det) < 1e-300:
            continue
        sol = np.linalg.solve(M, origin - verts[0]) if M.size else np.zeros(0)
        lam = sol[: T.m]
        if np.all(lam >= -tol) and lam.sum() <= 1 + tol:
            orient = np.sign(np.linalg.det(np.hstack([E, D.T])))
            total += int(orient) * c
    return total
