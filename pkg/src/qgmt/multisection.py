"""Q-multisections of a trivialized bundle over a sampled base.

A multisection assigns integer multiplicities to finitely many fibre vectors
above each base point.  Coherence and the tau-cone condition are checked
between adjacent base points only, so every verdict is at grid resolution.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .qpoints import QPoint, cost_matrix
from .qfields import SampledQField, grid_edges, grid_points, lipschitz_estimate


class InvariantViolation(ValueError):
    """A multisection does not satisfy a property the operation requires."""


@dataclass(frozen=True, eq=False)
class Multisection:
    """Per base point, distinct fibre vectors with positive multiplicities."""

    points: np.ndarray
    edges: np.ndarray
    vectors: tuple[np.ndarray, ...]
    mults: tuple[tuple[int, ...], ...]
    Q: int

    def __post_init__(self):
        if len(self.vectors) != len(self.points) or len(self.mults) != len(self.points):
            raise ValueError("one entry per base point is required")
        for V, M in zip(self.vectors, self.mults):
            if len(V) != len(M) or any(m <= 0 for m in M):
                raise ValueError("each fibre vector needs a positive multiplicity")
            if len(V) > 1 and cost_matrix(V, V)[np.triu_indices(len(V), 1)].min() == 0:
                raise ValueError("fibre vectors at a base point must be distinct")

    @property
    def N(self) -> int:
        return len(self.points)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Multisection):
            return NotImplemented
        return (
            self.Q == other.Q
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.edges, other.edges)
            and self.mults == other.mults
            and all(np.array_equal(a, b) for a, b in zip(self.vectors, other.vectors))
        )

    def fiber_mass(self) -> np.ndarray:
        return np.array([sum(M) for M in self.mults])

    def neighbors(self) -> list[list[int]]:
        nb: list[set[int]] = [set() for _ in range(self.N)]
        for a, b in self.edges:
            nb[a].add(int(b))
            nb[b].add(int(a))
        return [sorted(x) for x in nb]

    def to_json(self) -> dict:
        return {
            "Q": self.Q,
            "grid": {"points": self.points.tolist(), "edges": self.edges.tolist()},
            "entries": [
                {"p": p.tolist(), "atoms": [{"v": v.tolist(), "m": int(m)} for v, m in zip(V, M)]}
                for p, V, M in zip(self.points, self.vectors, self.mults)
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Multisection":
        grid = doc.get("grid", {})
        entries = doc["entries"]
        if "axes" in grid:
            points = grid_points(grid["axes"])
            edges = grid_edges([len(a) for a in grid["axes"]])
        else:
            points = np.asarray(grid.get("points", [e["p"] for e in entries]), float)
            edges = np.asarray(grid.get("edges", []), int).reshape(-1, 2)
        points = points.reshape(len(points), -1)
        if len(entries) != len(points):
            raise ValueError("entries must list every base point")
        vectors, mults = [], []
        for e, p in zip(entries, points):
            if "p" in e and not np.allclose(np.asarray(e["p"], float), p):
                raise ValueError(f"entry point {e['p']} does not match the grid")
            vectors.append(np.array([a["v"] for a in e["atoms"]], float).reshape(len(e["atoms"]), -1))
            mults.append(tuple(int(a["m"]) for a in e["atoms"]))
        return cls(points, edges, tuple(vectors), tuple(mults), int(doc["Q"]))


def from_qfield(u: SampledQField) -> Multisection:
    """M_u(p, v) = Theta_{u(p)}(v)."""
    return Multisection(
        u.points.copy(),
        u.edges.copy(),
        tuple(np.array(s.vectors) for s in u.samples),
        tuple(s.mults for s in u.samples),
        u.Q,
    )


def to_qfield(M: Multisection) -> SampledQField:
    """u_M(p) = sum_v M(p, v) [[v]]."""
    bad = np.flatnonzero(M.fiber_mass() != M.Q)
    if len(bad):
        raise InvariantViolation(f"fibre mass differs from Q={M.Q} at base points {bad[:5].tolist()}")
    return SampledQField(M.points, M.edges, [QPoint(V, m) for V, m in zip(M.vectors, M.mults)])


def _half_gap(V: np.ndarray) -> float:
    if len(V) < 2:
        return math.inf
    D = cost_matrix(V, V)
    return 0.5 * math.sqrt(D[np.triu_indices(len(V), 1)].min())


@dataclass
class CoherenceReport:
    coherent: bool
    sep: float
    violations: list[tuple[int, int]] = field(default_factory=list)
    resolution: float = 0.0

    def to_json(self) -> dict:
        return {
            "coherent": self.coherent,
            "sep": self.sep,
            "resolution": self.resolution,
            "violations": [list(v) for v in self.violations],
        }


def check_coherence(M: Multisection, sep: float) -> CoherenceReport:
    """Ball-count test between every base point and its neighbours.

    Around each atom of M_p an open ball of radius ``sep`` is drawn; at each
    neighbour q the multiplicity inside every ball must equal the atom's own.
    ``violations`` lists ``(p, q)`` pairs that fail.
    """
    if sep <= 0:
        raise ValueError("sep must be positive")
    for k, V in enumerate(M.vectors):
        if sep > _half_gap(V):
            raise ValueError(f"sep={sep} makes the balls overlap at base point {k}")
    nb = M.neighbors()
    violations = []
    for p in range(M.N):
        V, Mp = M.vectors[p], np.asarray(M.mults[p])
        for q in nb[p]:
            W, Mq = M.vectors[q], np.asarray(M.mults[q])
            inside = np.sqrt(cost_matrix(V, W)) < sep
            if np.any(inside @ Mq != Mp):
                violations.append((p, q))
    lengths = [np.linalg.norm(M.points[a] - M.points[b]) for a, b in M.edges]
    return CoherenceReport(not violations, float(sep), violations, float(max(lengths, default=0.0)))


@dataclass
class ConeReport:
    tau: float
    passed: bool
    cone_constant: float
    violations: list[tuple[int, int]] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "tau": self.tau,
            "passed": self.passed,
            "cone_constant": self.cone_constant,
            "violations": [list(v) for v in self.violations],
        }


def check_cone(M: Multisection, tau: float) -> ConeReport:
    """Edgewise tau-cone test.

    For atom v at x and neighbour y, every atom w of M_y within half the
    minimum atom gap at x must satisfy ``|w - v| <= tau |y - x|``.  The
    smallest passing tau is reported as ``cone_constant``.
    """
    nb = M.neighbors()
    worst = 0.0
    violations = []
    for x in range(M.N):
        V = M.vectors[x]
        scale = _half_gap(V)
        for y in nb[x]:
            W = M.vectors[y]
            dist = np.linalg.norm(M.points[y] - M.points[x])
            if dist == 0:
                raise ValueError("zero-length edge in the base graph")
            D = np.sqrt(cost_matrix(V, W))
            near = D[D <= scale]
            if near.size == 0:
                continue
            ratio = float(near.max()) / dist
            worst = max(worst, ratio)
            if ratio > tau * (1 + 1e-12) + 1e-15:
                violations.append((x, y))
    return ConeReport(float(tau), not violations, worst, violations)


def default_separation(M: Multisection) -> float:
    """Largest admissible ball radius: half the smallest atom gap anywhere."""
    return min((_half_gap(V) for V in M.vectors), default=math.inf)


@dataclass
class ConeLipschitzReport:
    lipschitz: float
    cone_constant: float
    bound: float
    passed: bool


def lipschitz_from_cone(M: Multisection, sep: float | None = None) -> ConeLipschitzReport:
    """Edgewise Lip(u_M) checked against sqrt(Q) times the cone constant."""
    sep = default_separation(M) if sep is None else sep
    coh = check_coherence(M, sep) if math.isfinite(sep) else CoherenceReport(True, sep)
    if not coh.coherent:
        raise InvariantViolation(f"multisection is not coherent at {len(coh.violations)} base-point pairs")
    u = to_qfield(M)
    ell = lipschitz_estimate(u)
    tau_hat = check_cone(M, math.inf).cone_constant
    bound = math.sqrt(M.Q) * tau_hat
    if ell > bound + 1e-9:
        raise InvariantViolation(f"Lip(u_M)={ell} exceeds sqrt(Q)*tau={bound}")
    return ConeLipschitzReport(ell, tau_hat, bound, True)
