"""Q-points: unordered Q-tuples of vectors with integer multiplicities.

A :class:`QPoint` is the atomic measure ``sum_j m_j [[v_j]]`` with
``sum_j m_j == Q``.  Atoms are stored sorted lexicographically and
bit-identical vectors are merged, so equality is structural.
"""

from __future__ import annotations

import itertools
import math
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment


class AmbiguityError(ValueError):
    """More than one support vector lies inside the query tolerance."""


def _as_matrix(vectors) -> np.ndarray:
    arr = np.asarray(vectors, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"expected a list of vectors, got shape {arr.shape}")
    return arr


class QPoint:
    """Immutable element of A_Q(R^n).

    ``QPoint(vectors, mults)`` accepts a ``(k, n)`` array (or a flat list of
    scalars when ``n == 1``) and optional positive multiplicities.
    """

    __slots__ = ("_vectors", "_mults", "_Q", "_n")

    def __init__(self, vectors, mults: Sequence[int] | None = None):
        vecs = _as_matrix(vectors)
        if vecs.shape[0] == 0:
            raise ValueError("a Q-point needs at least one atom")
        if mults is None:
            mults = [1] * vecs.shape[0]
        mults = [int(m) for m in mults]
        if len(mults) != vecs.shape[0]:
            raise ValueError("one multiplicity per vector is required")
        if any(m <= 0 for m in mults):
            raise ValueError("multiplicities must be positive integers")
        if not np.all(np.isfinite(vecs)):
            raise ValueError("atom coordinates must be finite")

        # +0.0 folds -0.0 into 0.0 so that bit-identity matches numeric equality
        vecs = vecs + 0.0
        order = np.lexsort(vecs.T[::-1])
        merged_v: list[np.ndarray] = []
        merged_m: list[int] = []
        for k in order:
            v = vecs[k]
            if merged_v and v.tobytes() == merged_v[-1].tobytes():
                merged_m[-1] += mults[k]
            else:
                merged_v.append(v)
                merged_m.append(mults[k])
        stored = np.array(merged_v)
        stored.setflags(write=False)
        self._vectors = stored
        self._mults = tuple(merged_m)
        self._Q = sum(merged_m)
        self._n = stored.shape[1]

    @classmethod
    def from_values(cls, values) -> "QPoint":
        """Build from an expanded ``(Q, n)`` list, one row per unit of mass."""
        return cls(values)

    @classmethod
    def concentrated(cls, v, Q: int) -> "QPoint":
        """``Q [[v]]``."""
        return cls(np.atleast_2d(np.asarray(v, dtype=float)), [Q])

    @property
    def Q(self) -> int:
        return self._Q

    @property
    def n(self) -> int:
        return self._n

    @property
    def vectors(self) -> np.ndarray:
        """Distinct support vectors, lexicographically sorted (read-only)."""
        return self._vectors

    @property
    def mults(self) -> tuple[int, ...]:
        return self._mults

    @property
    def atoms(self) -> list[tuple[np.ndarray, int]]:
        return list(zip(self._vectors, self._mults))

    def expanded(self) -> np.ndarray:
        """``(Q, n)`` array repeating each vector by its multiplicity."""
        return np.repeat(self._vectors, self._mults, axis=0)

    def merge(self, tol: float) -> "QPoint":
        """Collapse support vectors within ``tol`` (single linkage).

        Each merged cluster is represented by its first (lexicographically
        smallest) vector.
        """
        k = len(self._mults)
        parent = list(range(k))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for a, b in itertools.combinations(range(k), 2):
            if np.linalg.norm(self._vectors[a] - self._vectors[b]) <= tol:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
        reps: dict[int, int] = {}
        for a in range(k):
            r = find(a)
            reps[r] = reps.get(r, 0) + self._mults[a]
        roots = sorted(reps)
        return QPoint(self._vectors[roots], [reps[r] for r in roots])

    def __add__(self, other: "QPoint") -> "QPoint":
        """Union of atoms: ``T1 + T2`` lives in A_{Q1+Q2}."""
        if not isinstance(other, QPoint):
            return NotImplemented
        if other.n != self.n:
            raise ValueError("cannot add Q-points of different ambient dimension")
        return QPoint(np.vstack([self._vectors, other._vectors]), self._mults + other._mults)

    def translate(self, w) -> "QPoint":
        return QPoint(self._vectors + np.asarray(w, dtype=float), self._mults)

    def __eq__(self, other) -> bool:
        if not isinstance(other, QPoint):
            return NotImplemented
        return (
            self._mults == other._mults
            and self._vectors.shape == other._vectors.shape
            and self._vectors.tobytes() == other._vectors.tobytes()
        )

    def __hash__(self) -> int:
        return hash((self._mults, self._vectors.tobytes()))

    def __repr__(self) -> str:
        parts = []
        for v, m in self.atoms:
            coords = ", ".join(f"{x:g}" for x in v)
            body = coords if self._n == 1 else f"({coords})"
            parts.append(f"{m}[[{body}]]" if m > 1 else f"[[{body}]]")
        return "QPoint(" + " + ".join(parts) + ")"

    def to_json(self) -> dict:
        return {
            "Q": self._Q,
            "n": self._n,
            "atoms": [{"v": [float(x) for x in v], "m": int(m)} for v, m in self.atoms],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "QPoint":
        atoms = doc["atoms"]
        if not atoms:
            raise ValueError("Q-point JSON has no atoms")
        vecs = [a["v"] for a in atoms]
        point = cls(np.array(vecs, dtype=float).reshape(len(vecs), -1), [a["m"] for a in atoms])
        if "Q" in doc and int(doc["Q"]) != point.Q:
            raise ValueError(f"declared Q={doc['Q']} but multiplicities sum to {point.Q}")
        if "n" in doc and int(doc["n"]) != point.n:
            raise ValueError(f"declared n={doc['n']} but vectors have length {point.n}")
        return point


def _check_compatible(T1: QPoint, T2: QPoint) -> None:
    if T1.Q != T2.Q:
        raise ValueError(f"Q mismatch: {T1.Q} vs {T2.Q}")
    if T1.n != T2.n:
        raise ValueError(f"dimension mismatch: {T1.n} vs {T2.n}")


def cost_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances between the rows of A and B."""
    diff = A[:, None, :] - B[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def distance(T1: QPoint, T2: QPoint) -> float:
    """The metric G: square root of the optimal matching cost."""
    _check_compatible(T1, T2)
    C = cost_matrix(T1.expanded(), T2.expanded())
    rows, cols = linear_sum_assignment(C)
    return math.sqrt(float(C[rows, cols].sum()))


def brute_force_distance(T1: QPoint, T2: QPoint) -> float:
    """Reference value of G by enumerating all Q! bijections."""
    _check_compatible(T1, T2)
    C = cost_matrix(T1.expanded(), T2.expanded())
    Q = T1.Q
    best = math.inf
    for perm in itertools.permutations(range(Q)):
        best = min(best, float(C[range(Q), perm].sum()))
    return math.sqrt(best)


def optimal_matching(A: np.ndarray, B: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    """Lexicographically smallest optimal assignment between rows of A and B.

    Returns ``sigma`` with row ``i`` of A matched to row ``sigma[i]`` of B.
    Ties are resolved by fixing rows in order and taking the smallest column
    that still admits an optimal completion.
    """
    C = cost_matrix(np.asarray(A, float), np.asarray(B, float))
    Q = C.shape[0]
    rows, cols = linear_sum_assignment(C)
    best = float(C[rows, cols].sum())
    slack = rtol * max(1.0, best)
    sigma = np.empty(Q, dtype=int)
    fixed_cost = 0.0
    free_cols = list(range(Q))
    for i in range(Q):
        rest_rows = list(range(i + 1, Q))
        for j in free_cols:
            remaining = [c for c in free_cols if c != j]
            tail = 0.0
            if rest_rows:
                sub = C[np.ix_(rest_rows, remaining)]
                r, c = linear_sum_assignment(sub)
                tail = float(sub[r, c].sum())
            if fixed_cost + C[i, j] + tail <= best + slack:
                sigma[i] = j
                fixed_cost += C[i, j]
                free_cols = remaining
                break
        else:  # pragma: no cover - the optimum is always completable
            raise RuntimeError("no optimal completion found")
    return sigma


_PERMS: dict[int, np.ndarray] = {}


def batch_distances(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """G between paired expanded Q-points ``A[k]`` and ``B[k]``, shape ``(K, Q, n)``.

    Small Q enumerates bijections in one vectorized pass; larger Q falls back
    to the assignment solver per pair.
    """
    A = np.asarray(A, float)
    B = np.asarray(B, float)
    K, Q, _ = A.shape
    if K == 0:
        return np.zeros(0)
    if Q > 4:
        out = np.empty(K)
        for k in range(K):
            C = cost_matrix(A[k], B[k])
            r, c = linear_sum_assignment(C)
            out[k] = math.sqrt(float(C[r, c].sum()))
        return out
    if Q not in _PERMS:
        _PERMS[Q] = np.array(list(itertools.permutations(range(Q))))
    perms = _PERMS[Q]
    diff = A[:, None, :, :] - B[:, perms, :]
    cost = np.einsum("kpqn,kpqn->kp", diff, diff)
    return np.sqrt(cost.min(axis=1))


def center_of_mass(T: QPoint) -> np.ndarray:
    """eta(T), the multiplicity-weighted mean."""
    w = np.asarray(T.mults, dtype=float)
    return (w[:, None] * T.vectors).sum(axis=0) / T.Q


def diameter(T: QPoint) -> float:
    V = T.vectors
    if len(V) == 1:
        return 0.0
    return math.sqrt(float(cost_matrix(V, V).max()))


def multiplicity(T: QPoint, v, tol: float = 0.0) -> int:
    """Theta_T(v): multiplicity of the unique atom within ``tol`` of ``v``."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.shape != (T.n,):
        raise ValueError(f"query vector must have length {T.n}")
    d = np.linalg.norm(T.vectors - v, axis=1)
    hits = np.flatnonzero(d <= tol)
    if len(hits) > 1:
        raise AmbiguityError(f"{len(hits)} atoms lie within {tol} of {v.tolist()}")
    return int(T.mults[hits[0]]) if len(hits) else 0


def norm(T: QPoint) -> float:
    """|T| = G(T, Q[[0]])."""
    X = T.expanded()
    return math.sqrt(float(np.einsum("ij,ij->", X, X)))


def union(parts: Iterable[QPoint]) -> QPoint:
    parts = list(parts)
    out = parts[0]
    for p in parts[1:]:
        out = out + p
    return out
