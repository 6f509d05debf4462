"""Reference computations written independently of the library.

Everything here is plain Python over lists and itertools, so agreement with
the library is evidence rather than tautology.
"""

import itertools
import math


def expand(atoms):
    """[(vector, mult), ...] -> list of vectors repeated by multiplicity."""
    out = []
    for v, k in atoms:
        out.extend([tuple(float(x) for x in v)] * int(k))
    return out


def sq(a, b):
    return sum((x - y) ** 2 for x, y in zip(a, b))


def perm_distance(A, B):
    """sqrt(min over bijections of the summed squared distances)."""
    Q = len(A)
    return math.sqrt(min(sum(sq(A[i], B[p[i]]) for i in range(Q)) for p in itertools.permutations(range(Q))))


def lex_first_optimal(A, B, rtol=1e-12):
    Q = len(A)
    costs = {p: sum(sq(A[i], B[p[i]]) for i in range(Q)) for p in itertools.permutations(range(Q))}
    best = min(costs.values())
    return min(p for p, c in costs.items() if c <= best + rtol * max(1.0, best))


def union_find_clusters(points, link):
    """Partition (as a set of frozensets of indices) of the closure of |a-b| <= link."""
    parent = list(range(len(points)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in itertools.combinations(range(len(points)), 2):
        if math.sqrt(sq(points[i], points[j])) <= link:
            parent[find(i)] = find(j)
    groups = {}
    for i in range(len(points)):
        groups.setdefault(find(i), set()).add(i)
    return {frozenset(g) for g in groups.values()}


def edge_lipschitz(points, edges, values):
    """max over edges of perm_distance / |p - q|; ``values[k]`` is an expanded list."""
    best = 0.0
    for a, b in edges:
        length = math.sqrt(sq(points[a], points[b]))
        best = max(best, perm_distance(values[a], values[b]) / length)
    return best


def bisect(fun, lo, hi, iters=200):
    """Root of a scalar function with a sign change on [lo, hi]."""
    flo = fun(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = fun(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)
