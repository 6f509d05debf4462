"""Seeded case generators and the named randomized property suites.

Every generator draws from ``numpy.random.default_rng(seed)`` (PCG64), in the
order documented by its code, so a port that reproduces PCG64 and the same
draw order reproduces the cases.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import chains, multisection, qfields, reparam
from .chains import PLQField, SimplicialChain, grid_complex, vertex_key
from .polynomial import Polynomial
from .qpoints import QPoint, brute_force_distance, distance
from .qfields import SampledQField, grid_edges, grid_points

DEFAULT_SEED = 7


# ----------------------------------------------------------------------------
# Q-points


def random_qpoint(rng: np.random.Generator, Q: int, n: int) -> QPoint:
    return QPoint(rng.uniform(-1.0, 1.0, size=(Q, n)))


def metric_pairs(rng: np.random.Generator, count: int) -> list[tuple[QPoint, QPoint]]:
    """Pairs with Q in 1..6 and n in 1..4, coordinates uniform in [-1, 1]."""
    out = []
    for _ in range(count):
        Q, n = int(rng.integers(1, 7)), int(rng.integers(1, 5))
        out.append((random_qpoint(rng, Q, n), random_qpoint(rng, Q, n)))
    return out


def metric_triples(rng: np.random.Generator, count: int) -> list[tuple[QPoint, QPoint, QPoint]]:
    out = []
    for _ in range(count):
        Q, n = int(rng.integers(1, 7)), int(rng.integers(1, 5))
        out.append(tuple(random_qpoint(rng, Q, n) for _ in range(3)))
    return out


# ----------------------------------------------------------------------------
# sampled fields


def _grid_axes(m: int, count: int) -> list[np.ndarray]:
    return [np.linspace(0.0, 1.0, count)] * m


@dataclass
class DecompositionCase:
    u: SampledQField
    p0: int
    i: int
    j: int
    Q1: int | None  # size of the part holding atom i when separated


def separated_fields(rng: np.random.Generator, count: int) -> list[DecompositionCase]:
    """Two groups of affine sheets, the second lifted far above the first.

    Slopes lie in [-1, 1] and offsets in [-0.5, 0.5], so ``Lip(u) <= sqrt(Q)
    sqrt(m)`` while the lift of ``12 Q m`` beats ``3 (Q-1) Lip diam``.
    """
    out = []
    for _ in range(count):
        m = int(rng.integers(1, 3))
        Q = int(rng.integers(2, 5))
        n = int(rng.integers(1, 3))
        Q1 = int(rng.integers(1, Q))
        axes = _grid_axes(m, 11 if m == 1 else 6)
        pts = grid_points(axes)
        A = rng.uniform(-1.0, 1.0, size=(Q, n, m))
        b = rng.uniform(-0.5, 0.5, size=(Q, n))
        b[Q1:, 0] += 12.0 * Q * m
        vals = np.einsum("qnm,km->kqn", A, pts) + b[None]
        u = SampledQField(pts, grid_edges([len(a) for a in axes]), [QPoint(v) for v in vals], axes=axes)
        p0 = int(rng.integers(0, len(pts)))
        T0 = u.samples[p0]
        low = T0.vectors[:, 0] < 6.0 * Q * m
        i = int(np.flatnonzero(low)[0])
        j = int(np.flatnonzero(~low)[0])
        out.append(DecompositionCase(u, p0, i, j, Q1))
    return out


def non_separated_fields(rng: np.random.Generator, count: int) -> list[DecompositionCase]:
    """Crossing or tightly packed affine sheets where the gap test fails.

    Candidates are redrawn until the two chosen atoms sit no farther apart
    than ``3 (Q-1) Lip diam``, evaluated with a brute-force pair scan.
    """
    out = []
    while len(out) < count:
        m = int(rng.integers(1, 3))
        Q = int(rng.integers(2, 5))
        n = int(rng.integers(1, 3))
        axes = _grid_axes(m, 11 if m == 1 else 6)
        pts = grid_points(axes)
        A = rng.uniform(-1.0, 1.0, size=(Q, n, m))
        b = rng.uniform(-0.5, 0.5, size=(Q, n))
        vals = np.einsum("qnm,km->kqn", A, pts) + b[None]
        p0 = int(rng.integers(0, len(pts)))
        samples = [QPoint(v) for v in vals]
        if len(samples[p0].mults) < 2:
            continue
        u = SampledQField(pts, grid_edges([len(a) for a in axes]), samples, axes=axes)
        k = len(samples[p0].mults)
        i, j = (int(x) for x in rng.choice(k, size=2, replace=False))
        ell = max(
            brute_force_distance(samples[a], samples[c]) / float(np.linalg.norm(pts[a] - pts[c]))
            for a, c in u.edges
        )
        diam = max(float(np.linalg.norm(p - q)) for p, q in itertools.combinations(pts, 2))
        gap = float(np.linalg.norm(samples[p0].vectors[i] - samples[p0].vectors[j]))
        if gap <= 3.0 * (Q - 1) * ell * diam:
            out.append(DecompositionCase(u, p0, i, j, None))
    return out


def roundtrip_fields(rng: np.random.Generator, count: int) -> list[SampledQField]:
    """Arbitrary sampled fields with atoms on a coarse lattice, so coincidences occur."""
    out = []
    for _ in range(count):
        m = int(rng.integers(1, 3))
        Q = int(rng.integers(1, 5))
        n = int(rng.integers(1, 3))
        axes = _grid_axes(m, int(rng.integers(3, 8)))
        pts = grid_points(axes)
        vals = np.round(rng.uniform(-1.0, 1.0, size=(len(pts), Q, n)) * 2) / 2
        out.append(SampledQField(pts, grid_edges([len(a) for a in axes]), [QPoint(v) for v in vals], axes=axes))
    return out


def coherent_fields(rng: np.random.Generator, count: int) -> list[SampledQField]:
    """Separated continuous sheets on fine grids; some sheets repeated."""
    out = []
    for _ in range(count):
        m = int(rng.integers(1, 3))
        L = int(rng.integers(1, 4))
        n = int(rng.integers(1, 3))
        mults = rng.integers(1, 3, size=L).tolist()
        axes = _grid_axes(m, 41 if m == 1 else 11)
        pts = grid_points(axes)
        A = rng.uniform(-0.3, 0.3, size=(L, n, m))
        b = rng.uniform(-0.2, 0.2, size=(L, n))
        b[:, 0] += 2.0 * np.arange(L)
        vals = np.einsum("lnm,km->kln", A, pts) + b[None]
        samples = [QPoint(v, mults) for v in vals]
        out.append(SampledQField(pts, grid_edges([len(a) for a in axes]), samples, axes=axes))
    return out


def sign_jump_field(count: int = 21) -> SampledQField:
    """u(x) = [[sign(x)]] on a grid of [-1, 1] containing 0."""
    axes = [np.linspace(-1.0, 1.0, count)]
    return SampledQField.from_sheets(axes, [lambda p: np.sign(p[0])])


# ----------------------------------------------------------------------------
# chains


def vertex_table(vertices: np.ndarray, values: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    """Map sending each listed vertex to its value, extended affinely on simplices."""
    table = {vertex_key(v): np.asarray(val, float) for v, val in zip(vertices, values)}

    def apply(X: np.ndarray) -> np.ndarray:
        return np.array([table[vertex_key(x)] for x in np.atleast_2d(X)])

    return apply


@dataclass
class PLCase:
    u: PLQField
    P: SimplicialChain


def pl_fields(rng: np.random.Generator, count: int) -> list[PLCase]:
    """PL Q-valued fields on Kuhn-triangulated [0,1] and [0,1]^2.

    Sheets get uniform vertex values in [-1,1]^n with n in {m, m+1}, so
    sheets cross; branches are shuffled per simplex, which leaves the field
    unchanged as a Q-valued map.  P carries random nonzero coefficients.
    """
    out = []
    for _ in range(count):
        m = int(rng.integers(1, 3))
        Q = int(rng.integers(1, 4))
        n = m + int(rng.integers(0, 2))
        cells = int(rng.integers(2, 5))
        K = grid_complex(cells, m)
        sims = np.array(K.simplices[m])
        vals = rng.uniform(-1.0, 1.0, size=(Q, len(K.vertices), n))
        branches = np.transpose(vals[:, sims, :], (1, 0, 2, 3)).copy()
        for s in range(len(sims)):
            branches[s] = branches[s][rng.permutation(Q)]
        u = PLQField(K.vertices, sims, branches)
        coef = rng.choice([-2, -1, 1, 2, 3], size=len(sims))
        top = K.fundamental_chain()
        P = SimplicialChain(m, m, [(v, c * int(k)) for (v, c), k in zip(top.terms, coef)])
        out.append(PLCase(u, P))
    return out


def random_chains(rng: np.random.Generator, count: int) -> list[SimplicialChain]:
    """Chains of dimension 2..4 on a small integer lattice (shared faces are common)."""
    out = []
    for _ in range(count):
        m = int(rng.integers(2, 5))
        d = int(rng.integers(m, 5))
        k = int(rng.integers(1, 6))
        terms = []
        for _ in range(k):
            verts = rng.integers(0, 3, size=(m + 1, d)).astype(float)
            terms.append((verts, int(rng.choice([-3, -2, -1, 1, 2, 3]))))
        out.append(SimplicialChain(m, d, terms))
    return out


@dataclass
class HomotopyCase:
    f: Callable
    g: Callable
    P: SimplicialChain


def homotopy_cases(rng: np.random.Generator, count: int, m: int = 1) -> list[HomotopyCase]:
    """Random PL maps f, g on a random integer chain P.

    For ``m = 1`` P is a lattice polyline in R^d (d in 1..3); for ``m = 2``
    P lives on a Kuhn triangulation of [0,1]^2.  f and g take uniform values
    in [-1, 1]^n at the vertices, n in m+1..3, so the (m+1)-dimensional fill
    is generically non-degenerate and the homotopy identity is exact on
    canonical chains.
    """
    out = []
    for _ in range(count):
        n = int(rng.integers(m + 1, 4))
        if m == 1:
            d = int(rng.integers(1, 4))
            k = int(rng.integers(1, 6))
            path = rng.integers(-3, 4, size=(k + 1, d)).astype(float)
            terms = [(path[i:i + 2], int(rng.choice([-2, -1, 1, 2]))) for i in range(k)]
            P = SimplicialChain(1, d, terms)
        else:
            K = grid_complex(int(rng.integers(1, 4)), m)
            top = K.fundamental_chain()
            coef = rng.choice([-2, -1, 1, 2], size=len(top))
            P = SimplicialChain(m, m, [(v, c * int(k)) for (v, c), k in zip(top.terms, coef)])
        verts = P.vertices()
        if len(verts) == 0:
            verts = np.zeros((1, P.d))
        f = vertex_table(verts, rng.uniform(-1.0, 1.0, size=(len(verts), n)))
        g = vertex_table(verts, rng.uniform(-1.0, 1.0, size=(len(verts), n)))
        out.append(HomotopyCase(f, g, P))
    return out


@dataclass
class FlatCase:
    T: SimplicialChain
    K: chains.SimplicialComplex


def flat_cases(rng: np.random.Generator, count: int) -> list[FlatCase]:
    """Sparse integer chains of every dimension on Kuhn grids of [0,1] and [0,1]^2."""
    out = []
    for _ in range(count):
        dim = int(rng.integers(1, 3))
        K = grid_complex(int(rng.integers(1, 4)), dim)
        k = int(rng.integers(0, dim + 1))
        x = rng.integers(-2, 3, size=K.count(k)) * (rng.random(K.count(k)) < 0.4)
        out.append(FlatCase(K.chain_from_vector(k, x), K))
    return out


@dataclass
class StabilityCase:
    u: PLQField
    P1: SimplicialChain
    P2: SimplicialChain
    K: chains.SimplicialComplex


def stability_cases(rng: np.random.Generator, count: int) -> list[StabilityCase]:
    """PL fields on a triangulated [0,1] and pairs of nearby segment chains."""
    out = []
    for _ in range(count):
        Q = int(rng.integers(1, 4))
        n = int(rng.integers(1, 3))
        cells = int(rng.integers(4, 9))
        K = grid_complex(cells, 1)
        sims = np.array(K.simplices[1])
        vals = rng.uniform(-1.0, 1.0, size=(Q, len(K.vertices), n))
        u = PLQField.from_sheets(K.vertices, sims, vals)
        a = int(rng.integers(0, cells - 1))
        b = int(rng.integers(a + 1, cells + 1))
        shift = int(rng.choice([-1, 1]))
        a2 = min(max(a + shift, 0), cells - 1)
        b2 = min(max(b + shift, a2 + 1), cells)

        def segment_chain(lo: int, hi: int) -> SimplicialChain:
            return SimplicialChain(1, 1, [(K.vertices[[i, i + 1]], 1) for i in range(lo, hi)])

        out.append(StabilityCase(u, segment_chain(a, b), segment_chain(a2, b2), K))
    return out


# ----------------------------------------------------------------------------
# reparametrization scenarios


def _monomials(m: int, degree: int) -> list[tuple[int, ...]]:
    return [e for e in itertools.product(range(degree + 1), repeat=m) if sum(e) <= degree]


def _random_poly(rng: np.random.Generator, m: int, n: int, degree: int) -> Polynomial:
    exps = np.array(_monomials(m, degree))
    return Polynomial(exps, rng.uniform(-1.0, 1.0, size=(len(exps), n)))


def _raw_sheets(rng: np.random.Generator, m: int, n: int, Q: int):
    """Distinct sheets (degree 1 or 2) with multiplicities summing to Q."""
    mults = [1] * Q if Q < 3 or rng.random() < 0.5 else [2, 1]
    polys = []
    for l in range(len(mults)):
        g = _random_poly(rng, m, n, int(rng.integers(1, 3)))
        polys.append(g.shifted(np.full(n, 0.5 * l)))
    return polys, mults


def scenario_doc(phi: Polynomial, sheets, mults, m, n, c0=0.01, s=0.5, r=1.0, resolution=33) -> dict:
    return {
        "m": m,
        "n": n,
        "Q": int(sum(mults)),
        "s": s,
        "r": r,
        "c0": c0,
        "phi": phi.to_json(),
        "sheets": [{"poly": g.to_json(), "multiplicity": int(k)} for g, k in zip(sheets, mults)],
        "mesh": {"resolution": resolution},
    }


def _fit_scenario(phi0, sheets0, mults, m, n, c0, s, r, margin):
    """Scale phi and the sheets so every smallness gate holds with room ``margin``."""
    probe = reparam.GraphSurface(phi0, s, c_bar=math.inf)
    f0 = reparam.SheetField(sheets0, mults)
    ell0, fn0 = reparam.field_lipschitz(f0, r, probe.density)
    budget = 0.5 * margin
    a = min(
        budget * c0 / probe.c_norm(2) if probe.c_norm(2) > 0 else math.inf,
        budget * c0 * s / probe.norms[0] if probe.norms[0] > 0 else math.inf,
    )
    b = min(
        budget * c0 / ell0 if ell0 > 0 else math.inf,
        budget * c0 * s / fn0 if fn0 > 0 else math.inf,
    )
    a = 0.0 if not math.isfinite(a) else a
    b = 1.0 if not math.isfinite(b) else b
    return phi0.scaled(a), [g.scaled(b) for g in sheets0]


def reparam_bank(seed: int = DEFAULT_SEED, c0: float = 0.01, s: float = 0.5, r: float = 1.0,
                 margin: float = 0.8) -> list[dict]:
    """Scenario documents covering m, n in {1,2}, Q in {1,2,3}, linear and quadratic phi.

    Two further scenarios use phi = 0.  Every document passes all smallness
    gates; the scale keeps each gate's left side within ``margin`` of its bound.
    """
    rng = np.random.default_rng(seed)
    docs = []
    for m, n, Q, degree in itertools.product((1, 2), (1, 2), (1, 2, 3), (1, 2)):
        phi0 = _random_poly(rng, m, n, degree)
        sheets0, mults = _raw_sheets(rng, m, n, Q)
        phi, sheets = _fit_scenario(phi0, sheets0, mults, m, n, c0, s, r, margin)
        docs.append(scenario_doc(phi, sheets, mults, m, n, c0, s, r))
    for m, n, Q in ((1, 1, 2), (2, 1, 3)):
        sheets0, mults = _raw_sheets(rng, m, n, Q)
        phi, sheets = _fit_scenario(Polynomial.zero(m, n), sheets0, mults, m, n, c0, s, r, margin)
        docs.append(scenario_doc(phi, sheets, mults, m, n, c0, s, r))
    return docs


def is_flat_scenario(doc: dict) -> bool:
    return all(not any(t["coef"]) for t in doc["phi"]["terms"])


# ----------------------------------------------------------------------------
# named suites


@dataclass
class SuiteResult:
    name: str
    seed: int
    cases: int
    failures: list[str] = field(default_factory=list)
    rows: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_json(self) -> dict:
        return {
            "suite": self.name,
            "seed": self.seed,
            "prng": "numpy PCG64 via default_rng(seed)",
            "cases": self.cases,
            "passed": self.passed,
            "failures": self.failures,
            "summary": self.summary,
        }


def suite_metric_axioms(seed: int, cases: int | None = None, workers: int | None = None) -> SuiteResult:
    cases = cases or 1000
    rng = np.random.default_rng(seed)
    res = SuiteResult("metric-axioms", seed, cases)
    worst_oracle = worst_triangle = 0.0
    for k, (A, B) in enumerate(metric_pairs(rng, cases)):
        d, ref = distance(A, B), brute_force_distance(A, B)
        gap = abs(d - ref)
        worst_oracle = max(worst_oracle, gap)
        sym = abs(d - distance(B, A))
        if gap > 1e-12 or sym > 1e-12 or distance(A, A) != 0.0:
            res.failures.append(f"pair {k}: |G - brute| = {gap:.3g}, asymmetry {sym:.3g}")
        res.rows.append({"kind": "pair", "case": k, "Q": A.Q, "n": A.n, "value": d, "oracle": ref, "defect": gap})
    for k, (A, B, C) in enumerate(metric_triples(rng, cases)):
        slack = distance(A, B) + distance(B, C) - distance(A, C)
        worst_triangle = min(worst_triangle, slack)
        if slack < -1e-12:
            res.failures.append(f"triple {k}: triangle slack {slack:.3g}")
        res.rows.append({"kind": "triple", "case": k, "Q": A.Q, "n": A.n, "value": slack, "oracle": 0.0, "defect": min(slack, 0.0)})
    res.summary = {"max_oracle_defect": worst_oracle, "min_triangle_slack": worst_triangle}
    return res


def suite_boundary_commutation(seed: int, cases: int | None = None, workers: int | None = None) -> SuiteResult:
    cases = cases or 50
    rng = np.random.default_rng(seed)
    res = SuiteResult("boundary-commutation", seed, cases)
    for k, case in enumerate(pl_fields(rng, cases)):
        rep = chains.check_boundary_commutation(case.u, case.P)
        if not rep.passed:
            res.failures.append(f"field {k}: image {rep.image_passed}, graph {rep.graph_passed}")
        res.rows.append({"kind": "field", "case": k, "m": case.u.m, "Q": case.u.Q, "n": case.u.n,
                         "terms": len(rep.lhs), "passed": rep.passed})
    for k, P in enumerate(random_chains(rng, 4 * cases)):
        ok = chains.boundary(chains.boundary(P)).is_zero()
        if not ok:
            res.failures.append(f"chain {k}: boundary of boundary is nonzero")
        res.rows.append({"kind": "chain", "case": k, "m": P.m, "Q": 0, "n": P.d, "terms": len(P), "passed": ok})
    res.summary = {"fields": cases, "chains": 4 * cases}
    return res


def suite_multisection_equivalence(seed: int, cases: int | None = None, workers: int | None = None) -> SuiteResult:
    cases = cases or 100
    rng = np.random.default_rng(seed)
    res = SuiteResult("multisection-equivalence", seed, cases)
    for k, u in enumerate(roundtrip_fields(rng, cases)):
        ok = multisection.to_qfield(multisection.from_qfield(u)) == u
        if not ok:
            res.failures.append(f"roundtrip {k} changed the field")
        res.rows.append({"kind": "roundtrip", "case": k, "Q": u.Q, "lipschitz": "", "bound": "", "passed": ok})
    for k, u in enumerate(coherent_fields(rng, cases)):
        M = multisection.from_qfield(u)
        sep = multisection.default_separation(M)
        coh = multisection.check_coherence(M, sep) if math.isfinite(sep) else None
        if coh is not None and not coh.coherent:
            res.failures.append(f"field {k}: continuous field flagged incoherent")
            continue
        rep = multisection.lipschitz_from_cone(M, sep)
        res.rows.append({"kind": "cone", "case": k, "Q": u.Q, "lipschitz": rep.lipschitz, "bound": rep.bound,
                         "passed": rep.passed})
    jump = multisection.from_qfield(sign_jump_field())
    flagged = not multisection.check_coherence(jump, 0.5).coherent
    if not flagged:
        res.failures.append("sign-jump field passed the coherence check")
    res.rows.append({"kind": "sign-jump", "case": 0, "Q": 1, "lipschitz": "", "bound": "", "passed": flagged})
    return res


def run_reparam_scenario(doc: dict, resolution: int | None = None, workers: int | None = None,
                         graph: bool = True) -> dict:
    """Build, verify and summarize one scenario; raises on hypothesis failure."""
    sc = reparam.ReparamScenario.from_json(doc, resolution)
    N = reparam.build_normal_field(sc.surface, sc.f, sc.c0, sc.r, sc.resolution, workers)
    est = reparam.verify_estimates(N)
    out = {"scenario": sc, "field": N, "estimates": est}
    if graph:
        out["graph"] = reparam.verify_graph_identity(N)
    return out


def suite_reparam_estimates(seed: int, cases: int | None = None, workers: int | None = None) -> SuiteResult:
    docs = reparam_bank(seed)
    if cases:
        docs = docs[:cases]
    res = SuiteResult("reparam-estimates", seed, len(docs))
    for k, doc in enumerate(docs):
        try:
            out = run_reparam_scenario(doc, workers=workers, graph=False)
        except (reparam.SmallnessViolation, reparam.SolverError, reparam.ThicknessViolation) as exc:
            res.failures.append(f"scenario {k}: {exc}")
            continue
        est = out["estimates"]
        res.failures.extend(f"scenario {k}: {msg}" for msg in est.failures)
        res.rows.append({"case": k, "m": doc["m"], "n": doc["n"], "Q": doc["Q"], **est.constants,
                         "two_sided_bound": est.checks["two_sided_bound"],
                         "shifted_surface_bound": est.checks["shifted_surface_bound"]})
    return res


SUITES: dict[str, Callable[..., SuiteResult]] = {
    "metric-axioms": suite_metric_axioms,
    "boundary-commutation": suite_boundary_commutation,
    "multisection-equivalence": suite_multisection_equivalence,
    "reparam-estimates": suite_reparam_estimates,
}


def run_suite(name: str, seed: int, cases: int | None = None, workers: int | None = None) -> SuiteResult:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    return SUITES[name](seed, cases, workers)
