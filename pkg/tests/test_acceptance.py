"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Every test times its own work and asserts the runtime budget together with
the correctness checks.
"""

import math
import time

import numpy as np
import pytest

from qgmt import chains, multisection, qfields, reparam, suites
from qgmt.qpoints import brute_force_distance, cost_matrix, distance

SEED = suites.DEFAULT_SEED


@pytest.fixture
def announce(capsys):
    def emit(number, title, ok, detail, seconds, budget):
        status = "PASS" if ok and seconds < budget else "FAIL"
        with capsys.disabled():
            print(f"\n[{status}] criterion {number}: {title}: {detail} ({seconds:.2f} s of {budget:.0f} s)")

    return emit


def test_criterion_1_metric_oracle(announce):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    worst_gap = 0.0
    for A, B in suites.metric_pairs(rng, 1000):
        worst_gap = max(worst_gap, abs(distance(A, B) - brute_force_distance(A, B)))
    worst_slack = math.inf
    for A, B, C in suites.metric_triples(rng, 1000):
        worst_slack = min(worst_slack, distance(A, B) + distance(B, C) - distance(A, C))
    elapsed = time.perf_counter() - t0
    ok = worst_gap <= 1e-12 and worst_slack >= -1e-12
    announce(1, "metric oracle", ok, f"max |assignment - brute| = {worst_gap:.2e}, min triangle slack = {worst_slack:.2e}",
             elapsed, 5)
    assert worst_gap <= 1e-12
    assert worst_slack >= -1e-12
    assert elapsed < 5


def test_criterion_2_decomposition(announce):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    problems = []
    for k, case in enumerate(suites.separated_fields(rng, 100)):
        u = case.u
        parts = qfields.decompose(u, case.p0, case.i, case.j)
        if parts is qfields.NotSeparated:
            problems.append(f"separated field {k} reported NotSeparated")
            continue
        u1, u2 = parts
        ell = qfields.lipschitz_estimate(u)
        for s, a, b in zip(u.samples, u1.samples, u2.samples):
            if a + b != s or cost_matrix(a.vectors, b.vectors).min() <= 0:
                problems.append(f"separated field {k}: parts overlap or do not merge back")
                break
        if max(qfields.lipschitz_estimate(u1), qfields.lipschitz_estimate(u2)) > ell + 1e-9:
            problems.append(f"separated field {k}: part Lipschitz exceeds the field's")
    for k, case in enumerate(suites.non_separated_fields(rng, 100)):
        if qfields.decompose(case.u, case.p0, case.i, case.j) is not qfields.NotSeparated:
            problems.append(f"non-separated field {k} was split")
    elapsed = time.perf_counter() - t0
    announce(2, "decomposition", not problems, f"100 separated + 100 non-separated fields, {len(problems)} problems",
             elapsed, 5)
    assert problems == []
    assert elapsed < 5


def test_criterion_3_boundary_commutation(announce):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    cases = suites.pl_fields(rng, 60)
    bad_fields = [k for k, c in enumerate(cases) if not chains.check_boundary_commutation(c.u, c.P).passed]
    chain_bank = suites.random_chains(rng, 200)
    bad_chains = [k for k, P in enumerate(chain_bank) if not chains.boundary(chains.boundary(P)).is_zero()]
    elapsed = time.perf_counter() - t0
    dims = sorted({c.u.m for c in cases})
    Qs = sorted({c.u.Q for c in cases})
    ok = not bad_fields and not bad_chains
    announce(3, "boundary commutation", ok,
             f"{len(cases)} PL fields (m in {dims}, Q in {Qs}), 200 chains, failures {bad_fields + bad_chains}",
             elapsed, 10)
    assert dims == [1, 2] and max(Qs) <= 3
    assert bad_fields == [] and bad_chains == []
    assert elapsed < 10


def test_criterion_4_homotopy(announce):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    identity_failures, bound_failures, worst = [], [], 0.0
    for k, case in enumerate(suites.homotopy_cases(rng, 100, m=1)):
        fill = chains.affine_homotopy_fill(case.f, case.g, case.P)
        rhs = (chains.pushforward(case.g, case.P) - chains.pushforward(case.f, case.P)
               - chains.affine_homotopy_fill(case.f, case.g, chains.boundary(case.P)))
        if chains.boundary(fill) != rhs:
            identity_failures.append(k)
        hb = chains.homotopy_mass_bound(case.f, case.g, case.P)
        literal = hb.sup_gap * hb.sup_slope * hb.mass_P
        worst = max(worst, chains.mass(fill) / literal if literal > 0 else 0.0)
        if chains.mass(fill) > literal + 1e-9:
            bound_failures.append(k)
    elapsed = time.perf_counter() - t0
    ok = not identity_failures and not bound_failures
    announce(4, "homotopy identities", ok,
             f"100 cases, identity failures {identity_failures}, bound failures {bound_failures}, "
             f"max mass/bound = {worst:.3f}", elapsed, 5)
    assert identity_failures == [] and bound_failures == []
    assert elapsed < 5


def test_criterion_5_flat_norm(announce):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    over_mass = []
    for k, case in enumerate(suites.flat_cases(rng, 50)):
        if chains.simplicial_flat_norm(case.T, case.K).value > chains.mass(case.T) + 1e-9:
            over_mass.append(k)
    unit = chains.SimplicialChain(0, 1, [(np.array([[1.0]]), 1), (np.array([[0.0]]), -1)])
    example = chains.simplicial_flat_norm(unit, chains.grid_complex(1, 1)).value
    reports = [chains.flat_pushforward_stability(c.u, c.P1, c.P2, c.K) for c in suites.stability_cases(rng, 20)]
    ratios = [r.ratio for r in reports]
    elapsed = time.perf_counter() - t0
    finite = all(math.isfinite(x) for x in ratios)
    ok = not over_mass and example == 1.0 and finite
    announce(5, "flat norm", ok,
             f"50 chains with flat <= mass, [[1]]-[[0]] -> {example!r}, stability ratios finite on 20 cases, "
             f"empirical constant {max(ratios):.3f}", elapsed, 10)
    assert over_mass == []
    assert example == 1.0
    assert finite
    assert elapsed < 10


def test_criterion_6_multisection(announce):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    roundtrip_bad = [k for k, u in enumerate(suites.roundtrip_fields(rng, 100))
                     if multisection.to_qfield(multisection.from_qfield(u)) != u]
    lip_bad, worst = [], 0.0
    for k, u in enumerate(suites.coherent_fields(rng, 100)):
        M = multisection.from_qfield(u)
        sep = multisection.default_separation(M)
        if math.isfinite(sep) and not multisection.check_coherence(M, sep).coherent:
            lip_bad.append(k)
            continue
        rep = multisection.lipschitz_from_cone(M, sep)
        if rep.bound > 0:
            worst = max(worst, rep.lipschitz / rep.bound)
        if rep.lipschitz > math.sqrt(u.Q) * rep.cone_constant + 1e-9:
            lip_bad.append(k)
    jump_flagged = not multisection.check_coherence(multisection.from_qfield(suites.sign_jump_field()), 0.5).coherent
    elapsed = time.perf_counter() - t0
    ok = not roundtrip_bad and not lip_bad and jump_flagged
    announce(6, "multisection equivalences", ok,
             f"roundtrip failures {roundtrip_bad}, Lipschitz failures {lip_bad}, max Lip/bound = {worst:.3f}, "
             f"sign jump flagged = {jump_flagged}", elapsed, 5)
    assert roundtrip_bad == [] and lip_bad == []
    assert jump_flagged
    assert elapsed < 5


# --- reparametrization bank --------------------------------------------------


@pytest.fixture(scope="module")
def reparam_runs():
    """Bank fields at 33 and 65 ticks per axis, with verified estimates and timings."""
    t0 = time.perf_counter()
    bank = suites.reparam_bank(SEED)
    runs = {}
    for res in (33, 65):
        out = []
        for doc in bank:
            sc = reparam.ReparamScenario.from_json(doc, res)
            N = reparam.build_normal_field(sc.surface, sc.f, sc.c0, sc.r, res)
            out.append((doc, N, reparam.verify_estimates(N)))
        runs[res] = out
    return bank, runs, time.perf_counter() - t0


REPORTED = ("C_lipschitz", "C_center", "C_vertical")


def _stable(a, b):
    if not (math.isfinite(a) and math.isfinite(b)):
        return False
    if a == 0.0:
        return abs(b) <= 1e-12
    return abs(b / a - 1.0) <= 0.2


def test_criterion_7_reparametrization(announce, reparam_runs):
    bank, runs, elapsed = reparam_runs
    failures = []
    for k, (doc, N, est) in enumerate(runs[33]):
        c = est.checks
        if not (c["fiber_mass"] and c["max_residual"] < 1e-10 and c["normality"] <= 1e-9
                and c["two_sided_bound"] and c["shifted_surface_bound"]):
            failures.append(f"scenario {k}: {est.failures}")
    for k, (doc, N, est) in enumerate(runs[65]):
        failures.extend(f"scenario {k} at 65: {msg}" for msg in est.failures)
    unstable, spread = [], 1.0
    for k, ((_, _, coarse), (_, _, fine)) in enumerate(zip(runs[33], runs[65])):
        for name in REPORTED:
            a, b = coarse.constants[name], fine.constants[name]
            if not _stable(a, b):
                unstable.append(f"scenario {k} {name}: {a} -> {b}")
            elif a:
                spread = max(spread, b / a, a / b)
    flat_gap = 0.0
    flat = [(doc, N) for doc, N, _ in runs[33] if suites.is_flat_scenario(doc)]
    for doc, N in flat:
        G = N.f.values(N.points)  # (K, L, n)
        expected = np.concatenate([np.zeros(G.shape[:2] + (N.surface.m,)), G], axis=2)
        flat_gap = max(flat_gap, float(np.abs(N.fibers.displacements - expected).max()))
    combos = {(d["m"], d["n"], d["Q"]) for d in bank}
    ok = not failures and not unstable and flat and flat_gap <= 1e-12 and elapsed < 60
    announce(7, "reparametrization", ok,
             f"{len(bank)} scenarios ({len(combos)} (m,n,Q) combinations), per-vertex checks at 33 and 65 ticks, "
             f"constant spread 65/33 <= {spread:.3f}, phi=0 gap {flat_gap:.1e}", elapsed, 60)
    assert len(bank) >= 20
    assert failures == []
    assert unstable == []
    assert flat and flat_gap <= 1e-12
    assert elapsed < 60


def test_criterion_8_graph_identity(announce, reparam_runs):
    _, runs, _ = reparam_runs
    t0 = time.perf_counter()
    reports = [reparam.verify_graph_identity(N) for _, N, _ in runs[33]]
    elapsed = time.perf_counter() - t0
    bad = [k for k, r in enumerate(reports) if not r.passed]
    worst = max(r.hausdorff / r.bound for r in reports)
    announce(8, "graph identity", not bad,
             f"{len(reports)} scenarios, max Hausdorff/bound = {worst:.2e}, probe mismatches {bad}", elapsed, 10)
    for r in reports:
        assert r.hausdorff <= r.bound
        assert r.probe_counts_F == r.probe_counts_G
    assert bad == []
    assert elapsed < 10
