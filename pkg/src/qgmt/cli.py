"""Batch front-end: ``qgmt run <file>`` and ``qgmt suite <name> --seed S``.

Exit status is 0 when every assertion in the report passes, 1 when some
assertion fails (the report is still written) and 2 on unreadable or
invalid input.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import chains, multisection, qfields, reparam, suites
from .qpoints import QPoint, brute_force_distance, distance, optimal_matching

EXIT_PASS, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
KINDS = ("metric", "decompose", "pushforward", "multisection", "reparam")


class InputError(ValueError):
    """The scenario file cannot be parsed or does not validate."""


# ----------------------------------------------------------------------------
# output


def _clean(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def dumps(doc) -> str:
    return json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n"


def write_report(out_dir: Path, stem: str, report: dict, tables: dict[str, list[dict]]) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [out_dir / f"{stem}.report.json"]
    written[0].write_text(dumps(report))
    for name, rows in tables.items():
        if not rows:
            continue
        path = out_dir / f"{stem}.{name}.csv"
        fields = list(rows[0])
        with path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
            w.writeheader()
            for row in rows:
                w.writerow({k: _csv_value(row.get(k, "")) for k in fields})
        written.append(path)
    return written


def _csv_value(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return int(x)
    return x


# ----------------------------------------------------------------------------
# pipelines


def _payload(doc: dict) -> tuple[str, dict]:
    if not isinstance(doc, dict):
        raise InputError("scenario must be a JSON object")
    kind = doc.get("kind")
    if kind is None and "sheets" in doc:
        kind = "reparam"
    if kind not in KINDS:
        raise InputError(f"unknown scenario kind {kind!r}; expected one of {list(KINDS)}")
    payload = doc.get("payload", {k: v for k, v in doc.items() if k not in ("kind", "seed", "output")})
    if not isinstance(payload, dict):
        raise InputError("payload must be a JSON object")
    return kind, payload


def _load(kind: str, p: dict):
    """Validate the payload into library objects before any computation."""
    try:
        if kind == "metric":
            T1, T2 = QPoint.from_json(p["T1"]), QPoint.from_json(p["T2"])
            if (T1.Q, T1.n) != (T2.Q, T2.n):
                raise InputError("T1 and T2 must share Q and n")
            return T1, T2
        if kind == "decompose":
            u = qfields.SampledQField.from_json(p["field"])
            return u, int(p.get("p0", 0)), int(p["i"]), int(p["j"]), p.get("expect")
        if kind == "pushforward":
            u = chains.PLQField.from_json(p["field"])
            P = chains.SimplicialChain.from_json(p["chain"])
            P2 = chains.SimplicialChain.from_json(p["chain2"]) if "chain2" in p else None
            K = chains.SimplicialComplex.from_json(p["complex"]) if "complex" in p else None
            if P2 is not None and K is None:
                raise InputError("chain2 needs a 'complex' to measure flat norms in")
            return u, P, P2, K
        if kind == "multisection":
            M = multisection.Multisection.from_json(p["multisection"])
            return M, p.get("sep"), p.get("tau"), p.get("expect_coherent")
        return reparam.ReparamScenario.from_json(p)
    except InputError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise InputError(f"invalid {kind} payload: {type(exc).__name__}: {exc}") from exc


def _run_metric(obj, workers):
    T1, T2 = obj
    d, ref = distance(T1, T2), brute_force_distance(T1, T2)
    sigma = optimal_matching(T1.expanded(), T2.expanded())
    failures = [] if abs(d - ref) <= 1e-12 else [f"assignment {d} differs from brute force {ref}"]
    report = {"distance": d, "brute_force": ref, "matching": sigma.tolist(), "T1": T1.to_json(), "T2": T2.to_json()}
    rows = [{"row": i, "column": int(j)} for i, j in enumerate(sigma)]
    return report, {"matching": rows}, failures


def _run_decompose(obj, workers):
    u, p0, i, j, expect = obj
    ell = qfields.lipschitz_estimate(u)
    failures = []
    report = {"lipschitz": ell, "diameter": qfields.domain_diameter(u.points), "Q": u.Q}
    try:
        out = qfields.decompose(u, p0, i, j)
    except qfields.DecompositionError as exc:
        report["separated"] = None
        return report, {}, [f"decomposition failed its checks: {exc}"]
    rows = []
    if out is qfields.NotSeparated:
        report["separated"] = False
    else:
        u1, u2 = out
        report.update(separated=True, Q1=u1.Q, Q2=u2.Q,
                      lipschitz_parts=[qfields.lipschitz_estimate(u1), qfields.lipschitz_estimate(u2)])
        for k in range(u.N):
            merged = u1.samples[k] + u2.samples[k]
            if merged != u.samples[k]:
                failures.append(f"parts do not merge back at sample {k}")
            rows.append({"sample": k, "part1": json.dumps(u1.samples[k].to_json()["atoms"]),
                         "part2": json.dumps(u2.samples[k].to_json()["atoms"])})
        for lip in report["lipschitz_parts"]:
            if lip > ell + 1e-9:
                failures.append(f"part Lipschitz {lip} exceeds {ell}")
        report["parts"] = [u1.to_json(), u2.to_json()]
    if expect is not None and (expect == "separated") != report["separated"]:
        failures.append(f"expected {expect}")
    return report, {"parts": rows}, failures


def _run_pushforward(obj, workers):
    u, P, P2, K = obj
    rep = chains.check_boundary_commutation(u, P)
    failures = [] if rep.passed else ["boundary of the push-forward differs from the push-forward of the boundary"]
    report = {"boundary_commutation": rep.to_json(), "pushforward": chains.qpushforward(u, P).to_json(),
              "graph": chains.graph_chain(u, P).to_json(), "mass": chains.mass(chains.qpushforward(u, P))}
    if P2 is not None:
        st = chains.flat_pushforward_stability(u, P, P2, K)
        report["flat_stability"] = st.to_json()
        if not st.passed:
            failures.append("flat stability ratio is not finite or exceeds its bound")
    rows = [{"side": side, "coefficient": c, "vertices": json.dumps(v.tolist())}
            for side, ch in (("lhs", rep.lhs), ("rhs", rep.rhs)) for v, c in ch.terms]
    return report, {"boundary": rows}, failures


def _run_multisection(obj, workers):
    M, sep, tau, expect = obj
    failures = []
    mass = M.fiber_mass()
    if np.any(mass != M.Q):
        failures.append(f"fibre mass differs from Q at {int((mass != M.Q).sum())} base points")
    sep = multisection.default_separation(M) if sep is None else float(sep)
    coh = multisection.check_coherence(M, sep) if math.isfinite(sep) else multisection.CoherenceReport(True, sep)
    cone = multisection.check_cone(M, math.inf if tau is None else float(tau))
    report = {"coherence": coh.to_json(), "cone": cone.to_json(), "Q": M.Q}
    if tau is not None and not cone.passed:
        failures.append(f"cone condition fails for tau={tau}")
    if expect is not None and bool(expect) != coh.coherent:
        failures.append(f"coherence expected {bool(expect)}")
    if coh.coherent and not failures:
        lip = multisection.lipschitz_from_cone(M, sep)
        report["lipschitz_from_cone"] = {"lipschitz": lip.lipschitz, "cone_constant": lip.cone_constant, "bound": lip.bound}
    rows = [{"p": a, "q": b} for a, b in coh.violations]
    return report, {"violations": rows}, failures


def _run_reparam(sc: reparam.ReparamScenario, workers):
    small = reparam.check_smallness(sc.surface, sc.f, sc.r, sc.c0)
    report = {"scenario": sc.to_json(), "smallness": small.to_json(), "norms": sc.surface.norms}
    if not small.passed:
        return report, {}, [f"smallness: {name}" for name in small.failed()]
    try:
        N = reparam.build_normal_field(sc.surface, sc.f, sc.c0, sc.r, sc.resolution, workers)
    except (reparam.SmallnessViolation, reparam.SolverError, reparam.ThicknessViolation) as exc:
        return report, {}, [f"{type(exc).__name__}: {exc}"]
    est = reparam.verify_estimates(N)
    graph = reparam.verify_graph_identity(N)
    report.update(estimates=est.to_json(), graph_identity=graph.to_json(), vertices=len(N.points), mesh_step=N.h)
    failures = list(est.failures)
    if not graph.passed:
        failures.append("graph identity check failed")
    pv = est.per_vertex
    rows = []
    for k, x in enumerate(N.points):
        row = {f"x{i + 1}": float(x[i]) for i in range(len(x))}
        row.update(mass=N.values[k].Q, atoms=len(N.values[k].mults), size=pv["size"][k], g_f=pv["g_f"][k],
                   th2_ratio=pv["th2_ratio"][k], th3_ratio=pv["th3_ratio"][k], th4_lhs=pv["th4_lhs"][k],
                   th4_rhs=pv["th4_rhs"][k], residual=pv["residual"][k])
        rows.append(row)
    return report, {"vertices": rows}, failures


RUNNERS = {
    "metric": _run_metric,
    "decompose": _run_decompose,
    "pushforward": _run_pushforward,
    "multisection": _run_multisection,
    "reparam": _run_reparam,
}


def run_file(path: str | Path, out: str | Path | None = None, workers: int | None = None) -> int:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
        kind, payload = _payload(doc)
        obj = _load(kind, payload)
    except (OSError, json.JSONDecodeError, InputError) as exc:
        print(f"qgmt: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    out_dir = Path(out) if out else Path(doc.get("output", path.parent))
    report, tables, failures = RUNNERS[kind](obj, workers)
    report = {"kind": kind, "input": path.name, "passed": not failures, "failures": failures, **report}
    for p in write_report(out_dir, path.stem, report, tables):
        print(p)
    status = "PASS" if not failures else "FAIL"
    print(f"{status} {kind} {path.name}" + "".join(f"\n  - {f}" for f in failures))
    return EXIT_PASS if not failures else EXIT_FAIL


def run_suite_cmd(name: str, seed: int, cases: int | None, out: str | None, workers: int | None) -> int:
    if name not in suites.SUITES:
        print(f"qgmt: unknown suite {name!r}; choose from {sorted(suites.SUITES)}", file=sys.stderr)
        return EXIT_INPUT
    if cases is not None and cases <= 0:
        print("qgmt: --cases must be positive", file=sys.stderr)
        return EXIT_INPUT
    res = suites.run_suite(name, seed, cases, workers)
    if out:
        stem = f"{name}-seed{seed}"
        for p in write_report(Path(out), stem, res.to_json(), {"cases": res.rows}):
            print(p)
    print(f"{'PASS' if res.passed else 'FAIL'} {name} seed={seed} cases={res.cases} failures={len(res.failures)}")
    for f in res.failures[:20]:
        print(f"  - {f}")
    return EXIT_PASS if res.passed else EXIT_FAIL


def _threads(arg: int | None) -> int | None:
    if arg is not None:
        return arg
    env = os.environ.get("QGMT_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise InputError(f"QGMT_THREADS must be an integer, got {env!r}") from None
    return None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qgmt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="execute a scenario file and write JSON + CSV reports")
    run.add_argument("file")
    run.add_argument("--out", help="output directory (default: the scenario's directory)")
    run.add_argument("--threads", type=int, help="worker threads for fibre solves (env QGMT_THREADS)")
    st = sub.add_parser("suite", help="run a seeded randomized property suite")
    st.add_argument("name", help=", ".join(sorted(suites.SUITES)))
    st.add_argument("--seed", type=int, required=True)
    st.add_argument("--cases", type=int)
    st.add_argument("--out", help="also write the suite report here")
    st.add_argument("--threads", type=int)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on bad usage, 0 on --help
        return int(exc.code or 0)
    try:
        workers = _threads(args.threads)
    except InputError as exc:
        print(f"qgmt: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.command == "run":
        return run_file(args.file, args.out, workers)
    return run_suite_cmd(args.name, args.seed, args.cases, args.out, workers)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
