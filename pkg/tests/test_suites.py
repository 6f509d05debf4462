import numpy as np
import pytest

from qgmt import suites
from qgmt.reparam import ReparamScenario, check_smallness


@pytest.fixture(scope="module")
def bank():
    return suites.reparam_bank(7)


def test_bank_shape(bank):
    assert len(bank) >= 20
    assert {d["m"] for d in bank} == {1, 2}
    assert {d["n"] for d in bank} == {1, 2}
    assert {d["Q"] for d in bank} == {1, 2, 3}
    assert all((d["c0"], d["s"], d["r"]) == (0.01, 0.5, 1.0) for d in bank)
    assert sum(suites.is_flat_scenario(d) for d in bank) >= 1


def test_bank_is_deterministic(bank):
    assert suites.reparam_bank(7) == bank


def test_bank_passes_every_gate(bank):
    for doc in bank:
        sc = ReparamScenario.from_json(doc)
        rep = check_smallness(sc.surface, sc.f, sc.r, sc.c0)
        assert rep.passed, rep.failed()


def test_generators_reproducible():
    def draw(seed):
        rng = np.random.default_rng(seed)
        return suites.metric_pairs(rng, 5), suites.separated_fields(rng, 3), suites.homotopy_cases(rng, 3)

    (pa, sa, ha), (pb, sb, hb) = draw(11), draw(11)
    assert pa == pb
    assert all(a.u == b.u and (a.p0, a.i, a.j, a.Q1) == (b.p0, b.i, b.j, b.Q1) for a, b in zip(sa, sb))
    for a, b in zip(ha, hb):
        V = a.P.vertices()
        assert a.P == b.P
        assert np.array_equal(a.f(V), b.f(V)) and np.array_equal(a.g(V), b.g(V))


def test_suite_results_deterministic():
    r1 = suites.run_suite("multisection-equivalence", 3, 10)
    r2 = suites.run_suite("multisection-equivalence", 3, 10)
    assert r1.passed and r1.to_json() == r2.to_json() and r1.rows == r2.rows


def test_unknown_suite():
    with pytest.raises(KeyError):
        suites.run_suite("nope", 1)
