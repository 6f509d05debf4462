import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import edge_lipschitz, expand
from qgmt import suites
from qgmt.multisection import (
    InvariantViolation,
    Multisection,
    check_coherence,
    check_cone,
    default_separation,
    from_qfield,
    lipschitz_from_cone,
    to_qfield,
)
from qgmt.qfields import SampledQField, lipschitz_estimate
from qgmt.qpoints import QPoint

seeds = st.integers(0, 2**32 - 1)
SYM = [np.linspace(-1.0, 1.0, 21)]
UNIT = [np.linspace(0.0, 1.0, 11)]


def field(axes, *sheets, mults=None):
    return SampledQField.from_sheets(axes, sheets, mults)


# --- conversions ------------------------------------------------------------


def test_from_qfield_concentrated():
    M = from_qfield(field(UNIT, lambda p: 0.0, mults=[3]))
    assert all(V.tolist() == [[0.0]] for V in M.vectors)
    assert set(M.mults) == {(3,)}


def test_from_qfield_cross_merges_at_zero():
    M = from_qfield(field(SYM, lambda p: p[0], lambda p: -p[0]))
    zero = int(np.flatnonzero(M.points[:, 0] == 0.0)[0])
    assert M.mults[zero] == (2,) and M.vectors[zero].tolist() == [[0.0]]
    assert all(len(m) == 2 for k, m in enumerate(M.mults) if k != zero)


@pytest.mark.parametrize(
    "sheets",
    [(lambda p: 0.0,), (lambda p: p[0], lambda p: -p[0]), (lambda p: p[0], lambda p: p[0] + 10, lambda p: 1.0)],
)
def test_roundtrip_examples(sheets):
    u = field(SYM, *sheets)
    assert to_qfield(from_qfield(u)) == u


def test_to_qfield_mass_violation():
    M = Multisection(np.array([[0.0], [1.0]]), np.array([[0, 1]]), (np.array([[0.0]]), np.array([[0.0]])), ((2,), (1,)), 2)
    with pytest.raises(InvariantViolation):
        to_qfield(M)


def test_duplicate_fibre_vectors_rejected():
    with pytest.raises(ValueError):
        Multisection(np.array([[0.0]]), np.zeros((0, 2), int), (np.array([[1.0], [1.0]]),), ((1, 1),), 2)


def test_json_roundtrip():
    M = from_qfield(field(UNIT, lambda p: p[0], lambda p: 1 - p[0]))
    assert Multisection.from_json(M.to_json()) == M


@given(seeds)
def test_roundtrip_random_fields(seed):
    for u in suites.roundtrip_fields(np.random.default_rng(seed), 5):
        M = from_qfield(u)
        assert (M.fiber_mass() == u.Q).all()
        assert to_qfield(M) == u


# --- coherence --------------------------------------------------------------


def test_continuous_field_is_coherent():
    M = from_qfield(field(UNIT, lambda p: p[0], lambda p: p[0] + 10))
    rep = check_coherence(M, 1.0)
    assert rep.coherent and rep.resolution == pytest.approx(0.1)


def test_sign_jump_flagged_at_zero_neighbours():
    u = suites.sign_jump_field()
    rep = check_coherence(from_qfield(u), 0.5)
    assert not rep.coherent
    zero = int(np.flatnonzero(u.points[:, 0] == 0.0)[0])
    assert {p for p, q in rep.violations} | {q for p, q in rep.violations} == {zero - 1, zero, zero + 1}


def test_single_point_vacuously_coherent():
    M = Multisection(np.array([[0.0]]), np.zeros((0, 2), int), (np.array([[1.0], [2.0]]),), ((1, 1),), 2)
    assert check_coherence(M, 0.5).coherent


def test_overlapping_balls_rejected():
    M = from_qfield(field(UNIT, lambda p: p[0], lambda p: p[0] + 1))
    with pytest.raises(ValueError, match="overlap"):
        check_coherence(M, 0.6)
    with pytest.raises(ValueError):
        check_coherence(M, 0.0)


# --- cone condition ---------------------------------------------------------


def test_cone_slope_two():
    M = from_qfield(field(UNIT, lambda p: 2 * p[0]))
    assert not check_cone(M, 1.0).passed
    rep = check_cone(M, 2.0)
    assert rep.passed and rep.cone_constant == pytest.approx(2.0, abs=1e-12)


def test_cone_constant_field():
    M = from_qfield(field(UNIT, lambda p: 3.0, lambda p: -1.0))
    assert check_cone(M, 0.0).passed and check_cone(M, 0.0).cone_constant == 0.0


def test_cone_lipschitz_field_passes_with_its_constant():
    u = field(UNIT, lambda p: 0.5 * p[0], lambda p: 5 - 0.25 * p[0])
    assert check_cone(from_qfield(u), lipschitz_estimate(u)).passed


@given(seeds)
def test_cone_constant_below_lipschitz(seed):
    rng = np.random.default_rng(seed)
    fields = suites.roundtrip_fields(rng, 3) + suites.coherent_fields(rng, 2)
    for u in fields:
        vals = [expand(s.atoms) for s in u.samples]
        ell = edge_lipschitz([tuple(p) for p in u.points], u.edges.tolist(), vals)
        assert check_cone(from_qfield(u), math.inf).cone_constant <= ell + 1e-9


# --- Lipschitz from the cone condition --------------------------------------


def test_lipschitz_from_cone_constant():
    rep = lipschitz_from_cone(from_qfield(field(UNIT, lambda p: 1.0, mults=[2])))
    assert rep.lipschitz == 0.0 and rep.passed


def test_lipschitz_from_cone_double_sheet_equality():
    rep = lipschitz_from_cone(from_qfield(field(UNIT, lambda p: p[0], mults=[2])))
    assert rep.lipschitz == pytest.approx(math.sqrt(2), abs=1e-12)
    assert rep.cone_constant == pytest.approx(1.0, abs=1e-12)
    assert rep.bound == pytest.approx(rep.lipschitz, abs=1e-12)


def test_lipschitz_from_cone_separated_sheets():
    rep = lipschitz_from_cone(from_qfield(field(UNIT, lambda p: p[0], lambda p: p[0] + 10)))
    assert rep.lipschitz == pytest.approx(math.sqrt(2), abs=1e-12)
    assert rep.bound == pytest.approx(math.sqrt(2), abs=1e-12)


def test_lipschitz_from_cone_rejects_incoherent():
    with pytest.raises(InvariantViolation):
        lipschitz_from_cone(from_qfield(suites.sign_jump_field()), 0.5)


@given(seeds)
def test_lipschitz_bound_on_coherent_fields(seed):
    for u in suites.coherent_fields(np.random.default_rng(seed), 4):
        M = from_qfield(u)
        sep = default_separation(M)
        rep = lipschitz_from_cone(M, sep)
        assert rep.lipschitz <= math.sqrt(u.Q) * rep.cone_constant + 1e-9
