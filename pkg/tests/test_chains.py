import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qgmt import suites
from qgmt.chains import (
    PLQField,
    RefinementError,
    SimplicialChain,
    SimplicialComplex,
    affine_homotopy_fill,
    boundary,
    check_boundary_commutation,
    dyadic_boundary_construction,
    flat_pushforward_stability,
    graph_chain,
    grid_complex,
    homotopy_mass_bound,
    mass,
    plane_intersection_number,
    pushforward,
    qpushforward,
    simplicial_flat_norm,
)
from qgmt.qfields import SampledQField, select_sheets

S = SimplicialChain.simplex
seeds = st.integers(0, 2**32 - 1)


def pt(*xs):
    return SimplicialChain(0, len(xs), [(np.array([xs]), 1)])


def segment_field(*branches):
    """PL field on [0,1] (one simplex) with branch values at (0, 1)."""
    return PLQField([[0.0], [1.0]], [[0, 1]], [[[[a], [b]] for a, b in branches]])


UNIT = S([[0.0], [1.0]])


# --- chains -----------------------------------------------------------------


def test_canonical_form():
    a = S([[1.0], [0.0]])
    assert a == -UNIT
    assert (UNIT + a).is_zero()
    assert S([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]).is_zero()  # degenerate triangle dropped


def test_boundary_examples():
    assert boundary(UNIT) == pt(1.0) - pt(0.0)
    tri = S([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    expected = S([[1.0, 0.0], [0.0, 1.0]]) - S([[0.0, 0.0], [0.0, 1.0]]) + S([[0.0, 0.0], [1.0, 0.0]])
    assert boundary(tri) == expected
    assert boundary(boundary(tri)).is_zero()
    with pytest.raises(ValueError):
        boundary(pt(0.0))


def test_mass_examples():
    assert mass(3 * S([[0.0], [2.0]])) == 6.0
    assert mass(SimplicialChain.zero(1, 1)) == 0.0
    assert mass(S([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])) == pytest.approx(0.5)


def test_pushforward_examples():
    assert pushforward(lambda X: X, UNIT) == UNIT
    assert pushforward(lambda X: np.zeros_like(X), UNIT).is_zero()
    assert pushforward(lambda X: 2 * X, UNIT) == S([[0.0], [2.0]])


def test_json_roundtrip():
    c = 2 * S([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]) - S([[1.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
    assert SimplicialChain.from_json(c.to_json()) == c
    K = grid_complex(2, 2)
    K2 = SimplicialComplex.from_json(K.to_json())
    assert K2.simplices == K.simplices


def test_complex_rejects_unclosed_json():
    with pytest.raises(ValueError, match="closed"):
        SimplicialComplex.from_json({"vertices": [[0.0], [1.0]], "simplices": [[0, 1]]})


@given(seeds)
def test_boundary_of_boundary_vanishes(seed):
    for P in suites.random_chains(np.random.default_rng(seed), 5):
        assert boundary(boundary(P)).is_zero()


@given(seeds)
def test_mass_subadditive(seed):
    rng = np.random.default_rng(seed)
    P1, P2 = suites.random_chains(rng, 1)[0], suites.random_chains(rng, 1)[0]
    if (P1.m, P1.d) == (P2.m, P2.d):
        assert mass(P1 + P2) <= mass(P1) + mass(P2) + 1e-12


def test_complex_boundary_matrices_compose_to_zero():
    K = grid_complex(2, 3)
    for k in range(2, 4):
        assert not (K.boundary_matrix(k - 1) @ K.boundary_matrix(k)).count_nonzero()


# --- flat norm --------------------------------------------------------------


def test_flat_norm_point_pair():
    K = grid_complex(1, 1)
    res = simplicial_flat_norm(pt(1.0) - pt(0.0), K)
    assert res.value == pytest.approx(1.0, abs=1e-12)
    assert res.integral and res.filling == UNIT


def test_flat_norm_zero_chain():
    assert simplicial_flat_norm(SimplicialChain.zero(0, 1), grid_complex(1, 1)).value == 0.0


def test_flat_norm_square_boundary():
    K = grid_complex(1, 2)
    T = boundary(K.fundamental_chain())
    res = simplicial_flat_norm(T, K)
    assert res.value == pytest.approx(1.0, abs=1e-9)


def test_flat_norm_rejects_foreign_chain():
    with pytest.raises(ValueError):
        simplicial_flat_norm(pt(0.5), grid_complex(1, 1))


@given(seeds)
def test_flat_norm_bounded_by_mass(seed):
    for case in suites.flat_cases(np.random.default_rng(seed), 3):
        value = simplicial_flat_norm(case.T, case.K).value
        assert value <= mass(case.T) + 1e-9
        if case.K.count(case.T.m + 1) == 0:
            assert value == pytest.approx(mass(case.T), abs=1e-9)


# --- Q-valued push-forward --------------------------------------------------


def test_qpushforward_examples():
    u1 = segment_field((0.0, 1.0))
    assert qpushforward(u1, UNIT) == pushforward(lambda X: X, UNIT)
    u = segment_field((0.0, 1.0), (0.0, -1.0))
    assert qpushforward(u, UNIT) == UNIT + S([[0.0], [-1.0]])
    assert qpushforward(segment_field((0.0, 1.0), (0.0, 1.0)), UNIT) == 2 * UNIT


def test_graph_chain_examples():
    assert graph_chain(segment_field((0.0, 0.0), (0.0, 0.0)), UNIT) == 2 * S([[0.0, 0.0], [1.0, 0.0]])
    assert graph_chain(segment_field((0.0, 1.0)), UNIT) == S([[0.0, 0.0], [1.0, 1.0]])
    two = graph_chain(segment_field((0.0, 1.0), (0.0, -1.0)), UNIT)
    assert two == S([[0.0, 0.0], [1.0, 1.0]]) + S([[0.0, 0.0], [1.0, -1.0]])


def test_pushforward_requires_faces_of_the_triangulation():
    with pytest.raises(RefinementError):
        qpushforward(segment_field((0.0, 1.0)), S([[0.0], [0.5]]))


def test_boundary_commutation_cross():
    rep = check_boundary_commutation(segment_field((0.0, 1.0), (0.0, -1.0)), UNIT)
    assert rep.passed
    assert rep.lhs == pt(1.0) + pt(-1.0) - 2 * pt(0.0)


def test_boundary_commutation_smooth_single_branch():
    K = grid_complex(8, 1)
    vals = np.sin(3 * K.vertices[:, 0])[None, :, None]
    u = PLQField.from_sheets(K.vertices, K.simplices[1], vals)
    assert check_boundary_commutation(u, K.fundamental_chain()).passed


def test_boundary_commutation_square_with_crossing():
    K = grid_complex(3, 2)
    X = K.vertices
    a = np.stack([X[:, 0] - 0.5, X[:, 1]], axis=1)
    b = np.stack([0.5 - X[:, 0], X[:, 1] + X[:, 0] ** 2], axis=1)
    u = PLQField.from_sheets(X, K.simplices[2], np.stack([a, b]))
    assert check_boundary_commutation(u, K.fundamental_chain()).passed


@given(seeds)
def test_boundary_commutation_random_fields(seed):
    for case in suites.pl_fields(np.random.default_rng(seed), 2):
        assert check_boundary_commutation(case.u, case.P).passed


def test_selection_independence():
    axes = [np.linspace(-1.0, 1.0, 9)]
    u = SampledQField.from_sheets(axes, [lambda p: p[0], lambda p: -p[0]])
    sims = [[i, i + 1] for i in range(8)]
    from_sel = PLQField.from_selection(u, select_sheets(u), sims)
    swapped = PLQField.from_sheets(u.points, sims, np.stack([np.abs(u.points), -np.abs(u.points)]))
    P = SimplicialChain(1, 1, [(u.points[s], 1) for s in sims])
    assert qpushforward(from_sel, P) == qpushforward(swapped, P)
    assert graph_chain(from_sel, P) == graph_chain(swapped, P)


def test_json_roundtrip_field():
    u = segment_field((0.0, 1.0), (0.0, -1.0))
    v = PLQField.from_json(u.to_json())
    assert qpushforward(v, UNIT) == qpushforward(u, UNIT)


# --- homotopies -------------------------------------------------------------


def test_homotopy_equal_maps_give_zero():
    f = lambda X: 2 * X  # noqa: E731
    assert affine_homotopy_fill(f, f, UNIT).is_zero()


def test_homotopy_point_to_segment():
    fill = affine_homotopy_fill(lambda X: np.zeros_like(X), lambda X: np.ones_like(X), pt(0.0))
    assert fill == UNIT


def test_homotopy_identity_on_segment():
    P = S([[0.0, 0.0], [1.0, 0.0]])
    f = lambda X: np.zeros((len(X), 2))  # noqa: E731
    g = lambda X: X + np.array([0.0, 1.0])  # noqa: E731
    fill = affine_homotopy_fill(f, g, P)
    assert boundary(fill) == pushforward(g, P) - pushforward(f, P) - affine_homotopy_fill(f, g, boundary(P))
    # the fill is the triangle (0,0), (0,1), (1,1)
    assert mass(fill) == pytest.approx(0.5, abs=1e-12)


def line_multiplicity(T, t):
    """Signed number of sheets of a 1-chain in R^1 covering the point t."""
    total = 0
    for verts, c in T.terms:
        a, b = float(verts[0, 0]), float(verts[1, 0])
        if min(a, b) < t < max(a, b):
            total += c if b > a else -c
    return total


@given(seeds)
def test_homotopy_identity_as_currents_in_the_line(seed):
    # with n = m the fill collapses and the identity only holds as currents
    rng = np.random.default_rng(seed)
    path = rng.integers(-3, 4, size=(4, 1)).astype(float)
    P = SimplicialChain(1, 1, [(path[i:i + 2], 1) for i in range(3)])
    verts = P.vertices() if len(P) else np.zeros((1, 1))
    f = suites.vertex_table(verts, rng.uniform(-1, 1, (len(verts), 1)))
    g = suites.vertex_table(verts, rng.uniform(-1, 1, (len(verts), 1)))
    fill = affine_homotopy_fill(f, g, P)
    lhs = boundary(fill) if len(fill) else SimplicialChain.zero(1, 1)
    rhs = pushforward(g, P) - pushforward(f, P) - affine_homotopy_fill(f, g, boundary(P))
    for t in rng.uniform(-1, 1, 50):
        assert line_multiplicity(lhs, t) == line_multiplicity(rhs, t) == 0


@given(seeds)
def test_homotopy_identity_and_mass_bound(seed):
    for case in suites.homotopy_cases(np.random.default_rng(seed), 3, m=1):
        fill = affine_homotopy_fill(case.f, case.g, case.P)
        rhs = pushforward(case.g, case.P) - pushforward(case.f, case.P) - affine_homotopy_fill(case.f, case.g, boundary(case.P))
        assert boundary(fill) == rhs
        hb = homotopy_mass_bound(case.f, case.g, case.P)
        assert mass(fill) <= hb.bound_linear + 1e-9
        assert hb.bound == pytest.approx(hb.bound_linear)


@given(seeds)
def test_homotopy_two_dimensional_bound_with_power(seed):
    for case in suites.homotopy_cases(np.random.default_rng(seed), 2, m=2):
        fill = affine_homotopy_fill(case.f, case.g, case.P)
        assert mass(fill) <= homotopy_mass_bound(case.f, case.g, case.P).bound + 1e-9


def test_linear_bound_fails_for_points():
    # For 0-chains the slope factor vanishes while the fill is a segment.
    f, g = (lambda X: np.zeros_like(X)), (lambda X: np.ones_like(X))
    hb = homotopy_mass_bound(f, g, pt(0.0))
    assert mass(affine_homotopy_fill(f, g, pt(0.0))) == 1.0
    assert hb.bound_linear == 0.0


def test_linear_bound_fails_for_large_planar_maps():
    # f collapses the triangle to the origin, g lifts a 10x copy to height 10:
    # the fill is a cone of volume 1000/6 while gap * slope * mass is about 70
    tri = S([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    f = lambda X: np.zeros((len(X), 3))  # noqa: E731
    g = lambda X: np.hstack([10 * X, np.full((len(X), 1), 10.0)])  # noqa: E731
    fill = affine_homotopy_fill(f, g, tri)
    hb = homotopy_mass_bound(f, g, tri)
    assert mass(fill) == pytest.approx(1000 / 6, rel=1e-12)
    assert mass(fill) > hb.bound_linear
    assert mass(fill) <= hb.bound


# --- stability --------------------------------------------------------------


def test_stability_equal_chains():
    K = grid_complex(4, 1)
    u = PLQField.from_sheets(K.vertices, K.simplices[1], np.stack([K.vertices, -K.vertices]))
    P = K.fundamental_chain()
    rep = flat_pushforward_stability(u, P, P, K)
    assert rep.ratio == 0.0 and rep.passed


def test_stability_identity_ratio_one():
    K = grid_complex(4, 1)
    u = PLQField.from_sheets(K.vertices, K.simplices[1], K.vertices[None])
    P1 = S([[0.0], [0.25]])
    P2 = S([[0.25], [0.5]])
    rep = flat_pushforward_stability(u, P1, P2, K)
    assert rep.ratio == pytest.approx(1.0, abs=1e-9)


@given(seeds)
def test_stability_ratio_finite(seed):
    for case in suites.stability_cases(np.random.default_rng(seed), 2):
        rep = flat_pushforward_stability(case.u, case.P1, case.P2, case.K)
        assert math.isfinite(rep.ratio) and rep.passed


# --- cube construction and probes --------------------------------------------


def test_dyadic_construction_boundary():
    K = grid_complex(4, 1)
    x = K.vertices
    u = PLQField.from_sheets(x, K.simplices[1], np.stack([x, x + 3.0, 0.5 * x]))
    rep = dyadic_boundary_construction(u, 4, 1)
    assert rep.boundary_matches
    assert rep.separated_cubes + rep.homotopy_cubes == 2


def test_dyadic_construction_square():
    K = grid_complex(4, 2)
    x = K.vertices
    vals = np.stack([x[:, :1] * x[:, 1:], -x[:, :1] + 0.25])
    u = PLQField.from_sheets(x, K.simplices[2], vals)
    assert dyadic_boundary_construction(u, 4, 2).boundary_matches


def test_plane_intersection_counts():
    line = S([[-1.0, 0.0], [1.0, 0.0]])
    assert plane_intersection_number(line, [0.3, 0.0], [[0.0, 1.0]]) == 1
    assert plane_intersection_number(-line, [0.3, 0.0], [[0.0, 1.0]]) == -1
    assert plane_intersection_number(line, [3.0, 0.0], [[0.0, 1.0]]) == 0
    with pytest.raises(ValueError):
        plane_intersection_number(line, [0.0, 0.0], [[0.0, 1.0], [1.0, 0.0]])
