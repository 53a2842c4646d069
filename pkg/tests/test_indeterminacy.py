import math
from fractions import Fraction

import numpy as np
import pytest

from greendyn.errors import InsufficientData, PositiveDimensionalLocus, PrecisionBudgetExceeded
from greendyn.indeterminacy import (OrbitRow, OrbitTable, Verdict, backward_orbit, doubly_exponential_schedule,
                                    indeterminacy_points, liouville_theta, match_point_sets, recurrence_sum,
                                    stability_check, verify_points)
from greendyn.projmap import Backend, ProjectiveMap, ProjectivePoint, chordal_dist, identity_map
from greendyn.scenarios import build, fabc_line_map, rotation_row, rotation_table


def squares():
    return ProjectiveMap.from_terms(2, [{(2, 0, 0): 1}, {(0, 2, 0): 1}, {(0, 0, 2): 1}])


# ---------------------------------------------------------------- solver

def test_degree_drop_locus():
    pts = indeterminacy_points(build("degree-drop").map)
    # [0:0:1] as stated, plus [0:1:0] where z0^2, z1 z2 and z0 z1 also vanish
    assert match_point_sets(pts, [ProjectivePoint.of(0, 0, 1), ProjectivePoint.of(0, 1, 0)]) <= 1e-10


def test_fabc_locus():
    sc = build("fabc", a=2, b=3, c=5)
    want = [ProjectivePoint.of(2, 1, 0), ProjectivePoint.of(0, 3, 1), ProjectivePoint.of(1, 0, 5)]
    assert match_point_sets(indeterminacy_points(sc.map), want) <= 1e-10


def test_holomorphic_empty():
    assert indeterminacy_points(squares()) == []


@pytest.mark.parametrize("name,params", [("degree-drop", {}), ("fabc", dict(a=2, b=3, c=5)),
                                         ("fabc", dict(a=Fraction(1, 2), b=-3, c=Fraction(7, 3))),
                                         ("weakly-regular", {})])
def test_numeric_agrees_with_exact(name, params):
    f = build(name, **params).map
    num = indeterminacy_points(f, "numeric")
    ex = indeterminacy_points(f, "exact")
    assert len(num) == len(ex)
    assert match_point_sets(num, ex) <= 1e-10


@pytest.mark.parametrize("seed", range(5))
def test_verified_closure(seed):
    rng = np.random.default_rng(seed)
    a, b, c = rng.normal(size=3) + 1j * rng.normal(size=3)
    f = build("fabc", a=a, b=b, c=c).map
    pts = indeterminacy_points(f, seed=seed)
    assert len(pts) == 3
    for p in pts:
        z = p.unit_lift()
        for comp in f.components:
            val = sum(coef * np.prod(z ** np.array(e)) for e, coef in comp.terms)
            assert abs(val) <= 1e-10 * comp.l1_norm()
    assert verify_points(f, pts)


def test_positive_dimensional_locus():
    # components share the factor z0
    f = ProjectiveMap.from_terms(2, [{(2, 0, 0): 1}, {(1, 1, 0): 1}, {(1, 0, 1): 1}])
    with pytest.raises(PositiveDimensionalLocus):
        indeterminacy_points(f)


def test_p1_maps_are_empty():
    assert indeterminacy_points(build("quadratic", c=-1).map) == []


# ---------------------------------------------------------------- backward orbits

def test_zero_depth_table_is_source():
    sc = build("fabc", a=2, b=3, c=5)
    t = backward_orbit(sc.inverse, sc.indeterminacy, 0)
    assert [(r.label, r.point) for r in t.rows] == [(lab, p) for lab, p in sc.indeterminacy]


def test_line_invariance_exact_zeros():
    sc = build("fabc", a=2, b=3, c=5)
    t = backward_orbit(sc.inverse, sc.indeterminacy, 25)
    zero_index = {"Iz": 2, "Ix": 0, "Iy": 1}
    for r in t.rows:
        assert r.point.coords[zero_index[r.label]] == 0


def test_line_formulas_random_points():
    rng = np.random.default_rng(8)
    f = build("fabc", a=2, b=3, c=5).map.to_backend(Backend.FLOAT)
    from greendyn.projmap import map_eval
    for _ in range(100):
        x = complex(rng.normal(), rng.normal())
        img = map_eval(f, ProjectivePoint.of(x, 1, 0))
        want = ProjectivePoint.of(-(3 * 5 / 2) * x, 1, 0)
        assert chordal_dist(img, want) <= 1e-12
        assert fabc_line_map("Z0", (2, 3, 5), x) == pytest.approx(-(15 / 2) * x)


def test_rotation_row_matches_iteration():
    sc = build("fabc-rotation", s=2, theta="sqrt2")
    tgt = [p for _, p in sc.metadata["inverse_indeterminacy"]]
    t = backward_orbit(sc.inverse, [sc.indeterminacy[0]], 20, tgt)
    th = sc.metadata["theta"]
    minus_i = ProjectivePoint.of(-1j, 1, 0)
    for r in t.rows:
        pt, d = rotation_row(th, r.n)
        assert chordal_dist(r.point, pt) <= 1e-9
        assert d == pytest.approx(chordal_dist(r.point, minus_i), abs=1e-9)


def test_rotation_x_line_stays_outside_disk():
    sc = build("fabc-rotation", s=2, theta="sqrt2")
    ix = [(lab, p) for lab, p in sc.indeterminacy if lab == "Ix"]
    t = backward_orbit(sc.inverse, ix, 30)
    for r in t.rows:
        _, y, z = r.point.coords
        assert abs(y) > abs(z)


def test_orbit_csv(tmp_path):
    sc = build("fabc", a=2, b=3, c=5)
    t = backward_orbit(sc.inverse, sc.indeterminacy, 3)
    path = tmp_path / "orbit.csv"
    t.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == ("n,label,coord0_re,coord0_im,coord1_re,coord1_im,coord2_re,coord2_im,"
                        "dist_to_Ifinv,gamma_minus,flag")
    assert len(lines) == 1 + len(t.rows)


# ---------------------------------------------------------------- stability

def test_stability_rotation_parameters():
    sc = build("fabc-rotation", s=2, theta="sqrt2")
    tgt = [p for _, p in sc.metadata["inverse_indeterminacy"]]
    rep = stability_check(sc.map, sc.inverse, 50, source=sc.indeterminacy, target=tgt,
                          closed_forms=sc.closed_forms)
    assert rep.verdict == "STABLE-UP-TO-50" and rep.stable
    assert rep.min_dist > 1e-3


def test_stability_degree_drop():
    rep = stability_check(build("degree-drop").map, None, 5)
    assert rep.verdict == "VIOLATED(2)"
    assert rep.degrees[:2] == [2, 3]


def test_stability_identity():
    rep = stability_check(identity_map(2, Backend.EXACT), identity_map(2, Backend.EXACT), 10)
    assert rep.stable


def test_stability_violation_detected():
    # abc = 1 is a rotation by theta = 0, so [a:1:0] maps back onto I_{f^-1} = [1/a:1:0]... directly
    sc = build("fabc", a=1j, b=1j, c=1j)
    rep = stability_check(sc.map, sc.inverse, 10)
    assert rep.verdict.startswith("VIOLATED")


# ---------------------------------------------------------------- recurrence sums

def _flat_table(N):
    p = ProjectivePoint.of(1, 0, 0)
    return OrbitTable([("p", p)], N, [OrbitRow(n, "p", p, 1.0, 0.0, "ok") for n in range(N + 1)], [])


def test_recurrence_unit_distances_sum_to_zero():
    r = recurrence_sum(_flat_table(10), 2.0, 2)
    assert r.partials == [0.0] * 11
    assert r.verdict is Verdict.CONVERGENT


def test_recurrence_golden_converges():
    g = build("fabc-rotation", s=2, theta="golden")
    tgt = [p for _, p in g.metadata["inverse_indeterminacy"]]
    r = recurrence_sum(backward_orbit(g.inverse, g.indeterminacy, 40, tgt, g.closed_forms), 2.0, 2)
    assert r.verdict is Verdict.CONVERGENT
    assert all(abs(r.partials[-1] - r.partials[n]) < 1e-6 for n in range(30, 41))


@pytest.mark.parametrize("theta", ["golden", "sqrt2"])
@pytest.mark.parametrize("q", [1, 2])
def test_recurrence_partials_non_increasing(theta, q):
    r = recurrence_sum(rotation_table(theta, 40), 2.0, q)
    assert all(b <= a for a, b in zip(r.partials, r.partials[1:]))
    assert recurrence_sum(rotation_table(theta, 40), 2.0, q).partials == r.partials


def test_recurrence_liouville_trend():
    lt = liouville_theta(doubly_exponential_schedule, 3, 256)
    r = recurrence_sum(rotation_table(lt.theta, 40), 2.0, 2, witnesses=lt.odd_witnesses(),
                       schedule=doubly_exponential_schedule)
    assert r.verdict is Verdict.DIVERGENT


def test_recurrence_errors(tmp_path):
    with pytest.raises(ValueError):
        recurrence_sum(_flat_table(3), 2.0, 3)
    with pytest.raises(InsufficientData):
        recurrence_sum(_flat_table(0), 2.0, 2)
    r = recurrence_sum(_flat_table(3), 2.0, 1)
    r.to_csv(tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "n,term,partial"


# ---------------------------------------------------------------- Liouville angles

def test_liouville_loose_schedule():
    lt = liouville_theta(lambda n: 0.4, 1, 64)
    m = lt.integers[0]
    assert 0 <= 2 * lt.theta - m < Fraction(0.4)


def test_liouville_certified_residues():
    lt = liouville_theta(doubly_exponential_schedule, 3, 256)
    assert lt.witnesses == [1, 2, 3]
    for n, m, res in zip(lt.witnesses, lt.integers, lt.residues):
        exact = 2 * n * lt.theta - m
        h = Fraction(doubly_exponential_schedule(n))
        assert 0 <= exact <= res < h
        assert exact + 2 * n * lt.error <= res
    assert lt.odd_witnesses() == [n for n, m in zip(lt.witnesses, lt.integers) if m % 2]


def test_liouville_errors():
    with pytest.raises(ValueError):
        liouville_theta(lambda n: 0.1 * n, 2)
    with pytest.raises(PrecisionBudgetExceeded):
        liouville_theta(doubly_exponential_schedule, 4, 256)
