"""Stored reproductions of the worked examples; each returns (passed, detail)."""

from __future__ import annotations

import math
from typing import Callable, Dict, Tuple

import numpy as np

from .greens import affine_green
from .indeterminacy import (backward_orbit, doubly_exponential_schedule, indeterminacy_points,
                            liouville_theta, match_point_sets, recurrence_sum, stability_check)
from .projmap import (Backend, ProjectivePoint, chordal_dist, compose, degree_sequence, map_eval,
                      normalize)
from .regularity import Region, chi_top, fit_modulus, sample_pairs
from .scenarios import (_line_point, build, fabc_line_map, oracle_green, rotation_row,
                        rotation_table, torus_fill_fraction, torus_preimages)

Check = Callable[[], Tuple[bool, str]]


def degree_drop() -> Tuple[bool, str]:
    degs = degree_sequence(build("degree-drop").map, 2)
    return degs == [2, 3], f"d-sequence {degs}"


def _green_grid(c: float, reference) -> float:
    t = np.linspace(-4, 4, 41)
    return max(abs(affine_green(c, complex(x, y), 40) - reference(complex(x, y))) for x in t for y in t)


def green_c0() -> Tuple[bool, str]:
    err = _green_grid(0.0, lambda z: max(math.log(abs(z)), 0.0) if z else 0.0)
    return err <= 1e-8, f"max error {err:.3e}"


def green_cm2() -> Tuple[bool, str]:
    err = _green_grid(-2.0, lambda z: oracle_green(-2, z))
    return err <= 1e-6, f"max error {err:.3e}"


def chi_top_values() -> Tuple[bool, str]:
    e0 = chi_top(build("quadratic", c=0).map, 12, "julia", 2000).value
    e2 = chi_top(build("quadratic", c=-2).map, 12, "julia", 2000).value
    r0 = abs(e0 / math.log(2) - 1)
    r2 = abs(e2 / (2 * math.log(2)) - 1)
    return r0 <= 0.02 and r2 <= 0.05, f"c=0 {e0:.6f} ({r0:.2%}), c=-2 {e2:.6f} ({r2:.2%})"


def holder() -> Tuple[bool, str]:
    f = build("quadratic", c=-2).map
    pairs = sample_pairs(f, Region("julia"), 40, 2000, [10.0 ** -k for k in range(1, 6)], seed=0)
    fit = fit_modulus(pairs, "HOLDER")
    return 0.4 <= fit.alpha_hat <= 0.6, f"alpha_hat {fit.alpha_hat:.4f} rms {fit.residual_rms:.3g}"


def fabc() -> Tuple[bool, str]:
    sc = build("fabc", a=2, b=3, c=5)
    f = sc.map
    gap = match_point_sets(indeterminacy_points(f), [p for _, p in sc.indeterminacy])
    ident = normalize(compose(f, f.inverse))
    is_id = ident.degree == 1 and all(
        dict(p.terms).keys() == {tuple(int(i == j) for i in range(3))} for j, p in enumerate(ident.components)
    ) and len({dict(p.terms)[tuple(int(i == j) for i in range(3))] for j, p in enumerate(ident.components)}) == 1
    rng = np.random.default_rng(3)
    worst = 0.0
    ff = f.to_backend(Backend.FLOAT)
    for which in ("Z0", "X0", "Y0"):
        for _ in range(100):
            w = complex(rng.normal(), rng.normal())
            img = map_eval(ff, _line_point(which, w))
            want = _line_point(which, fabc_line_map(which, (2, 3, 5), w))
            worst = max(worst, chordal_dist(img, want))
    ok = gap <= 1e-10 and is_id and worst <= 1e-12
    return ok, f"I_f gap {gap:.2e}, identity {is_id}, line error {worst:.2e}"


def rotation_stability() -> Tuple[bool, str]:
    sc = build("fabc-rotation", s=2, theta="sqrt2")
    tgt = [p for _, p in sc.metadata["inverse_indeterminacy"]]
    rep = stability_check(sc.map, sc.inverse, 50, source=sc.indeterminacy, target=tgt,
                          closed_forms=sc.closed_forms)
    table = backward_orbit(sc.inverse, sc.indeterminacy[:1], 20, tgt)
    th = sc.metadata["theta"]
    row = max(chordal_dist(r.point, rotation_row(th, r.n)[0]) for r in table.rows)
    ok = rep.verdict == "STABLE-UP-TO-50" and rep.min_dist > 1e-3 and row <= 1e-9
    return ok, f"{rep.verdict} min_dist {rep.min_dist:.4g}, rotation row error {row:.2e}"


def recurrence() -> Tuple[bool, str]:
    g = build("fabc-rotation", s=2, theta="golden")
    tgt = [p for _, p in g.metadata["inverse_indeterminacy"]]
    table = backward_orbit(g.inverse, g.indeterminacy, 40, tgt, g.closed_forms)
    conv = recurrence_sum(table, 2.0, 2)
    tail = abs(conv.partials[-1] - conv.partials[30])
    lt = liouville_theta(doubly_exponential_schedule, 3, 256)
    div = recurrence_sum(rotation_table(lt.theta, 40), 2.0, 2, witnesses=lt.odd_witnesses(),
                         schedule=doubly_exponential_schedule)
    low = min(div.partials[n] for n in lt.witnesses)
    ok = (conv.verdict.value == "CONVERGENT-TREND" and tail < 1e-6
          and div.verdict.value == "DIVERGENT-TREND" and low < -1e3)
    return ok, (f"golden {conv.verdict.value} tail {tail:.1e}; liouville {div.verdict.value} "
                f"min witnessed partial {low:.3f} (threshold -1e3)")


def torus() -> Tuple[bool, str]:
    n1 = len(torus_preimages(3, 4, depth=1))
    fill = torus_fill_fraction(torus_preimages(3, 4, depth=2), 50)
    return n1 == 64 and fill >= 0.95, f"depth-1 count {n1}, depth-2 fill {fill:.4f} (threshold 0.95)"


CHECKS: Dict[str, Check] = {
    "degree-drop": degree_drop,
    "green-c0": green_c0,
    "green-c-2": green_cm2,
    "chi-top": chi_top_values,
    "holder": holder,
    "fabc": fabc,
    "rotation-stability": rotation_stability,
    "recurrence": recurrence,
    "torus": torus,
}

# older name kept for scripts that still call it
ALIASES = {"example21": "degree-drop"}
