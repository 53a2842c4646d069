"""Exit criteria, each at its stated tolerance; one PASS/FAIL line per criterion."""

import math
import time
from pathlib import Path

import numpy as np

from greendyn.cli import main
from greendyn.greens import affine_green, gammas, green_partial, sup_gamma
from greendyn.indeterminacy import (backward_orbit, doubly_exponential_schedule, indeterminacy_points,
                                    liouville_theta, match_point_sets, recurrence_sum, stability_check)
from greendyn.projmap import (Backend, ProjectivePoint, chordal_dist, compose, degree_sequence,
                              map_eval, normalize)
from greendyn.regularity import PairSampleSet, Region, chi_top, fit_modulus, sample_pairs
from greendyn.scenarios import (_line_point, build, fabc_line_map, oracle_green, rotation_row,
                                rotation_table, torus_fill_fraction, torus_preimages)

HOLDER_SCALES = [10.0 ** -k for k in range(1, 6)]


def test_degree_drop(report):
    t0 = time.perf_counter()
    degs = degree_sequence(build("degree-drop").map, 2)
    dt = time.perf_counter() - t0
    report("1 degree drop", degs == [2, 3] and dt < 1.0, f"degrees {degs}, {dt:.2f}s")


def test_quadratic_green_oracles(report):
    t0 = time.perf_counter()
    t = np.linspace(-4, 4, 41)
    grid = [complex(x, y) for x in t for y in t]
    e0 = max(abs(affine_green(0, z, 40) - max(math.log(abs(z)), 0.0) if z else affine_green(0, z, 40))
             for z in grid)
    e2 = max(abs(affine_green(-2, z, 40) - oracle_green(-2, z)) for z in grid)
    dt = time.perf_counter() - t0
    report("2 quadratic Green oracles", e0 <= 1e-8 and e2 <= 1e-6 and dt < 5.0,
           f"c=0 err {e0:.2e}, c=-2 err {e2:.2e}, {dt:.2f}s")


def test_chi_top_values(report):
    t0 = time.perf_counter()
    e0 = chi_top(build("quadratic", c=0).map, 12, "julia", 2000).value
    e2 = chi_top(build("quadratic", c=-2).map, 12, "julia", 2000).value
    dt = time.perf_counter() - t0
    r0 = abs(e0 / math.log(2) - 1)
    r2 = abs(e2 / (2 * math.log(2)) - 1)
    report("3 chi_top estimates", r0 <= 0.02 and r2 <= 0.05 and dt < 30.0,
           f"c=0 {e0:.6f} ({r0:.2%}), c=-2 {e2:.6f} ({r2:.2%}), {dt:.2f}s")


def _planted_holder(alpha: float) -> PairSampleSet:
    d = np.geomspace(1e-6, 1e-1, 400)
    return PairSampleSet.from_arrays(d, 0.7 * d ** alpha)


def test_holder_fit(report):
    f = build("quadratic", c=-2).map
    fit = fit_modulus(sample_pairs(f, Region("julia"), 40, 2000, HOLDER_SCALES, seed=0), "HOLDER")
    planted = fit_modulus(_planted_holder(0.37), "HOLDER")
    perr = abs(planted.alpha_hat - 0.37)
    ok = 0.40 <= fit.alpha_hat <= 0.60 and math.isfinite(fit.residual_rms) and perr <= 1e-6
    report("4 Hoelder fit", ok, f"alpha_hat {fit.alpha_hat:.4f} rms {fit.residual_rms:.3g}; "
                               f"planted 0.37 error {perr:.1e}")


def test_exponent_bound_consistency(report):
    parts, ok = [], True
    for c in (0, -2):
        f = build("quadratic", c=c).map
        alpha = fit_modulus(sample_pairs(f, Region("julia"), 40, 2000, HOLDER_SCALES, seed=0),
                            "HOLDER").alpha_hat
        bound = 0.9 * math.log(2) / chi_top(f, 12, "julia", 2000).value
        ok &= alpha >= bound
        parts.append(f"c={c} alpha {alpha:.4f} >= {bound:.4f}")
    report("5 exponent vs log(lambda)/chi_top", ok, "; ".join(parts))


def test_fabc_verification(report):
    t0 = time.perf_counter()
    sc = build("fabc", a=2, b=3, c=5)
    f = sc.map
    gap = match_point_sets(indeterminacy_points(f), [p for _, p in sc.indeterminacy])
    ident = normalize(compose(f, f.inverse))
    diag = [dict(p.terms) for p in ident.components]
    unit = [tuple(int(i == j) for i in range(3)) for j in range(3)]
    is_id = (ident.degree == 1 and all(t.keys() == {u} for t, u in zip(diag, unit))
             and len({t[u] for t, u in zip(diag, unit)}) == 1)
    rng = np.random.default_rng(3)
    ff = f.to_backend(Backend.FLOAT)
    worst = 0.0
    for which in ("Z0", "X0", "Y0"):
        for _ in range(100):
            w = complex(rng.normal(), rng.normal())
            img = map_eval(ff, _line_point(which, w))
            worst = max(worst, chordal_dist(img, _line_point(which, fabc_line_map(which, (2, 3, 5), w))))
    dt = time.perf_counter() - t0
    report("6 f_abc verification", gap <= 1e-10 and is_id and worst <= 1e-12 and dt < 5.0,
           f"I_f gap {gap:.1e}, identity {is_id}, line error {worst:.1e}, {dt:.2f}s")


def test_rotation_stability(report):
    sc = build("fabc-rotation", s=2, theta="sqrt2")
    tgt = [p for _, p in sc.metadata["inverse_indeterminacy"]]
    rep = stability_check(sc.map, sc.inverse, 50, source=sc.indeterminacy, target=tgt,
                          closed_forms=sc.closed_forms)
    z_row = [(lab, p) for lab, p in sc.indeterminacy if lab == "Iz"]
    table = backward_orbit(sc.inverse, z_row, 20, tgt)
    th = sc.metadata["theta"]
    row = max(chordal_dist(r.point, rotation_row(th, r.n)[0]) for r in table.rows if r.n <= 20)
    ok = rep.verdict == "STABLE-UP-TO-50" and rep.min_dist > 1e-3 and row <= 1e-9
    report("7 rotation-parameter 1-stability", ok,
           f"{rep.verdict}, min_dist {rep.min_dist:.4g}, row error {row:.1e}")


def test_recurrence_dichotomy(report):
    t0 = time.perf_counter()
    g = build("fabc-rotation", s=2, theta="golden")
    tgt = [p for _, p in g.metadata["inverse_indeterminacy"]]
    conv = recurrence_sum(backward_orbit(g.inverse, g.indeterminacy, 40, tgt, g.closed_forms), 2.0, 2)
    tail = max(abs(conv.partials[-1] - conv.partials[n]) for n in range(30, len(conv.partials)))
    lt = liouville_theta(doubly_exponential_schedule, 3, 256)
    div = recurrence_sum(rotation_table(lt.theta, 40), 2.0, 2, witnesses=lt.odd_witnesses(),
                         schedule=doubly_exponential_schedule)
    low = min(div.partials[n] for n in lt.witnesses)
    dt = time.perf_counter() - t0
    ok = (conv.verdict.value == "CONVERGENT-TREND" and tail < 1e-6
          and div.verdict.value == "DIVERGENT-TREND" and low < -1e3 and dt < 10.0)
    report("8 recurrence dichotomy", ok,
           f"golden {conv.verdict.value} tail {tail:.1e}; liouville {div.verdict.value} "
           f"min witnessed partial {low:.3f} (needs < -1e3); {dt:.2f}s")


def test_torus_density(report):
    t0 = time.perf_counter()
    n1 = len(torus_preimages(3, 4, depth=1))
    pts2 = torus_preimages(3, 4, depth=2)
    fill = torus_fill_fraction(pts2, 50)
    dt = time.perf_counter() - t0
    fill3 = torus_fill_fraction(torus_preimages(3, 4, depth=3), 50)
    print(f"\ninfo torus depth-3 fill {fill3:.4f}")
    report("9 torus density", n1 == 64 and len(pts2) == 4096 and fill >= 0.95 and dt < 30.0,
           f"depth-1 {n1} points, depth-2 {len(pts2)} points fill {fill:.4f} (needs >= 0.95), {dt:.2f}s")


def _p2_points(rng, k):
    return rng.normal(size=(k, 3)) + 1j * rng.normal(size=(k, 3))


def test_property_suites(report, tmp_path):
    rng = np.random.default_rng(11)
    f = build("weakly-regular").map.to_backend(Backend.FLOAT)
    Z = _p2_points(rng, 200)
    scale = rng.normal(size=(200, 1)) + 1j * rng.normal(size=(200, 1))
    lift = float(np.max(np.abs(gammas(f, Z) - gammas(f, Z * scale))))

    shift = sup_gamma(f, 64)
    fe = 0.0
    mono = True
    for z in Z[:20]:
        x = ProjectivePoint(tuple(z))
        s = green_partial(f, x, 12, shift)
        nxt = green_partial(f, map_eval(f, x), 11, shift)
        fe = max(fe, abs(s.value - (s.partial_sums[1] + nxt.value / f.degree)))
        m = green_partial(f, x, 40, shift).partial_sums
        mono &= all(b <= a + 1e-12 for a, b in zip(m, m[1:]))

    g = build("fabc", a=2, b=3, c=5).map.to_backend(Backend.FLOAT)
    gf = compose(g, f)
    comp = 0.0
    for z in Z[:50]:
        x = ProjectivePoint(tuple(z))
        comp = max(comp, chordal_dist(map_eval(gf, x), map_eval(g, map_eval(f, x))))

    outs = []
    for threads in (1, 4):
        prefix = tmp_path / f"t{threads}"
        rc = main(["green-heatmap", "--scenario", "quadratic", "--params", "c=-1", "--res", "48",
                   "--n", "20", "--threads", str(threads), "--out", str(prefix)])
        outs.append((rc, Path(f"{prefix}.csv").read_bytes(), Path(f"{prefix}.pgm").read_bytes()))
    det = outs[0] == outs[1] and outs[0][0] == 0

    ok = lift <= 1e-12 and fe <= 1e-10 and mono and comp <= 1e-9 and det
    report("10 property suites", ok,
           f"lift {lift:.1e}, functional eq {fe:.1e}, monotone {mono}, composition {comp:.1e}, "
           f"threads byte-identical {det}")
