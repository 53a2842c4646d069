"""greendyn command line: one subcommand per operation, CSV/PGM outputs and a manifest per run."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .errors import GreendynError
from .greens import (affine_green, green_grid_points, green_heatmap, green_partial,
                     green_tail_bound, sup_gamma)
from .indeterminacy import (backward_orbit, doubly_exponential_schedule, indeterminacy_points,
                            liouville_theta, recurrence_sum, stability_check)
from .mapio import MapFormatError, dump_map_file, load_map_file
from .outputs import fmt, plot_fit, plot_grid, write_csv, write_grid_csv, write_manifest, write_pgm16
from .projmap import Backend, ProjectivePoint, degree_sequence
from .regularity import Region, beta_estimate, chi_top, fit_modulus, sample_pairs
from .scenarios import (build, oracle_green, parse_value, rotation_table, torus_fill_fraction,
                        torus_preimages)

SUBCOMMANDS = ("degree-seq", "indet", "stability", "green-eval", "green-heatmap", "affine-green",
               "chi-top", "modulus-fit", "beta-est", "recurrence", "liouville-theta",
               "torus-density", "repro", "rerun")


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ---------------------------------------------------------------- argument helpers

def _complex(text: str) -> complex:
    return complex(str(text).strip().replace("i", "j"))


def _floats(text: str, k: int) -> List[float]:
    vals = [float(x) for x in text.split(",")]
    if len(vals) != k:
        raise UsageError(f"expected {k} comma-separated numbers, got {text!r}")
    return vals


def parse_params(text: Optional[str]) -> dict:
    out = {}
    if not text:
        return out
    for item in text.split(","):
        if "=" not in item:
            raise UsageError(f"parameter {item!r} is not K=V")
        k, v = item.split("=", 1)
        out[k.strip()] = parse_value(v)
    return out


def resolve(args):
    """(map, scenario) from --map or --scenario/--params."""
    if args.map and args.scenario:
        raise UsageError("give either --map or --scenario, not both")
    if args.map:
        return load_map_file(args.map), None
    if args.scenario:
        sc = build(args.scenario, **parse_params(args.params))
        return sc.map, sc
    raise UsageError("a map is required: --map FILE or --scenario NAME")


def _need_map(f, what: str):
    if f is None:
        raise UsageError(f"{what} needs a map, and this scenario has none")
    return f


def _check_stable(args, f, sc) -> None:
    """Green computations take lambda = deg f, which is only right for 1-stable maps."""
    if args.assume_stable or f.dim == 1:
        return
    if f.inverse is not None:
        src = sc.indeterminacy if sc is not None else None
        rep = stability_check(f, f.inverse, 20, source=src,
                              closed_forms=sc.closed_forms if sc is not None else None)
    elif f.backend is Backend.EXACT:
        rep = stability_check(f, None, 3)
    else:
        raise UsageError("cannot verify 1-stability of this map; pass --assume-stable to proceed")
    if not rep.stable:
        raise UsageError(f"map failed the stability check ({rep.verdict}); pass --assume-stable to override")


def _cfmt(c: complex) -> str:
    im = c.imag + 0.0
    return fmt(c.real + 0.0) + ("+" if im >= 0 else "") + fmt(im) + "i"


def _parse_point(text: str, dim: int) -> ProjectivePoint:
    coords = [_complex(x) for x in text.split(",")]
    if len(coords) != dim + 1:
        raise UsageError(f"point needs {dim + 1} homogeneous coordinates")
    return ProjectivePoint(tuple(coords))


class Run:
    """Collects output paths and writes the manifest at the end."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = argv
        self.outputs: List[str] = []
        self.extra: dict = {}

    def path(self, suffix: str) -> Optional[Path]:
        if not self.args.out:
            return None
        p = Path(f"{self.args.out}{suffix}")
        p.parent.mkdir(parents=True, exist_ok=True)
        self.outputs.append(str(p))
        return p

    def finish(self):
        if not self.args.out:
            return
        config = {k: v for k, v in vars(self.args).items() if k != "func"}
        write_manifest(f"{self.args.out}.manifest.json", self.args.command, self.argv, config,
                       self.outputs, __version__, self.extra)


# ---------------------------------------------------------------- subcommands

def cmd_degree_seq(args, run: Run) -> int:
    f, _ = resolve(args)
    f = _need_map(f, "degree-seq")
    if f.backend is not Backend.EXACT:
        raise UsageError("degree-seq needs exact coefficients (integers or [p, q] pairs)")
    N = args.depth or 3
    degs = degree_sequence(f, N)
    print("degrees " + ",".join(str(d) for d in degs))
    print("one-step power " + ",".join(str(f.degree ** n) for n in range(1, N + 1)))
    if (p := run.path("_degrees.csv")):
        write_csv(p, ["n", "degree", "power"], ((n, d, f.degree ** n) for n, d in enumerate(degs, 1)))
    return 0


def cmd_indet(args, run: Run) -> int:
    f, _ = resolve(args)
    f = _need_map(f, "indet")
    pts = indeterminacy_points(f, args.mode, seed=args.seed)
    for i, p in enumerate(pts):
        print(f"I{i} [" + " : ".join(_cfmt(c) for c in p.coords) + "]")
    if not pts:
        print("indeterminacy locus is empty")
    if (p := run.path("_indet.csv")):
        k = f.dim + 1
        head = ["label"] + [f"coord{i}_{part}" for i in range(k) for part in ("re", "im")]
        write_csv(p, head, ([f"I{i}"] + [v for c in q.coords for v in (c.real, c.imag)]
                            for i, q in enumerate(pts)))
    if args.dump_map:
        dump_map_file(f, args.dump_map)
        run.outputs.append(args.dump_map)
    return 0


def cmd_stability(args, run: Run) -> int:
    f, sc = resolve(args)
    f = _need_map(f, "stability")
    N = args.depth or 50
    src = sc.indeterminacy if sc is not None and f.inverse is not None else None
    tgt = None
    if sc is not None and "inverse_indeterminacy" in sc.metadata:
        tgt = [p for _, p in sc.metadata["inverse_indeterminacy"]]
    rep = stability_check(f, f.inverse, N, tol=args.tol or 1e-10, source=src, target=tgt,
                          closed_forms=sc.closed_forms if sc is not None else None)
    print(f"verdict {rep.verdict}")
    if rep.degrees is not None:
        print("degrees " + ",".join(map(str, rep.degrees)))
    if f.inverse is not None and math.isfinite(rep.min_dist):
        print(f"min_dist {fmt(rep.min_dist)} at n={rep.witness_n} label={rep.witness_label}")
    if rep.note:
        print(rep.note)
    if f.inverse is not None and (p := run.path("_orbits.csv")):
        table = backward_orbit(f.inverse, src or [(f"I{i}", q) for i, q in
                                                  enumerate(indeterminacy_points(f))],
                               N, tgt, sc.closed_forms if sc is not None else None)
        table.to_csv(p)
    return 0


def _shift(args, f) -> float:
    if args.shift is not None:
        return args.shift
    return sup_gamma(f, 64) if args.normalize else 0.0


def cmd_green_eval(args, run: Run) -> int:
    f, sc = resolve(args)
    f = _need_map(f, "green-eval")
    _check_stable(args, f, sc)
    if not args.point:
        raise UsageError("--point is required")
    x = _parse_point(args.point, f.dim)
    n = args.n if args.n is not None else 30
    shift = _shift(args, f)
    indet = [p for _, p in sc.indeterminacy] if sc is not None else None
    series = green_partial(f, x, n, shift, indeterminacy=indet)
    print(f"g_{len(series.partial_sums) - 1} {fmt(series.value)}")
    print(f"shift {fmt(shift)}")
    if series.terminated_at is not None:
        print(f"orbit hits indeterminacy at step {series.terminated_at}")
    try:
        C = args.log_bound
        B = green_tail_bound(series, None, *(C if C else (None, None)))
        print(f"tail_bound {fmt(B)} (heuristic: assumes the orbit keeps its distance to I_f)")
    except GreendynError as exc:
        print(f"tail_bound unavailable: {exc}")
    if (p := run.path("_series.csv")):
        rows = []
        for m, s in enumerate(series.partial_sums):
            e = series.orbit_log[m] if m < len(series.orbit_log) else None
            rows.append([m, s, e.gamma if e else math.nan, e.dist_to_indeterminacy if e else math.nan])
        write_csv(p, ["n", "partial", "gamma", "dist_to_If"], rows)
    return 0


def cmd_green_heatmap(args, run: Run) -> int:
    f, sc = resolve(args)
    f = _need_map(f, "green-heatmap")
    _check_stable(args, f, sc)
    window = _floats(args.window or "-2,2,-2,2", 4)
    res = args.res or 128
    n = args.n if args.n is not None else 30
    chart = args.chart or 0
    shift = _shift(args, f)
    grid = green_heatmap(f, chart, window, res, n, shift, threads=args.threads)
    finite = grid[np.isfinite(grid)]
    print(f"pixels {grid.size} finite {finite.size} min {fmt(finite.min() if finite.size else math.nan)} "
          f"max {fmt(finite.max() if finite.size else math.nan)}")
    if (p := run.path(".csv")):
        pts = green_grid_points(f, chart, window, res)
        others = [i for i in range(f.dim + 1) if i != chart]
        write_grid_csv(p, grid, pts[:, others[0]])
    if (p := run.path(".pgm")):
        write_pgm16(p, grid)
        run.outputs.append(str(p) + ".txt")
    if args.plot and (p := run.path(".png")):
        plot_grid(p, grid, window, f"g_{n}")
    return 0


def cmd_affine_green(args, run: Run) -> int:
    c = _complex(args.c if args.c is not None else "0")
    n = args.n if args.n is not None else 40
    if args.z is not None:
        z = _complex(args.z)
        v = affine_green(c, z, n)
        print(f"G {fmt(v)}")
        try:
            print(f"oracle {fmt(oracle_green(c, z))}")
        except ValueError:
            pass
        return 0
    window = _floats(args.window or "-4,4,-4,4", 4)
    res = args.res or 41
    xs = np.linspace(window[0], window[1], res)
    ys = np.linspace(window[2], window[3], res)
    rows, worst = [], 0.0
    has_oracle = complex(c) in (0, -2)
    for y in ys:
        for x in xs:
            z = complex(x, y)
            v = affine_green(c, z, n)
            o = oracle_green(c, z) if has_oracle else math.nan
            if has_oracle:
                worst = max(worst, abs(v - o))
            rows.append([x, y, v, o])
    if has_oracle:
        print(f"max_abs_error {fmt(worst)}")
    if (p := run.path(".csv")):
        write_csv(p, ["x", "y", "value", "oracle"], rows)
    return 0


def cmd_chi_top(args, run: Run) -> int:
    f, _ = resolve(args)
    f = _need_map(f, "chi-top")
    n = args.n if args.n is not None else 12
    est = chi_top(f, n, args.sampler, args.samples, args.res or 32, args.seed)
    print(f"chi_top {fmt(est.value)} (lower estimate; n={n} sampler={est.sampler} "
          f"samples={est.samples} skipped={est.skipped})")
    if (p := run.path("_chi.csv")):
        write_csv(p, ["n", "sampler", "samples", "skipped", "chi_top"],
                  [[n, est.sampler, est.samples, est.skipped, est.value]])
    return 0


def cmd_modulus_fit(args, run: Run) -> int:
    f, sc = resolve(args)
    f = _need_map(f, "modulus-fit")
    _check_stable(args, f, sc)
    kind = args.region
    region = Region(kind=kind, chart=args.chart or 0)
    if kind == "window":
        region.window = tuple(_floats(args.window or "-1,1,-1,1", 4))
    elif kind == "annulus":
        region.radii = tuple(_floats(args.radii or "0.5,2", 2))
    scales = [float(s) for s in (args.scales or "1e-1,1e-2,1e-3,1e-4,1e-5").split(",")]
    n = args.n if args.n is not None else 40
    avoid = [p for _, p in sc.indeterminacy] if sc is not None else []
    pairs = sample_pairs(f, region, n, args.count, scales, args.seed, avoid, args.avoid_radius,
                         threads=args.threads)
    fit = fit_modulus(pairs, args.family)
    print("family,alpha_hat,intercept,residual_rms,count,dmin,dmax")
    print(fit.report())
    if (p := run.path("_pairs.csv")):
        pairs.to_csv(p)
    if (p := run.path("_fit.csv")):
        Path(p).write_text("family,alpha_hat,intercept,residual_rms,count,dmin,dmax\n" + fit.report() + "\n")
    if args.plot and (p := run.path("_fit.png")):
        d, g = pairs.arrays()
        plot_fit(p, d, g, fit.alpha_hat, fit.intercept, fit.family.value)
    return 0


def cmd_beta_est(args, run: Run) -> int:
    f, sc = resolve(args)
    f = _need_map(f, "beta-est")
    indet = [p for _, p in sc.indeterminacy] if sc is not None else indeterminacy_points(f)
    if not indet:
        raise UsageError("the map has no indeterminacy points")
    rng = np.random.default_rng(args.seed)
    seeds = []
    for p in indet:
        base = np.asarray(p.coords)
        for _ in range(args.count):
            r = 10 ** rng.uniform(-6, -1.5)
            v = rng.normal(size=base.size) + 1j * rng.normal(size=base.size)
            seeds.append(ProjectivePoint(tuple(base + r * v / np.linalg.norm(v))))
    est = beta_estimate(f, indet, seeds, args.n if args.n is not None else 10)
    print(f"beta_hat {fmt(est.beta)} raw_slope {fmt(est.raw_slope)} log_offset {fmt(est.log_offset)} "
          f"steps {est.count}")
    if (p := run.path("_beta.csv")):
        write_csv(p, ["log_dist_x", "log_dist_fx"], est.scatter)
    return 0


def cmd_recurrence(args, run: Run) -> int:
    f, sc = resolve(args)
    N = args.depth or 40
    lam = args.lam or 2.0
    lt = sc.metadata.get("liouville") if sc is not None else None
    if f is None:
        if sc is None or "theta" not in sc.metadata:
            raise UsageError("recurrence needs a birational map or the fabc-rotation scenario")
        if args.source != "logdist":
            raise UsageError("gamma sums need the map, which is degenerate in floating point here")
        table = rotation_table(sc.metadata["theta"], N)
        print("note: map is degenerate in floating point; using the {z=0} rotation row")
    else:
        if f.inverse is None:
            raise UsageError("recurrence needs the inverse map")
        src = sc.indeterminacy if sc is not None else [(f"I{i}", q) for i, q in
                                                       enumerate(indeterminacy_points(f))]
        tgt = [p for _, p in sc.metadata["inverse_indeterminacy"]] if sc is not None and \
            "inverse_indeterminacy" in sc.metadata else None
        table = backward_orbit(f.inverse, src, N, tgt, sc.closed_forms if sc is not None else None)
    rs = recurrence_sum(table, lam, args.q, args.source, args.label,
                        witnesses=lt.odd_witnesses() if lt else None,
                        schedule=doubly_exponential_schedule if lt else None)
    print(f"verdict {rs.verdict.value} (trend diagnostic) S_N {fmt(rs.partials[-1])} "
          f"tail_delta {fmt(rs.tail_delta)}")
    if rs.reason:
        print(rs.reason)
    if (p := run.path("_recurrence.csv")):
        rs.to_csv(p)
    if (p := run.path("_orbits.csv")):
        table.to_csv(p)
    return 0


def _schedule(text: str):
    if text in ("doubly-exponential", "double-exp"):
        return doubly_exponential_schedule
    if text.startswith("const:"):
        v = float(text.split(":", 1)[1])
        return lambda n: v
    raise UsageError(f"unknown schedule {text!r}")


def cmd_liouville_theta(args, run: Run) -> int:
    lt = liouville_theta(_schedule(args.schedule), args.J, args.bits)
    digits = (lt.theta.numerator * 10 ** 60) // lt.theta.denominator
    print(f"theta 0.{str(digits).zfill(60)} (+- 2^-{lt.bits - 1})")
    for n, r, h, m in zip(lt.witnesses, lt.residues, lt.bounds, lt.integers):
        print(f"witness n={n} 2n*theta - {m} <= {float(r):.6e} < h(n)={h:.6e}")
    if (p := run.path("_theta.csv")):
        write_csv(p, ["n", "integer", "residue_upper", "h"],
                  ([n, m, float(r), h] for n, r, h, m in zip(lt.witnesses, lt.residues, lt.bounds,
                                                             lt.integers)))
    return 0


def cmd_torus_density(args, run: Run) -> int:
    params = parse_params(args.params)
    d = int(params.get("d", 3))
    zo = int(params.get("zeta_order", 4))
    depth = args.depth if args.depth is not None else 2
    pts = torus_preimages(d, zo, depth=depth)
    frac = torus_fill_fraction(pts, args.grid)
    print(f"points {len(pts)} expected {((d * d - 1) ** 2) ** depth} fill {fmt(frac)} "
          f"on a {args.grid}x{args.grid} grid of the first factor")
    if (p := run.path("_torus.csv")):
        write_csv(p, ["u1", "v1", "u2", "v2"], pts.coords().tolist())
    return 0


# ---------------------------------------------------------------- repro

def cmd_repro(args, run: Run) -> int:
    from . import repro
    checks = repro.CHECKS
    names = list(checks) if args.name == "all" else [repro.ALIASES.get(args.name, args.name)]
    bad = [n for n in names if n not in checks]
    if bad:
        raise UsageError(f"unknown reproduction {bad[0]!r}; known: {', '.join(checks)}")
    failed = 0
    rows = []
    for name in names:
        ok, message = checks[name]()
        print(f"{name}: {'PASS' if ok else 'FAIL'} {message}")
        rows.append([name, "PASS" if ok else "FAIL", message])
        failed += not ok
    if (p := run.path("_repro.csv")):
        write_csv(p, ["name", "status", "detail"], rows)
    return 2 if failed else 0


def cmd_rerun(args, run: Run) -> int:
    doc = json.loads(Path(args.manifest).read_text())
    argv = list(doc["argv"])
    if argv and argv[0] == "rerun":
        raise UsageError("manifest points at another rerun")
    return main(argv)


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common")
    g.add_argument("--map", help="map-definition JSON file")
    g.add_argument("--scenario", help="built-in family: quadratic, degree-drop, weakly-regular, fabc, "
                                      "fabc-rotation, torus")
    g.add_argument("--params", help="scenario parameters K=V,... (lists as a;b;c)")
    g.add_argument("--n", type=int, help="series / iteration depth")
    g.add_argument("--depth", type=int, help="orbit or iterate depth N")
    g.add_argument("--res", type=int, help="grid resolution")
    g.add_argument("--window", help="x0,x1,y0,y1")
    g.add_argument("--chart", type=int, help="affine chart index")
    g.add_argument("--tol", type=float)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--threads", type=int, default=1)
    g.add_argument("--out", help="output prefix; a manifest PREFIX.manifest.json is written")
    g.add_argument("--assume-stable", action="store_true",
                   help="skip the 1-stability gate for Green computations")
    g.add_argument("--plot", action="store_true", help="also render PNG figures (needs matplotlib)")

    p = Parser(prog="greendyn", description="Green functions and indeterminacy dynamics of rational maps")
    p.add_argument("--version", action="version", version=f"greendyn {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=Parser)

    def add(name, func, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=func)
        return sp

    add("degree-seq", cmd_degree_seq, "degrees of reduced iterates")
    s = add("indet", cmd_indet, "indeterminacy points")
    s.add_argument("--mode", choices=["numeric", "exact"], default="numeric")
    s.add_argument("--dump-map", help="write the resolved map as JSON")
    add("stability", cmd_stability, "1-stability check")
    s = add("green-eval", cmd_green_eval, "truncated Green series at a point")
    s.add_argument("--point", help="homogeneous coordinates z0,z1[,z2]")
    s.add_argument("--shift", type=float)
    s.add_argument("--normalize", action="store_true", help="shift by the sup of gamma")
    s.add_argument("--log-bound", type=float, nargs=2, metavar=("C", "C_PRIME"))
    s = add("green-heatmap", cmd_green_heatmap, "grid of g_n on an affine chart")
    s.add_argument("--shift", type=float)
    s.add_argument("--normalize", action="store_true")
    s = add("affine-green", cmd_affine_green, "escape-rate Green function of z^2 + c")
    s.add_argument("--c")
    s.add_argument("--z")
    s = add("chi-top", cmd_chi_top, "topological Lyapunov exponent estimate")
    s.add_argument("--sampler", choices=["grid", "julia"], default="grid")
    s.add_argument("--samples", type=int, default=2000)
    s = add("modulus-fit", cmd_modulus_fit, "fit a modulus of continuity of g_n")
    s.add_argument("--family", choices=["HOLDER", "H_ALPHA", "PHI_ALPHA"], default="HOLDER")
    s.add_argument("--region", choices=["window", "annulus", "julia"], default="window")
    s.add_argument("--radii", help="rmin,rmax for the annulus region")
    s.add_argument("--scales", help="comma-separated pair scales")
    s.add_argument("--count", type=int, default=2000)
    s.add_argument("--avoid-radius", type=float, default=0.0)
    s = add("beta-est", cmd_beta_est, "orbit-separation exponent near I_f")
    s.add_argument("--count", type=int, default=50, help="seeds per indeterminacy point")
    s = add("recurrence", cmd_recurrence, "weighted log-distance sums along backward orbits")
    s.add_argument("--q", type=int, choices=[1, 2], default=2)
    s.add_argument("--lam", type=float)
    s.add_argument("--source", choices=["logdist", "gamma"], default="logdist")
    s.add_argument("--label")
    s = add("liouville-theta", cmd_liouville_theta, "angle with certified fast returns")
    s.add_argument("--J", type=int, default=3)
    s.add_argument("--bits", type=int, default=256)
    s.add_argument("--schedule", default="doubly-exponential", help="doubly-exponential or const:V")
    s = add("torus-density", cmd_torus_density, "preimages of a point under the torus endomorphism")
    s.add_argument("--grid", type=int, default=50)
    s = add("repro", cmd_repro, "rerun a stored example and compare")
    s.add_argument("name", help="reproduction name or 'all'")
    s = add("rerun", cmd_rerun, "repeat the run recorded in a manifest")
    s.add_argument("manifest")
    return p


# flags whose values may start with '-' (negative numbers, windows, complex points)
SIGNED_VALUE_FLAGS = ("--window", "--radii", "--point", "--c", "--z", "--shift", "--scales", "--lam")


def _attach_signed_values(argv: List[str]) -> List[str]:
    out, i = [], 0
    while i < len(argv):
        a = argv[i]
        if a in SIGNED_VALUE_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-") \
                and not argv[i + 1].startswith("--"):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
            continue
        out.append(a)
        i += 1
    return out


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(_attach_signed_values(argv))
        if not getattr(args, "command", None):
            parser.print_help(sys.stderr)
            return 1
        run = Run(args, argv)
        code = args.func(args, run)
        if args.command != "rerun":
            run.finish()
        return code
    except UsageError as exc:
        print(f"greendyn: error: {exc}", file=sys.stderr)
        return 1
    except ImportError as exc:
        print(f"greendyn: error: {exc}; --plot needs the optional extra greendyn[plot]", file=sys.stderr)
        return 1
    except (MapFormatError, GreendynError, ValueError, OSError) as exc:
        print(f"greendyn: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
