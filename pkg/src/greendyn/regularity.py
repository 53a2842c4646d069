"""Empirical regularity: Lyapunov growth, moduli of continuity of g_n, and orbit-separation exponents."""

from __future__ import annotations

import csv
import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import InsufficientData, ResourceLimitError
from .greens import _max_normalize, chart_grid, gammas, green_values
from .projmap import ProjectiveMap, ProjectivePoint, chordal_dists, dist_to_set, jacobian_norms

CHUNK = 256


# ---------------------------------------------------------------- samplers

def _chunk_rngs(seed: int, count: int):
    """One generator per fixed-size chunk, so prefixes do not depend on the total."""
    nchunks = (count + CHUNK - 1) // CHUNK
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(nchunks)]


def quadratic_parameter(f: ProjectiveMap) -> complex:
    """c for a map of the form [z0^2 : z1^2 + c z0^2]."""
    terms = [dict(p.terms) for p in f.components]
    if f.dim != 1 or f.degree != 2 or terms[0].keys() != {(2, 0)} or not set(terms[1]) <= {(0, 2), (2, 0)}:
        raise ValueError("Julia sampling needs a map [z0^2 : z1^2 + c z0^2]")
    a = complex(terms[0][(2, 0)])
    if complex(terms[1].get((0, 2), 0)) != a:
        raise ValueError("Julia sampling needs a monic quadratic")
    return complex(terms[1].get((2, 0), 0)) / a


def julia_samples(c: complex, count: int, seed: int = 0, warmup: int = 500) -> np.ndarray:
    """Points of the Julia set of z^2 + c by backward iteration with random branches."""
    out = []
    for i, rng in enumerate(_chunk_rngs(seed, count)):
        m = min(CHUNK, count - i * CHUNK)
        z = rng.normal(size=m) + 1j * rng.normal(size=m)
        for _ in range(warmup):
            sign = np.where(rng.random(m) < 0.5, -1.0, 1.0)
            z = sign * np.sqrt(z - c)
        out.append(z)
    return np.concatenate(out) if out else np.zeros(0, dtype=complex)


# ---------------------------------------------------------------- chi_top

@dataclass
class ChiTopEstimate:
    value: float
    n: int
    samples: int
    skipped: int
    sampler: str
    argmax: Optional[ProjectivePoint] = None


def _log_growth(f: ProjectiveMap, Z: np.ndarray, n: int) -> np.ndarray:
    """sum_{j<n} log |D f| along each orbit; NaN if an orbit meets I_f."""
    total = np.zeros(Z.shape[0])
    alive = np.ones(Z.shape[0], dtype=bool)
    cm = f.compiled
    for _ in range(n):
        Zu = Z / np.linalg.norm(Z, axis=1, keepdims=True)
        W = cm.eval(Zu)
        alive &= ~cm.indeterminate_mask(Zu, W, 1e-12)
        if alive.any():
            with np.errstate(divide="ignore"):
                total[alive] += np.log(jacobian_norms(f, Z[alive]))
        W[~alive] = Zu[~alive]
        Z = _max_normalize(W)
    total[~alive] = np.nan
    return total


def chi_top(f: ProjectiveMap, n: int, sampler: str = "grid", samples: int = 2000,
            grid_resolution: int = 32, seed: int = 0, c: Optional[complex] = None) -> ChiTopEstimate:
    """(1/n) log max_x |D_x f^n| over a finite sample, a lower estimate of chi_top.

    sampler "grid": every chart grid with ``grid_resolution`` points per real
    axis. sampler "julia": backward-iteration samples of the Julia set of a
    quadratic polynomial (c inferred from the map when not given).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if sampler == "grid":
        m = grid_resolution
        Z = np.concatenate([chart_grid(f.dim, j, m)[0] for j in range(f.dim + 1)])
    elif sampler == "julia":
        cc = quadratic_parameter(f) if c is None else complex(c)
        w = julia_samples(cc, samples, seed)
        Z = np.stack([np.ones_like(w), w], axis=1)
    else:
        raise ValueError(f"unknown sampler {sampler!r}")
    growth = _log_growth(f, Z, n)
    ok = np.isfinite(growth)
    if not ok.any():
        raise InsufficientData("no sample orbit avoids the indeterminacy locus")
    k = int(np.nanargmax(np.where(ok, growth, -np.inf)))
    return ChiTopEstimate(float(growth[k] / n), n, int(ok.sum()), int((~ok).sum()), sampler,
                          ProjectivePoint(tuple(Z[k])))


# ---------------------------------------------------------------- pair samples

@dataclass
class Region:
    """Where base points are drawn, in the affine chart ``chart``.

    kind "window": uniform in [x0,x1] + i[y0,y1]; "annulus": rmin < |w| < rmax;
    "julia": on the Julia set of z^2 + c (P^1 quadratic maps).
    """
    kind: str = "window"
    chart: int = 0
    window: Tuple[float, float, float, float] = (-1.0, 1.0, -1.0, 1.0)
    radii: Tuple[float, float] = (0.5, 2.0)
    c: Optional[complex] = None
    slice_values: Tuple[complex, ...] = ()

    def describe(self) -> str:
        if self.kind == "annulus":
            return f"annulus chart={self.chart} r=({self.radii[0]},{self.radii[1]})"
        if self.kind == "julia":
            return f"julia c={self.c}"
        return f"window chart={self.chart} {tuple(self.window)}"


@dataclass
class PairSample:
    x: ProjectivePoint
    y: ProjectivePoint
    d: float
    delta_g: float


@dataclass
class PairSampleSet:
    entries: List[PairSample]
    n: int
    region: str = ""

    def __len__(self):
        return len(self.entries)

    def arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        return (np.array([e.d for e in self.entries]), np.array([e.delta_g for e in self.entries]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x_re", "x_im", "y_re", "y_im", "d", "delta_g"])
            for e in self.entries:
                # affine coordinate of the free variable next to the chart
                xa, ya = _affine(e.x), _affine(e.y)
                w.writerow([repr(xa.real), repr(xa.imag), repr(ya.real), repr(ya.imag),
                            repr(e.d), repr(e.delta_g)])

    @classmethod
    def from_arrays(cls, d: Sequence[float], delta_g: Sequence[float], n: int = 0) -> "PairSampleSet":
        """Synthetic set with placeholder points, for fitting planted models."""
        p = ProjectivePoint.of(1, 0)
        return cls([PairSample(p, p, float(a), float(b)) for a, b in zip(d, delta_g)], n, "synthetic")


def _affine(p: ProjectivePoint) -> complex:
    c = p.coords
    return c[1] / c[0] if abs(c[0]) > 0 and len(c) == 2 else (c[1] if len(c) > 2 else complex("inf"))


def _bases(f: ProjectiveMap, region: Region, m: int, rng: np.random.Generator) -> np.ndarray:
    if region.kind == "window":
        x0, x1, y0, y1 = region.window
        w = rng.uniform(x0, x1, m) + 1j * rng.uniform(y0, y1, m)
    elif region.kind == "annulus":
        r0, r1 = region.radii
        r = np.sqrt(rng.uniform(r0 * r0, r1 * r1, m))
        w = r * np.exp(2j * np.pi * rng.random(m))
    elif region.kind == "julia":
        cc = quadratic_parameter(f) if region.c is None else complex(region.c)
        w = julia_samples(cc, m, int(rng.integers(2**31)))
    else:
        raise ValueError(f"unknown region kind {region.kind!r}")
    return w


def _lift(f: ProjectiveMap, region: Region, w: np.ndarray) -> np.ndarray:
    Z = np.empty((w.size, f.dim + 1), dtype=complex)
    Z[:, region.chart] = 1.0
    others = [i for i in range(f.dim + 1) if i != region.chart]
    Z[:, others[0]] = w
    fixed = list(region.slice_values) or [0.0] * (f.dim - 1)
    for i, v in zip(others[1:], fixed):
        Z[:, i] = v
    return Z


def sample_pairs(f: ProjectiveMap, region: Region, n: int, count: int, scales: Sequence[float],
                 seed: int = 0, avoid: Sequence[ProjectivePoint] = (), avoid_radius: float = 0.0,
                 shift: float = 0.0, lam: Optional[float] = None, threads: int = 1) -> PairSampleSet:
    """``count`` pairs (x, x + s e^(i phi)) per scale s with |g_n(x) - g_n(y)|.

    Pairs within ``avoid_radius`` of the ``avoid`` points, or whose orbits
    meet I_f by depth n, are discarded; if fewer than 10% of attempts
    survive the region is rejected.
    """
    if count <= 0 or not scales:
        return PairSampleSet([], n, region.describe())
    if count * len(scales) > 10**7:
        raise ResourceLimitError("too many pairs requested")
    ss = np.random.SeedSequence(seed)
    jobs = []
    for s, child in zip(scales, ss.spawn(len(scales))):
        rng = np.random.default_rng(child)
        w = _bases(f, region, count, rng)
        phi = np.exp(2j * np.pi * rng.random(count))
        jobs.append((float(s), _lift(f, region, w), _lift(f, region, w + s * phi)))

    def work(job):
        _, X, Y = job
        return green_values(f, X, n, shift, lam), green_values(f, Y, n, shift, lam)

    if threads <= 1:
        results = [work(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(work, jobs))
    entries: List[PairSample] = []
    attempts = 0
    for (s, X, Y), (gx, gy) in zip(jobs, results):
        attempts += len(X)
        d = chordal_dists(X, Y)
        ok = np.isfinite(gx) & np.isfinite(gy) & (d > 0)
        if avoid and avoid_radius > 0:
            ok &= (dist_to_set(X, avoid) > avoid_radius) & (dist_to_set(Y, avoid) > avoid_radius)
        for i in np.nonzero(ok)[0]:
            entries.append(PairSample(ProjectivePoint(tuple(X[i])), ProjectivePoint(tuple(Y[i])),
                                      float(d[i]), float(abs(gx[i] - gy[i]))))
    if len(entries) < 0.1 * attempts:
        raise InsufficientData(f"only {len(entries)} of {attempts} pairs avoid the indeterminacy set")
    return PairSampleSet(entries, n, region.describe())


# ---------------------------------------------------------------- modulus fits

class Family(str, enum.Enum):
    HOLDER = "HOLDER"
    H_ALPHA = "H_ALPHA"
    PHI_ALPHA = "PHI_ALPHA"


@dataclass
class ModulusFit:
    family: Family
    alpha_hat: float
    intercept: float
    residual_rms: float
    sample_count: int
    scale_range: Tuple[float, float]
    used: int = 0

    def report(self) -> str:
        return (f"{self.family.value},{self.alpha_hat!r},{self.intercept!r},{self.residual_rms!r},"
                f"{self.sample_count},{self.scale_range[0]!r},{self.scale_range[1]!r}")


def _envelope(d: np.ndarray, g: np.ndarray, bins_per_decade: int) -> Tuple[np.ndarray, np.ndarray]:
    """Running supremum: per log-distance bin, the pair with the largest dg among all d <= bin edge."""
    order = np.argsort(d, kind="stable")
    d, g = d[order], g[order]
    key = np.floor(np.log10(d) * bins_per_decade + 1e-9).astype(np.int64)
    best = np.maximum.accumulate(g)
    arg = np.zeros(len(g), dtype=np.int64)
    for i in range(1, len(g)):
        arg[i] = i if g[i] >= best[i - 1] else arg[i - 1]
    last = np.nonzero(np.r_[key[1:] != key[:-1], True])[0]
    keep = np.unique(arg[last])
    return d[keep], g[keep]


def fit_modulus(samples: PairSampleSet, family, envelope: bool = True,
                bins_per_decade: int = 4) -> ModulusFit:
    """Least-squares exponent of a modulus of continuity.

    HOLDER: log dg = alpha log d + b. H_ALPHA: log dg = alpha (-sqrt|ln d|) + b.
    PHI_ALPHA: log(1/dg - 1) = alpha log|ln d| + b, which is exact for
    dg = 1/(1 + |ln d|^alpha). With ``envelope`` the regression runs on the
    largest dg in each distance bin, since a modulus bounds the worst pair.
    """
    family = Family(family.value if isinstance(family, Family) else str(family).upper())
    d, g = samples.arrays()
    mask = (g > 0) & (d > 0) & (d < 1)
    if family is Family.PHI_ALPHA:
        mask &= g < 1
    d, g = d[mask], g[mask]
    if len(d) < 30:
        raise InsufficientData(f"{len(d)} usable pairs, need at least 30")
    if np.log10(d.max() / d.min()) < 3 - 1e-9:
        raise InsufficientData("distances span fewer than 3 decades")
    count = len(d)
    drange = (float(d.min()), float(d.max()))
    if envelope:
        d, g = _envelope(d, g, bins_per_decade)
    L = np.abs(np.log(d))
    if family is Family.HOLDER:
        x, y = np.log(d), np.log(g)
    elif family is Family.H_ALPHA:
        x, y = -np.sqrt(L), np.log(g)
    else:
        x, y = np.log(L), np.log(1.0 / g - 1.0)
    A = np.stack([x, np.ones_like(x)], axis=1)
    (alpha, b), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (alpha * x + b)
    return ModulusFit(family, float(alpha), float(b), float(np.sqrt(np.mean(resid ** 2))), count,
                      drange, len(d))


# ---------------------------------------------------------------- orbit separation

@dataclass
class BetaEstimate:
    beta: float
    raw_slope: float
    log_offset: float
    count: int
    scatter: List[Tuple[float, float]] = field(default_factory=list)


def beta_estimate(f: ProjectiveMap, indet_approx: Sequence[ProjectivePoint],
                  orbit_seeds: Sequence[ProjectivePoint], n: int, near: float = 0.1) -> BetaEstimate:
    """Slope of log d(fx, I) against log d(x, I) over orbit steps with d(x, I) < near.

    The slope is clamped below at 1. ``log_offset`` is the smallest log C
    with beta log d(x, I) - log C <= log d(fx, I) on every recorded step.
    """
    if not indet_approx:
        raise ValueError("indeterminacy approximation is empty")
    if not orbit_seeds:
        raise InsufficientData("no orbit seeds")
    cm = f.compiled
    Z = np.array([p.coords for p in orbit_seeds], dtype=complex)
    pairs = []
    alive = np.ones(len(Z), dtype=bool)
    for _ in range(n):
        Zu = Z / np.linalg.norm(Z, axis=1, keepdims=True)
        W = cm.eval(Zu)
        alive &= ~cm.indeterminate_mask(Zu, W, 1e-12)
        W[~alive] = Zu[~alive]
        W = _max_normalize(W)
        dx = dist_to_set(Z, indet_approx)
        dy = dist_to_set(W, indet_approx)
        sel = alive & (dx < near) & (dx > 0) & (dy > 0)
        pairs += [(float(a), float(b)) for a, b in zip(np.log(dx[sel]), np.log(dy[sel]))]
        Z = W
    if len(pairs) < 2:
        raise InsufficientData("no orbit step enters the neighbourhood of the indeterminacy set")
    P = np.array(pairs)
    A = np.stack([P[:, 0], np.ones(len(P))], axis=1)
    (slope, _), *_ = np.linalg.lstsq(A, P[:, 1], rcond=None)
    beta = max(1.0, float(slope))
    log_c = float(np.max(beta * P[:, 0] - P[:, 1]))
    return BetaEstimate(beta, float(slope), log_c, len(P), pairs)


def calibrate_log_bound(f: ProjectiveMap, indet: Sequence[ProjectivePoint], count: int = 400,
                        radii: Tuple[float, float] = (1e-6, 1e-1), seed: int = 0) -> Tuple[float, float]:
    """Empirical C, C' with gamma(x) >= C log d(x, I_f) + C' near I_f.

    C is the least-squares slope of gamma against log d; C' is then the
    lower envelope of the residuals. Both are empirical, not certified.
    """
    if not indet:
        raise InsufficientData("no indeterminacy points to calibrate against")
    rng = np.random.default_rng(seed)
    rows = []
    for p in indet:
        base = p.unit_lift()
        r = np.exp(rng.uniform(np.log(radii[0]), np.log(radii[1]), count))
        v = rng.normal(size=(count, len(base))) + 1j * rng.normal(size=(count, len(base)))
        v -= (v @ base.conj())[:, None] * base[None, :]
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        rows.append(base[None, :] + r[:, None] * v)
    Z = np.concatenate(rows)
    g = gammas(f, Z)
    d = dist_to_set(Z, indet)
    ok = np.isfinite(g) & (d > 0)
    x = np.log(d[ok])
    A = np.stack([x, np.ones_like(x)], axis=1)
    (C, _), *_ = np.linalg.lstsq(A, g[ok], rcond=None)
    Cp = float(np.min(g[ok] - C * x))
    return float(C), Cp
