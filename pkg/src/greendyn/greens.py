"""Truncated Green series g_n = sum_{j<n} lambda^-j (gamma o f^j - shift).

The potential is gamma(x) = (1/lambda) log(|F(z)| / |z|^d) for any lift z of
x, where F is the component tuple and lambda = d. Batch routines work on
arrays of lifts and mark orbits that run into indeterminacy with NaN.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import CalibrationError, IndeterminatePoint, OrbitHitsIndeterminacy, ResourceLimitError
from .projmap import ProjectiveMap, ProjectivePoint, dist_to_set

MAX_PIXELS = 16_000_000


@dataclass
class OrbitEntry:
    point: ProjectivePoint
    gamma: float
    dist_to_indeterminacy: float


@dataclass
class GreenSeries:
    point: ProjectivePoint
    n: int
    partial_sums: List[float]
    orbit_log: List[OrbitEntry]
    shift: float
    lam: float
    tail_bound: Optional[float] = None
    terminated_at: Optional[int] = None
    residuals: List[float] = field(default_factory=list)

    @property
    def value(self) -> float:
        return self.partial_sums[-1]


def _unit_rows(Z: np.ndarray) -> np.ndarray:
    return Z / np.linalg.norm(Z, axis=1, keepdims=True)


def _max_normalize(W: np.ndarray) -> np.ndarray:
    k = np.argmax(np.abs(W), axis=1)
    piv = W[np.arange(W.shape[0]), k]
    return W / piv[:, None]


def gammas(f: ProjectiveMap, Z: np.ndarray, lam: Optional[float] = None,
           tol: float = 1e-12) -> np.ndarray:
    """gamma at every row of Z; -inf where f is indeterminate."""
    lam = float(f.degree if lam is None else lam)
    Zu = _unit_rows(np.atleast_2d(np.asarray(Z, dtype=complex)))
    cm = f.compiled
    W = cm.eval(Zu)
    bad = cm.indeterminate_mask(Zu, W, tol)
    with np.errstate(divide="ignore"):
        g = np.log(np.linalg.norm(W, axis=1)) / lam
    g[bad] = -np.inf
    return g


def gamma(f: ProjectiveMap, x: ProjectivePoint, lam: Optional[float] = None,
          tol: float = 1e-12) -> float:
    g = gammas(f, np.asarray(x.coords)[None, :], lam, tol)[0]
    if not np.isfinite(g):
        raise IndeterminatePoint(f"gamma is -inf at the indeterminacy point {x.coords}")
    return float(g)


def chart_grid(dim: int, chart: int, m: int) -> Tuple[np.ndarray, float]:
    """Lifts of a grid on chart {z_chart = 1}, free coordinates in [-1,1]+i[-1,1].

    Every point of P^k lies in some chart with all other coordinates in the
    closed unit disk, so the charts together cover projective space.
    """
    t = np.linspace(-1.0, 1.0, m)
    w = (t[None, :] + 1j * t[:, None]).ravel()
    free = [w] * dim
    mesh = np.meshgrid(*free, indexing="ij")
    cols = [g.ravel() for g in mesh]
    Z = np.empty((cols[0].size, dim + 1), dtype=complex)
    Z[:, chart] = 1.0
    others = [i for i in range(dim + 1) if i != chart]
    for i, c in zip(others, cols):
        Z[:, i] = c
    return Z, 2.0 / (m - 1)


def sup_gamma(f: ProjectiveMap, grid_resolution: int = 64, lam: Optional[float] = None) -> float:
    """Upper estimate of sup gamma from chart grids plus a local Lipschitz margin."""
    m = grid_resolution if f.dim == 1 else max(8, grid_resolution // 4)
    best, margin = -np.inf, 0.0
    for chart in range(f.dim + 1):
        Z, h = chart_grid(f.dim, chart, m)
        g = gammas(f, Z, lam)
        k = int(np.argmax(g))
        if g[k] <= best:
            continue
        best = float(g[k])
        # slope estimate from the grid neighbours of the maximiser
        shape = (m, m) * f.dim
        idx = np.unravel_index(k, shape)
        slopes = [0.0]
        for axis in range(len(shape)):
            for step in (-1, 1):
                j = list(idx)
                j[axis] += step
                if 0 <= j[axis] < m:
                    q = np.ravel_multi_index(tuple(j), shape)
                    if np.isfinite(g[q]):
                        from .projmap import chordal_dists
                        d = chordal_dists(Z[k][None], Z[q][None])[0]
                        slopes.append(abs(g[k] - g[q]) / d)
        margin = 0.05 * max(slopes)
    return best + margin


def green_values(f: ProjectiveMap, Z: np.ndarray, n: int, shift: float = 0.0,
                 lam: Optional[float] = None, tol: float = 1e-12) -> np.ndarray:
    """g_n at each row of Z (batch form of green_partial); NaN if the orbit hits I_f."""
    lam = float(f.degree if lam is None else lam)
    Z = np.atleast_2d(np.asarray(Z, dtype=complex)).copy()
    cm = f.compiled
    acc = np.zeros(Z.shape[0])
    alive = np.ones(Z.shape[0], dtype=bool)
    weight = 1.0
    for _ in range(n):
        Zu = _unit_rows(Z)
        W = cm.eval(Zu)
        bad = cm.indeterminate_mask(Zu, W, tol)
        alive &= ~bad
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.log(np.linalg.norm(W, axis=1)) / lam
        acc = acc + weight * np.where(alive, g - shift, 0.0)
        weight /= lam
        W[~alive] = Zu[~alive]
        Z = _max_normalize(W)
    acc[~alive] = np.nan
    return acc


def green_partial(f: ProjectiveMap, x: ProjectivePoint, n: int, shift: float = 0.0,
                  lam: Optional[float] = None, indeterminacy: Optional[Sequence[ProjectivePoint]] = None,
                  tol: float = 1e-12, strict: bool = False) -> GreenSeries:
    """Partial sums g_0..g_n at x with the orbit recorded.

    If the orbit lands on I_f at step j the series stops there and
    ``terminated_at`` is j (or OrbitHitsIndeterminacy is raised when strict).
    """
    lam = float(f.degree if lam is None else lam)
    if indeterminacy is None:
        from .indeterminacy import indeterminacy_points_cached
        indeterminacy = indeterminacy_points_cached(f)
    cm = f.compiled
    z = np.asarray(x.coords, dtype=complex)
    sums = [0.0]
    log: List[OrbitEntry] = []
    tildes: List[float] = []
    terminated = None
    weight = 1.0
    for j in range(n):
        zu = z / np.linalg.norm(z)
        w = cm.eval(zu[None, :])
        if cm.indeterminate_mask(zu[None, :], w, tol)[0]:
            terminated = j
            if strict:
                raise OrbitHitsIndeterminacy(j)
            break
        g = float(np.log(np.linalg.norm(w[0])) / lam)
        d = float(dist_to_set(z[None, :], indeterminacy)[0])
        log.append(OrbitEntry(ProjectivePoint(tuple(z)), g, d))
        tildes.append(g - shift)
        sums.append(sums[-1] + weight * (g - shift))
        weight /= lam
        z = np.asarray(ProjectivePoint(tuple(w[0])).coords)
    residuals = []
    for m in range(1, len(sums)):
        tail = sum(tildes[j + 1] / lam ** j for j in range(m - 1))
        residuals.append(sums[m] - tildes[0] - tail / lam)
    return GreenSeries(x, n, sums, log, shift, lam, None, terminated, residuals)


def green_tail_bound(series: GreenSeries, lam: Optional[float] = None,
                     C: Optional[float] = None, C_prime: Optional[float] = None) -> float:
    """Heuristic bound on |g - g_n| from the recorded orbit.

    The tail sum_{j>=n} lambda^-j |gamma~(f^j x)| is bounded by
    M lambda^-n / (1 - 1/lambda), with M the larger of the observed |gamma~|
    and the log-pole bound |C log delta + C'| at the smallest recorded
    distance delta to I_f. This assumes the orbit keeps its distance to I_f
    at least delta, which is a modelling assumption, not a proof.
    """
    if not series.orbit_log:
        raise CalibrationError("empty orbit log, nothing to extrapolate from")
    lam = float(series.lam if lam is None else lam)
    if lam <= 1:
        raise ValueError("tail bound needs lambda > 1")
    observed = max(abs(e.gamma - series.shift) for e in series.orbit_log)
    delta = min(e.dist_to_indeterminacy for e in series.orbit_log)
    M = observed
    if delta < 1.0:
        if C is None or C_prime is None:
            raise CalibrationError("orbit approaches I_f; log-pole constants C, C' are required")
        M = max(M, abs(C * math.log(delta) + C_prime - series.shift))
    n = len(series.orbit_log)
    bound = M * lam ** (-n) / (1.0 - 1.0 / lam)
    series.tail_bound = bound
    return bound


def affine_green(c: complex, z: complex, n: int = 40) -> float:
    """Escape-rate Green function of z^2 + c, with the post-escape tail summed.

    Once |w| exceeds R = max(|c|, 2) + 1 the exact identity
    G(w) = log|w| + sum_k 2^-(k+1) log|1 + c / w_k^2| is summed until the
    terms drop below double precision.
    """
    if n < 1:
        raise ValueError("depth n must be at least 1")
    R = max(abs(c), 2.0) + 1.0
    w = complex(z)
    for j in range(n + 1):
        if abs(w) > R:
            total = math.log(abs(w))
            scale = 0.5
            # a single small term says nothing about the next, so run until |w| is huge
            while abs(w) < 1e150:
                total += scale * math.log(abs(1 + c / (w * w)))
                w = w * w + c
                scale *= 0.5
            return total / 2.0 ** j
        if j < n:
            w = w * w + c
    return 0.0


def green_grid_points(f: ProjectiveMap, chart: int, window: Sequence[float], resolution: int,
                      slice_values: Optional[Sequence[complex]] = None) -> np.ndarray:
    """Lifts for a heatmap: first free coordinate spans the window, the rest are fixed."""
    x0, x1, y0, y1 = window
    if not (x1 > x0 and y1 > y0):
        raise ValueError("window must have x0 < x1 and y0 < y1")
    if not 0 <= chart <= f.dim:
        raise ValueError(f"chart must be in 0..{f.dim}")
    r = resolution
    xs = np.linspace(x0, x1, r) if r > 1 else np.array([(x0 + x1) / 2])
    ys = np.linspace(y0, y1, r) if r > 1 else np.array([(y0 + y1) / 2])
    w = (xs[None, :] + 1j * ys[:, None]).ravel()
    Z = np.empty((w.size, f.dim + 1), dtype=complex)
    Z[:, chart] = 1.0
    others = [i for i in range(f.dim + 1) if i != chart]
    Z[:, others[0]] = w
    fixed = list(slice_values or [0.0] * (f.dim - 1))
    for i, v in zip(others[1:], fixed):
        Z[:, i] = v
    return Z


def green_heatmap(f: ProjectiveMap, chart: int, window: Sequence[float], resolution: int,
                  n: int, shift: float = 0.0, slice_values: Optional[Sequence[complex]] = None,
                  threads: int = 1) -> np.ndarray:
    """(resolution x resolution) grid of g_n, rows running up the imaginary axis.

    Rows are computed independently, so the result does not depend on threads.
    """
    if resolution < 1:
        raise ValueError("resolution must be positive")
    if resolution * resolution > MAX_PIXELS:
        raise ResourceLimitError(f"{resolution}^2 pixels exceeds the cap {MAX_PIXELS}")
    Z = green_grid_points(f, chart, window, resolution, slice_values)
    rows = np.array_split(np.arange(Z.shape[0]), max(1, resolution))

    def work(idx):
        return green_values(f, Z[idx], n, shift)

    if threads <= 1:
        parts = [work(i) for i in rows]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(work, rows))
    return np.concatenate(parts).reshape(resolution, resolution)


__all__ = [
    "GreenSeries", "OrbitEntry", "gamma", "gammas", "sup_gamma", "green_values",
    "green_partial", "green_tail_bound", "affine_green", "green_heatmap", "chart_grid",
    "green_grid_points",
]
