"""Homogeneous polynomials and rational self-maps of P^1 and P^2.

Two coefficient backends are supported. EXACT keeps Gaussian-rational
coefficients (``GaussRat``) so that composition and common-factor removal
are exact; FLOAT keeps complex doubles and is what the numerical modules
iterate with. Every map can be compiled into numpy arrays for batch
evaluation regardless of its backend.
"""

from __future__ import annotations

import enum
import hashlib
import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import polyalg
from .errors import DimensionMismatch, IndeterminatePoint, ResourceLimitError
from .gaussrat import GaussRat

# relative size below which FLOAT composition treats a coefficient as cancelled
FLOAT_PRUNE = 1e-13


class Backend(str, enum.Enum):
    EXACT = "exact"
    FLOAT = "float"


def _coerce_coeff(c, backend: Backend):
    if backend is Backend.EXACT:
        return GaussRat.coerce(c)
    return complex(c)


@dataclass(frozen=True)
class HomogeneousPoly:
    nvars: int
    degree: int
    terms: Tuple[Tuple[Tuple[int, ...], object], ...]
    backend: Backend = Backend.FLOAT

    @classmethod
    def from_dict(cls, nvars: int, terms: Mapping, backend: Backend = Backend.FLOAT,
                  degree: Optional[int] = None) -> "HomogeneousPoly":
        backend = Backend(backend)
        clean = {}
        for e, c in terms.items():
            e = tuple(int(x) for x in e)
            if len(e) != nvars or min(e) < 0:
                raise DimensionMismatch(f"exponent {e} does not fit {nvars} variables")
            c = _coerce_coeff(c, backend)
            if c:
                clean[e] = clean[e] + c if e in clean else c
        clean = {e: c for e, c in clean.items() if c}
        degs = {sum(e) for e in clean}
        if len(degs) > 1:
            raise ValueError(f"polynomial is not homogeneous (degrees {sorted(degs)})")
        if degs:
            d = degs.pop()
            if degree is not None and degree != d:
                raise ValueError(f"declared degree {degree} but terms have degree {d}")
        else:
            d = 0 if degree is None else degree
        return cls(nvars, d, tuple(sorted(clean.items(), reverse=True)), backend)

    @classmethod
    def monomial(cls, exps: Sequence[int], coeff=1, backend: Backend = Backend.FLOAT):
        return cls.from_dict(len(exps), {tuple(exps): coeff}, backend)

    def as_dict(self) -> dict:
        return dict(self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def to_backend(self, backend: Backend) -> "HomogeneousPoly":
        backend = Backend(backend)
        if backend is self.backend:
            return self
        return HomogeneousPoly.from_dict(self.nvars, self.as_dict(), backend, self.degree)

    def l1_norm(self) -> float:
        return float(sum(abs(complex(c)) for _, c in self.terms))

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        for e, c in self.terms:
            mon = "*".join(f"z{i}" + (f"^{k}" if k > 1 else "") for i, k in enumerate(e) if k)
            parts.append(f"({c})" + (f"*{mon}" if mon else ""))
        return " + ".join(parts)


@dataclass(frozen=True)
class ProjectivePoint:
    """Point of P^k, stored with its largest-modulus coordinate equal to 1."""
    coords: Tuple[complex, ...]

    def __post_init__(self):
        c = tuple(complex(z) for z in self.coords)
        mods = [abs(z) for z in c]
        m = max(mods) if mods else 0.0
        if not np.isfinite(m):
            raise ValueError(f"non-finite homogeneous coordinates {c}")
        if m == 0.0:
            raise ValueError("all homogeneous coordinates vanish")
        if not (1.0 in c and m <= 1.0 + 1e-12):
            k = next(i for i, r in enumerate(mods) if r >= m * (1.0 - 1e-12))
            piv = c[k]
            c = tuple(1.0 + 0j if i == k else z / piv for i, z in enumerate(c))
        object.__setattr__(self, "coords", c)

    @classmethod
    def of(cls, *coords) -> "ProjectivePoint":
        return cls(tuple(coords))

    @property
    def dim(self) -> int:
        return len(self.coords) - 1

    def unit_lift(self) -> np.ndarray:
        v = np.asarray(self.coords, dtype=complex)
        return v / np.linalg.norm(v)

    def __iter__(self):
        return iter(self.coords)


@dataclass(frozen=True)
class ProjectiveMap:
    dim: int
    components: Tuple[HomogeneousPoly, ...]
    inverse: Optional["ProjectiveMap"] = field(default=None, compare=False)
    label: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        if len(comps) != self.dim + 1:
            raise DimensionMismatch(f"P^{self.dim} map needs {self.dim + 1} components")
        if any(p.nvars != self.dim + 1 for p in comps):
            raise DimensionMismatch("component variable count differs from dim + 1")
        if len({p.degree for p in comps if not p.is_zero()}) > 1:
            raise ValueError("components have different degrees")
        if len({p.backend for p in comps}) != 1:
            raise ValueError("components mix EXACT and FLOAT coefficients")
        if all(p.is_zero() for p in comps):
            raise ValueError("all components are identically zero")

    @classmethod
    def from_terms(cls, dim: int, components: Sequence[Mapping], backend=Backend.FLOAT,
                   inverse=None, label=None) -> "ProjectiveMap":
        polys = [HomogeneousPoly.from_dict(dim + 1, c, backend) for c in components]
        d = max(p.degree for p in polys)
        polys = [p if not p.is_zero() else HomogeneousPoly.from_dict(dim + 1, {}, backend, d)
                 for p in polys]
        return cls(dim, tuple(polys), inverse, label)

    @property
    def degree(self) -> int:
        return next(p.degree for p in self.components if not p.is_zero())

    @property
    def backend(self) -> Backend:
        return self.components[0].backend

    @property
    def nvars(self) -> int:
        return self.dim + 1

    def to_backend(self, backend) -> "ProjectiveMap":
        inv = self.inverse.to_backend(backend) if self.inverse is not None else None
        return ProjectiveMap(self.dim, tuple(p.to_backend(backend) for p in self.components),
                             inv, self.label)

    def with_inverse(self, inverse: "ProjectiveMap") -> "ProjectiveMap":
        return ProjectiveMap(self.dim, self.components, inverse, self.label)

    def term_count(self) -> int:
        return sum(len(p.terms) for p in self.components)

    @cached_property
    def compiled(self) -> "CompiledMap":
        return CompiledMap(self)

    def __str__(self):
        return "[" + " : ".join(str(p) for p in self.components) + "]"


def identity_map(dim: int, backend=Backend.FLOAT) -> ProjectiveMap:
    comps = []
    for i in range(dim + 1):
        e = [0] * (dim + 1)
        e[i] = 1
        comps.append({tuple(e): 1})
    return ProjectiveMap.from_terms(dim, comps, backend, label="identity")


class CompiledMap:
    """numpy form of a map: monomial exponent table plus coefficient matrix."""

    def __init__(self, f: ProjectiveMap):
        monos = sorted({e for p in f.components for e, _ in p.terms})
        index = {e: i for i, e in enumerate(monos)}
        self.nvars = f.nvars
        self.degree = f.degree
        self.exps = np.array(monos, dtype=np.int64).reshape(len(monos), f.nvars)
        C = np.zeros((f.nvars, len(monos)), dtype=complex)
        for j, p in enumerate(f.components):
            for e, c in p.terms:
                C[j, index[e]] = complex(c)
        self.coeffs = C
        self.l1 = np.abs(C).sum(axis=1)
        # derivative tables: d/dz_i of every monomial
        self.dexps = []
        self.dcoef = []
        for i in range(f.nvars):
            e = self.exps.copy()
            mult = e[:, i].astype(float)
            e[:, i] = np.maximum(e[:, i] - 1, 0)
            self.dexps.append(e)
            self.dcoef.append(C * mult[None, :])

    @staticmethod
    def _monomials(Z: np.ndarray, exps: np.ndarray) -> np.ndarray:
        # Z: (M, nvars) -> (M, T)
        return np.prod(Z[:, None, :] ** exps[None, :, :], axis=2)

    def eval(self, Z: np.ndarray) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=complex))
        return self._monomials(Z, self.exps) @ self.coeffs.T

    def jacobian(self, Z: np.ndarray) -> np.ndarray:
        """(M, nvars, nvars) array of dF_j/dz_i."""
        Z = np.atleast_2d(np.asarray(Z, dtype=complex))
        J = np.empty((Z.shape[0], self.nvars, self.nvars), dtype=complex)
        for i in range(self.nvars):
            J[:, :, i] = self._monomials(Z, self.dexps[i]) @ self.dcoef[i].T
        return J

    def indeterminate_mask(self, Zunit: np.ndarray, values: np.ndarray, tol: float) -> np.ndarray:
        return np.all(np.abs(values) <= tol * self.l1[None, :], axis=1)


# ---------------------------------------------------------------- operations

def _exact_coords(lift) -> list:
    return [GaussRat.coerce(z) if not isinstance(z, GaussRat) else z for z in lift]


def poly_eval(p: HomogeneousPoly, lift: Sequence):
    """Evaluate p at a coordinate vector (not a projective point)."""
    if len(lift) != p.nvars:
        raise DimensionMismatch(f"lift has {len(lift)} entries, polynomial has {p.nvars} variables")
    if p.backend is Backend.EXACT and all(isinstance(z, (int, Fraction, GaussRat)) for z in lift):
        zs = _exact_coords(lift)
        total = GaussRat(0)
        for e, c in p.terms:
            t = c
            for z, k in zip(zs, e):
                if k:
                    t = t * z ** k
            total = total + t
        return total
    total = 0j
    for e, c in p.terms:
        t = complex(c)
        for z, k in zip(lift, e):
            if k:
                t *= complex(z) ** k
        total += t
    return total


def map_eval(f: ProjectiveMap, x: ProjectivePoint, tol: float = 1e-12) -> ProjectivePoint:
    if x.dim != f.dim:
        raise DimensionMismatch(f"point in P^{x.dim}, map on P^{f.dim}")
    if f.backend is Backend.EXACT:
        zs = [GaussRat.coerce(z) for z in x.coords]
        vals = [poly_eval(p, zs) for p in f.components]
        if not any(vals):
            raise IndeterminatePoint(f"{x.coords} is an indeterminacy point")
        return ProjectivePoint(tuple(complex(v) for v in vals))
    z = x.unit_lift()
    cm = f.compiled
    vals = cm.eval(z[None, :])
    if cm.indeterminate_mask(z[None, :], vals, tol)[0]:
        raise IndeterminatePoint(f"{x.coords} is an indeterminacy point (tol {tol:g})")
    return ProjectivePoint(tuple(vals[0]))


def _check_compatible(f: ProjectiveMap, g: ProjectiveMap):
    if f.dim != g.dim:
        raise DimensionMismatch("maps act on different projective spaces")
    if f.backend is not g.backend:
        raise DimensionMismatch("maps use different coefficient backends")


def _prune(poly: dict) -> dict:
    if not poly:
        return poly
    big = max(abs(c) for c in poly.values())
    return {e: c for e, c in poly.items() if abs(c) > FLOAT_PRUNE * big}


def compose(f: ProjectiveMap, g: ProjectiveMap) -> ProjectiveMap:
    """Raw composition f o g, without removing common factors."""
    _check_compatible(f, g)
    n = f.nvars
    one = GaussRat(1) if f.backend is Backend.EXACT else 1 + 0j
    gd = [p.as_dict() for p in g.components]
    pow_cache = {}

    def gpow(i, k):
        key = (i, k)
        if key not in pow_cache:
            if k == 0:
                pow_cache[key] = polyalg.const(one, n)
            elif k == 1:
                pow_cache[key] = gd[i]
            else:
                half = gpow(i, k // 2)
                sq = polyalg.pmul(half, half)
                pow_cache[key] = polyalg.pmul(sq, gd[i]) if k % 2 else sq
        return pow_cache[key]

    comps = []
    for p in f.components:
        acc = {}
        for e, c in p.terms:
            term = polyalg.const(c, n)
            for i, k in enumerate(e):
                if k:
                    term = polyalg.pmul(term, gpow(i, k))
            acc = polyalg.padd(acc, term)
        if f.backend is Backend.FLOAT:
            acc = _prune(acc)
        comps.append(acc)
    deg = f.degree * g.degree
    polys = tuple(HomogeneousPoly.from_dict(n, c, f.backend, deg) for c in comps)
    return ProjectiveMap(f.dim, polys)


def normalize(f: ProjectiveMap) -> ProjectiveMap:
    """Divide out the common factor of the components.

    EXACT maps lose their full multivariate GCD. FLOAT maps only lose the
    common monomial factor, since a floating GCD is not well posed.
    """
    comps = [p.as_dict() for p in f.components]
    nonzero = [c for c in comps if c]
    n = f.nvars
    if f.backend is Backend.EXACT:
        g = polyalg.gcd_many(nonzero, GaussRat(1))
        if polyalg.total_degree(g) == 0:
            return f
        new = [polyalg.divexact(c, g) if c else {} for c in comps]
    else:
        m = tuple(min(col) for col in zip(*(polyalg.monomial_content(c) for c in nonzero)))
        if not any(m):
            return f
        new = [polyalg.monomial_shift(c, [-x for x in m]) for c in comps]
    deg = max(polyalg.total_degree(c) for c in new)
    polys = tuple(HomogeneousPoly.from_dict(n, c, f.backend, deg) for c in new)
    return ProjectiveMap(f.dim, polys, f.inverse, f.label)


def _cache_dir() -> Optional[Path]:
    d = os.environ.get("GREENDYN_CACHE")
    if not d:
        return None
    p = Path(d)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _map_key(f: ProjectiveMap, n: int) -> str:
    from .mapio import map_to_json
    blob = json.dumps(map_to_json(f), sort_keys=True) + f"|iterate={n}"
    return hashlib.sha256(blob.encode()).hexdigest()[:32]


def iterate_normalized(f: ProjectiveMap, N: int, max_terms: int = 10**6) -> list:
    """[normalize(f^1), ..., normalize(f^N)], memoized under $GREENDYN_CACHE if set."""
    from .mapio import map_from_json, map_to_json
    cache = _cache_dir()
    base = normalize(f)
    out = [base]
    cur = base
    for n in range(2, N + 1):
        hit = None
        if cache is not None:
            path = cache / f"{_map_key(f, n)}.json"
            if path.exists():
                hit = map_from_json(json.loads(path.read_text()))
        if hit is None:
            if cur.term_count() * base.term_count() > 50 * max_terms:
                raise ResourceLimitError(f"iterate {n} would exceed the term cap {max_terms}")
            raw = compose(base, cur)
            if raw.term_count() > max_terms:
                raise ResourceLimitError(
                    f"iterate {n} has {raw.term_count()} terms, cap is {max_terms}")
            hit = normalize(raw)
            if cache is not None:
                path.write_text(json.dumps(map_to_json(hit), sort_keys=True))
        cur = hit
        out.append(cur)
    return out


def degree_sequence(f: ProjectiveMap, N: int, max_terms: int = 10**6, max_n: int = 8) -> list:
    """Degrees d_1..d_N of the reduced iterates; d_n = d_1^n for all n signals 1-stability."""
    if f.backend is not Backend.EXACT:
        raise ValueError("degree_sequence needs an EXACT map; FLOAT cannot remove common factors")
    if N > max_n:
        raise ResourceLimitError(f"N={N} exceeds the iterate cap {max_n}")
    if N <= 0:
        return []
    return [g.degree for g in iterate_normalized(f, N, max_terms)]


def _unit(z: np.ndarray) -> np.ndarray:
    return z / np.linalg.norm(z, axis=-1, keepdims=True)


def jacobian_norms(f: ProjectiveMap, Z: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Operator norms of Df in the chordal metric at each row of Z (any lifts).

    NaN marks rows where f is (numerically) indeterminate.
    """
    cm = f.compiled
    Zu = _unit(np.atleast_2d(np.asarray(Z, dtype=complex)))
    W = cm.eval(Zu)
    bad = cm.indeterminate_mask(Zu, W, tol)
    J = cm.jacobian(Zu)
    wn = np.linalg.norm(W, axis=1)
    wn_safe = np.where(bad, 1.0, wn)
    Wu = W / wn_safe[:, None]
    n = cm.nvars
    eye = np.eye(n)[None]
    Pz = eye - Zu[:, :, None] * Zu.conj()[:, None, :]
    Pw = eye - Wu[:, :, None] * Wu.conj()[:, None, :]
    M = Pw @ J @ Pz / wn_safe[:, None, None]
    out = np.linalg.norm(M, ord=2, axis=(1, 2))
    out[bad] = np.nan
    return out


def jacobian_norm(f: ProjectiveMap, x: ProjectivePoint, tol: float = 1e-12) -> float:
    if x.dim != f.dim:
        raise DimensionMismatch(f"point in P^{x.dim}, map on P^{f.dim}")
    v = jacobian_norms(f, np.asarray(x.coords)[None, :], tol)[0]
    if np.isnan(v):
        raise IndeterminatePoint(f"{x.coords} is an indeterminacy point")
    return float(v)


def chordal_dists(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Row-wise chordal distance between lifts, via |x ^ y| / (|x||y|)."""
    X = np.atleast_2d(np.asarray(X, dtype=complex))
    Y = np.atleast_2d(np.asarray(Y, dtype=complex))
    n = X.shape[1]
    s = np.zeros(np.broadcast_shapes(X.shape[:-1], Y.shape[:-1]))
    for i in range(n):
        for j in range(i + 1, n):
            s = s + np.abs(X[..., i] * Y[..., j] - X[..., j] * Y[..., i]) ** 2
    d = np.sqrt(s) / (np.linalg.norm(X, axis=-1) * np.linalg.norm(Y, axis=-1))
    return np.minimum(d, 1.0)


def chordal_dist(x: ProjectivePoint, y: ProjectivePoint) -> float:
    if x.dim != y.dim:
        raise DimensionMismatch("points live in different projective spaces")
    return float(chordal_dists(np.asarray(x.coords)[None], np.asarray(y.coords)[None])[0])


def dist_to_set(Z: np.ndarray, points: Iterable[ProjectivePoint]) -> np.ndarray:
    """Chordal distance from each row of Z to a finite set; an empty set is at distance 1."""
    Z = np.atleast_2d(np.asarray(Z, dtype=complex))
    out = np.ones(Z.shape[0])
    for p in points:
        out = np.minimum(out, chordal_dists(Z, np.asarray(p.coords)[None, :]))
    return out
