"""Built-in example maps with their known data, each re-verified when built."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ResourceLimitError, VerificationError
from .gaussrat import GaussRat
from .indeterminacy import (LiouvilleTheta, OrbitRow, OrbitTable, doubly_exponential_schedule,
                            indeterminacy_points, liouville_theta, match_point_sets, verify_points)
from .projmap import Backend, ProjectiveMap, ProjectivePoint, chordal_dists, map_eval

NAMES = ("QUADRATIC", "DEGREE_DROP", "WEAKLY_REGULAR", "FABC", "FABC_ROTATION", "TORUS")


@dataclass
class ScenarioSpec:
    name: str
    params: Dict[str, object] = field(default_factory=dict)


@dataclass
class Scenario:
    name: str
    params: Dict[str, object]
    map: Optional[ProjectiveMap]
    lam: float
    indeterminacy: List[Tuple[str, ProjectivePoint]] = field(default_factory=list)
    fixed_points: List[ProjectivePoint] = field(default_factory=list)
    oracle: Optional[Callable[[complex], float]] = None
    closed_forms: Dict[str, Callable] = field(default_factory=dict)
    metadata: Dict[str, object] = field(default_factory=dict)

    @property
    def inverse(self) -> Optional[ProjectiveMap]:
        return self.map.inverse if self.map is not None else None


def _is_exact(*vals) -> bool:
    return all(isinstance(v, (int, Fraction, GaussRat)) and not isinstance(v, bool) for v in vals)


def _coerce(v, exact: bool):
    return GaussRat.coerce(v) if exact else complex(v)


def _backend(exact: bool) -> Backend:
    return Backend.EXACT if exact else Backend.FLOAT


# ---------------------------------------------------------------- quadratic family

def oracle_green(c, z: complex) -> float:
    """Closed-form escape rate of z^2 + c for c in {0, -2}."""
    c = complex(c)
    z = complex(z)
    if c == 0:
        return max(math.log(abs(z)), 0.0) if z != 0 else 0.0
    if c == -2:
        r = cmath.sqrt(z * z - 4)
        w = max(abs((z + r) / 2), abs((z - r) / 2))
        return max(math.log(w), 0.0)
    raise ValueError(f"no closed form for c={c}")


def quadratic(c=0) -> Scenario:
    exact = _is_exact(c)
    one = _coerce(1, exact)
    cc = _coerce(c, exact)
    comps = [{(2, 0): one}, {(0, 2): one, (2, 0): cc}]
    f = ProjectiveMap.from_terms(1, comps, _backend(exact), label=f"quadratic(c={c})")
    oracle = (lambda z, c=c: oracle_green(c, z)) if complex(c) in (0, -2) else None
    pts = indeterminacy_points(f)
    if pts:
        raise VerificationError(f"quadratic map has indeterminacy {pts}")
    return Scenario("QUADRATIC", {"c": c}, f, 2.0, [], [ProjectivePoint.of(0, 1)], oracle,
                    metadata={"affine": "z -> z^2 + c on the chart [1:z]"})


# ---------------------------------------------------------------- degree-drop example

def degree_drop() -> Scenario:
    one = GaussRat(1)
    f = ProjectiveMap.from_terms(2, [{(2, 0, 0): one}, {(0, 1, 1): one}, {(1, 1, 0): one}],
                                 Backend.EXACT, label="degree_drop")
    claimed = [ProjectivePoint.of(0, 0, 1)]
    if not verify_points(f, claimed):
        raise VerificationError("[0:0:1] is not a common zero")
    found = indeterminacy_points(f, "exact")
    if not all(any(chordal_dists(np.array([p.coords]), np.array([q.coords]))[0] < 1e-12 for q in found)
               for p in claimed):
        raise VerificationError("solver misses [0:0:1]")
    labelled = [(f"I{i}", p) for i, p in enumerate(found)]
    return Scenario("DEGREE_DROP", {}, f, 2.0, labelled, [ProjectivePoint.of(1, 1, 1)],
                    metadata={"stated_indeterminacy": [p.coords for p in claimed],
                              "expected_degrees": [2, 3]})


# ---------------------------------------------------------------- weakly regular family

def _homog(coeffs: Sequence, var: int, total: int, exact: bool) -> Dict[Tuple[int, int, int], object]:
    """sum_k c_k z_var^k z_0^(total-k) as a degree-`total` form in (z0, z1, z2)."""
    out = {}
    for k, c in enumerate(coeffs):
        c = _coerce(c, exact)
        if not c:
            continue
        e = [0, 0, 0]
        e[0] = total - k
        e[var] += k
        out[tuple(e)] = out[tuple(e)] + c if tuple(e) in out else c
    return out


def weakly_regular(P=(Fraction(-1, 2), 0, 1), Q=(0, 0, 1), R=(Fraction(1, 10), 0, 0, 0, 1)) -> Scenario:
    """(z1, z2) -> (P(z1), Q(z1) + R(z2)) with deg R = deg P * deg Q, extended to P^2."""
    P, Q, R = list(P), list(Q), list(R)
    p, q, lam = len(P) - 1, len(Q) - 1, len(R) - 1
    if min(p, q) < 1 or not (P[-1] and Q[-1] and R[-1]):
        raise ValueError("P, Q, R need nonzero leading coefficients and positive degree")
    if lam != p * q or lam <= max(p, q):
        raise ValueError(f"need deg R = deg P * deg Q > max(deg P, deg Q), got {p}, {q}, {lam}")
    exact = _is_exact(*P, *Q, *R)
    one = _coerce(1, exact)
    c0 = {(lam, 0, 0): one}
    c1 = _homog(P, 1, lam, exact)
    c2 = _homog(Q, 1, lam, exact)
    for e, c in _homog(R, 2, lam, exact).items():
        s = c2.get(e)
        c2[e] = c if s is None else s + c
    f = ProjectiveMap.from_terms(2, [c0, c1, c2], _backend(exact), label="weakly_regular")
    indet = ProjectivePoint.of(0, 1, 0)       # {z0 = z2 = 0}
    attractor = ProjectivePoint.of(0, 0, 1)
    if not verify_points(f, [indet]):
        raise VerificationError("{z0 = z2 = 0} is not indeterminate")
    found = indeterminacy_points(f)
    if match_point_sets(found, [indet]) > 1e-8:
        raise VerificationError(f"solver found {found}, expected only [0:1:0]")
    if chordal_dists(np.array([map_eval(f, attractor).coords]), np.array([attractor.coords]))[0] > 1e-12:
        raise VerificationError("[0:0:1] is not fixed")
    # the line at infinity is contracted to the attracting point
    for y in (0.3, -1.7 + 0.5j):
        img = map_eval(f, ProjectivePoint.of(0, y, 1))
        if chordal_dists(np.array([img.coords]), np.array([attractor.coords]))[0] > 1e-12:
            raise VerificationError("line at infinity is not contracted to [0:0:1]")
    return Scenario("WEAKLY_REGULAR", {"P": P, "Q": Q, "R": R}, f, float(lam), [("I0", indet)],
                    [attractor], metadata={"p": p, "q": q, "topological_degree": lam})


# ---------------------------------------------------------------- f_abc family

def fabc_components(a, b, c, exact: bool) -> List[Dict]:
    a, b, c = (_coerce(v, exact) for v in (a, b, c))
    return [
        {(2, 0, 0): -(b * c * c), (1, 1, 0): a * b * c * c, (1, 0, 1): b * c},
        {(1, 1, 0): a * c, (0, 2, 0): -(a * a * c), (0, 1, 1): a * a * b * c},
        {(1, 0, 1): a * b * b * c, (0, 1, 1): a * b, (0, 0, 2): -(a * b * b)},
    ]


def fabc_indeterminacy(a, b, c) -> List[Tuple[str, ProjectivePoint]]:
    return [("Iz", ProjectivePoint.of(complex(a), 1, 0)),
            ("Ix", ProjectivePoint.of(0, complex(b), 1)),
            ("Iy", ProjectivePoint.of(1, 0, complex(c)))]


def fabc_line_map(which: str, params: Sequence, w: complex) -> complex:
    """Multiplier action of f_abc on its three invariant lines.

    Z0: [x:1:0] -> [-(bc/a) x:1:0]; X0: [0:y:1] -> [0:-(ac/b) y:1];
    Y0: [1:0:z] -> [1:0:-(ab/c) z].
    """
    a, b, c = (complex(v) for v in params)
    mult = {"Z0": -(b * c / a), "X0": -(a * c / b), "Y0": -(a * b / c)}
    if which not in mult:
        raise ValueError(f"line must be one of {sorted(mult)}")
    return mult[which] * w


def _line_point(which: str, w: complex) -> ProjectivePoint:
    return {"Z0": ProjectivePoint.of(w, 1, 0), "X0": ProjectivePoint.of(0, w, 1),
            "Y0": ProjectivePoint.of(1, 0, w)}[which]


def _check_inverse(f: ProjectiveMap, g: ProjectiveMap, count: int = 20, seed: int = 7) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(count):
        x = ProjectivePoint(tuple(rng.normal(size=3) + 1j * rng.normal(size=3)))
        y = map_eval(f, map_eval(g, x))
        worst = max(worst, float(chordal_dists(np.array([x.coords]), np.array([y.coords]))[0]))
    return worst


def fabc(a, b, c) -> Scenario:
    if any(complex(v) == 0 for v in (a, b, c)):
        raise ValueError("f_abc needs a, b, c nonzero")
    exact = _is_exact(a, b, c)
    bk = _backend(exact)
    inv_params = [(_coerce(1, exact) / _coerce(v, exact)) for v in (a, b, c)]
    g = ProjectiveMap.from_terms(2, fabc_components(*inv_params, exact), bk, label="fabc_inverse")
    f = ProjectiveMap.from_terms(2, fabc_components(a, b, c, exact), bk, inverse=g, label="fabc")
    err = max(_check_inverse(f, g), _check_inverse(g, f))
    if err > 1e-9:
        raise VerificationError(f"f_(1/a,1/b,1/c) is not the inverse (error {err:.3g})")
    claimed = fabc_indeterminacy(a, b, c)
    claimed_inv = fabc_indeterminacy(*inv_params)
    for h, pts in ((f, claimed), (g, claimed_inv)):
        solved = indeterminacy_points(h)
        gap = match_point_sets(solved, [p for _, p in pts])
        if gap > 1e-8:
            raise VerificationError(f"indeterminacy mismatch {gap:.3g}: {solved}")
    rng = np.random.default_rng(11)
    for which in ("Z0", "X0", "Y0"):
        w = complex(rng.normal(), rng.normal())
        img = map_eval(f, _line_point(which, w))
        want = _line_point(which, fabc_line_map(which, (a, b, c), w))
        if chordal_dists(np.array([img.coords]), np.array([want.coords]))[0] > 1e-12:
            raise VerificationError(f"line map {which} disagrees with direct evaluation")
    return Scenario("FABC", {"a": a, "b": b, "c": c}, f, 2.0, claimed, [],
                    metadata={"inverse_indeterminacy": claimed_inv, "inverse_error": err})


def resolve_theta(theta) -> Tuple[Fraction, str, Optional[LiouvilleTheta]]:
    """theta as an exact Fraction, a description of its source, and the construction if any."""
    if isinstance(theta, LiouvilleTheta):
        return theta.theta, f"liouville({theta.bits} bits, witnesses {theta.witnesses})", theta
    if isinstance(theta, str):
        key = theta.lower()
        if key == "golden":
            return Fraction((math.sqrt(5) - 1) / 2), "golden", None
        if key == "sqrt2":
            return Fraction(math.sqrt(2) - 1), "sqrt2", None
        if key == "liouville":
            lt = liouville_theta(doubly_exponential_schedule, 3, 256)
            return lt.theta, "liouville(256 bits, witnesses [1, 2, 3])", lt
        return Fraction(float(theta)), "user", None
    return Fraction(theta) if isinstance(theta, (int, Fraction)) else Fraction(float(theta)), "user", None


def rotation_row(theta: Fraction, n: int) -> Tuple[ProjectivePoint, float]:
    """([i e^(-2 pi i n theta) : 1 : 0], |cos(pi n theta)|) from exact angle arithmetic."""
    t = (n * theta) % 1
    u = Fraction(1, 2) - t
    dist = abs(math.sin(math.pi * float(u)))
    ang = -2 * math.pi * float(t)
    x = 1j * complex(math.cos(ang), math.sin(ang))
    return ProjectivePoint.of(x, 1, 0), dist


def fabc_rotation(s=2, theta="sqrt2") -> Scenario:
    """f_abc with a = i, b = -s e^(2 pi i theta), c = i/s; the {z=0} line is a rotation."""
    if float(s) <= 1:
        raise ValueError("s must exceed 1")
    th, source, lt = resolve_theta(theta)
    a = 1j
    b = -float(s) * cmath.exp(2j * math.pi * float(th))
    c = 1j / float(s)
    closed = {"Iz": lambda n, th=th: rotation_row(th, n)}
    meta = {"theta": th, "theta_source": source, "liouville": lt}
    # abc = e^(2 pi i theta); at abc = -1 the three components share a linear factor
    if abs(1 + a * b * c) < 1e-8:
        meta["degenerate_in_floating_point"] = True
        return Scenario("FABC_ROTATION", {"s": s, "theta": float(th)}, None, 2.0,
                        fabc_indeterminacy(a, b, c), [], None, closed, meta)
    sc = fabc(a, b, c)
    sc.name = "FABC_ROTATION"
    sc.params = {"s": s, "theta": float(th)}
    sc.closed_forms = closed
    sc.metadata.update(meta)
    return sc


def rotation_table(theta, N: int) -> OrbitTable:
    """Backward orbit of [i:1:0] on {z=0} from angle arithmetic alone.

    Used when theta is so close to 1/2 that the floating-point map is
    degenerate; the distances to [-i:1:0] need no map evaluation.
    """
    th = resolve_theta(theta)[0] if not isinstance(theta, Fraction) else theta
    src = ProjectivePoint.of(1j, 1, 0)
    rows = [OrbitRow(0, "Iz", src, 1.0, math.nan, "ok")]
    for n in range(1, N + 1):
        pt, d = rotation_row(th, n)
        rows.append(OrbitRow(n, "Iz", pt, d, math.nan, "closed-form"))
    return OrbitTable([("Iz", src)], N, rows, [ProjectivePoint.of(-1j, 1, 0)])


# ---------------------------------------------------------------- torus endomorphism

ZETA = {3: cmath.exp(2j * math.pi / 3), 4: 1j, 6: cmath.exp(1j * math.pi / 3)}


@dataclass
class TorusPoints:
    """Points of E x E, E = C / Z[zeta], as integer numerators over ``den``.

    Row (u1, v1, u2, v2) stands for (u1 + v1 zeta, u2 + v2 zeta) / den.
    """
    num: np.ndarray
    den: int
    zeta_order: int

    def __len__(self):
        return self.num.shape[0]

    def coords(self) -> np.ndarray:
        return self.num / self.den


def _torus_check(d: int, zeta_order: int):
    if d < 3:
        raise ValueError("d must be at least 3")
    if zeta_order not in ZETA:
        raise ValueError("zeta order must be 3, 4 or 6")


def _coset_reps(d: int) -> np.ndarray:
    """Representatives of Z^4 / (A x I2) Z^4, deduplicated by adj(A) lambda mod (d^2-1)."""
    D = d * d - 1
    adj = np.kron(np.array([[d, -1], [-1, d]]), np.eye(2, dtype=np.int64)).astype(np.int64)
    box = np.stack(np.meshgrid(*[np.arange(D)] * 4, indexing="ij"), -1).reshape(-1, 4)
    images = (box @ adj.T) % D
    _, idx = np.unique(images, axis=0, return_index=True)
    return box[np.sort(idx)]


def torus_preimages(d: int = 3, zeta_order: int = 4, a: Sequence = (0, 0, 0, 0), depth: int = 1,
                    max_depth: int = 3) -> TorusPoints:
    """All z in E x E with A^depth z = a, A = [[d,1],[1,d]].

    A has integer entries, so in lattice coordinates it acts as kron(A, I2)
    whatever zeta is. Each level solves A z = p + lambda over coset
    representatives lambda and reduces modulo the lattice.
    """
    _torus_check(d, zeta_order)
    if depth < 0:
        raise ValueError("depth must be non-negative")
    if depth > max_depth:
        raise ResourceLimitError(f"depth {depth} exceeds the cap {max_depth}")
    fr = [Fraction(x) for x in a]
    den = math.lcm(*(x.denominator for x in fr))
    num = np.array([[int(x * den) % den for x in fr]], dtype=np.int64)
    D = d * d - 1
    adj = np.kron(np.array([[d, -1], [-1, d]]), np.eye(2, dtype=np.int64)).astype(np.int64)
    reps = _coset_reps(d)
    for _ in range(depth):
        # z = adj (p + den lambda) / (D den)
        lifted = num[:, None, :] + den * reps[None, :, :]
        num = (lifted.reshape(-1, 4) @ adj.T) % (D * den)
        den *= D
        num = np.unique(num, axis=0)
    return TorusPoints(num, den, zeta_order)


def torus_fill_fraction(points: TorusPoints, grid: int = 50, factor: int = 0) -> float:
    """Fraction of grid x grid cells of one factor's fundamental parallelogram hit by a point."""
    uv = points.coords()[:, 2 * factor: 2 * factor + 2] % 1.0
    cells = np.minimum((uv * grid).astype(np.int64), grid - 1)
    hit = np.unique(cells[:, 0] * grid + cells[:, 1])
    return len(hit) / grid ** 2


def torus_distance(x: Sequence[float], y: Sequence[float], zeta_order: int = 4) -> float:
    """Flat distance on E x E: per factor, the nearest of the 9 lattice translates."""
    zeta = ZETA[zeta_order]
    total = 0.0
    for k in (0, 2):
        du = (x[k] - y[k]) % 1.0
        dv = (x[k + 1] - y[k + 1]) % 1.0
        best = min(abs((du + i) + (dv + j) * zeta) for i in (-1, 0, 1) for j in (-1, 0, 1))
        total += best * best
    return math.sqrt(total)


def torus(d: int = 3, zeta_order: int = 4) -> Scenario:
    _torus_check(d, zeta_order)
    return Scenario("TORUS", {"d": d, "zeta_order": zeta_order}, None, float((d * d - 1) ** 2),
                    metadata={"lambda1": (d + 1) ** 2, "lambda2": (d * d - 1) ** 2,
                              "matrix": [[d, 1], [1, d]]})


# ---------------------------------------------------------------- dispatch

# identifiers used by older map files and manifests
ALIASES = {"EXAMPLE21": "DEGREE_DROP", "FABC_THM61": "FABC_ROTATION"}


def _canon(name: str) -> str:
    key = name.strip().upper().replace("-", "_")
    return ALIASES.get(key, key)


def build(spec, **params) -> Scenario:
    """Build a scenario from a ScenarioSpec or a name plus keyword parameters."""
    if isinstance(spec, ScenarioSpec):
        name, params = spec.name, dict(spec.params)
    else:
        name = spec
    key = _canon(name)
    if key in ("QUADRATIC", "QUAD"):
        return quadratic(params.get("c", 0))
    if key == "DEGREE_DROP":
        return degree_drop()
    if key == "WEAKLY_REGULAR":
        return weakly_regular(**{k: params[k] for k in ("P", "Q", "R") if k in params})
    if key == "FABC":
        return fabc(params.get("a", 2), params.get("b", 3), params.get("c", 5))
    if key == "FABC_ROTATION":
        return fabc_rotation(params.get("s", 2), params.get("theta", "sqrt2"))
    if key == "TORUS":
        return torus(int(params.get("d", 3)), int(params.get("zeta_order", 4)))
    raise ValueError(f"unknown scenario {name!r}; known: {', '.join(NAMES)}")


def parse_value(text: str):
    """Parse a parameter value: int, p/q, float, complex (i or j), or a list a;b;c."""
    if isinstance(text, (int, float, complex, Fraction, list)):
        return text
    t = str(text).strip()
    if ";" in t:
        return [parse_value(x) for x in t.split(";")]
    try:
        return int(t)
    except ValueError:
        pass
    if "/" in t:
        try:
            return Fraction(t)
        except ValueError:
            pass
    try:
        return float(t)
    except ValueError:
        pass
    try:
        z = complex(t.replace("i", "j"))
        return z
    except ValueError:
        return t


def _json_param(v):
    if isinstance(v, list) and len(v) == 2 and all(isinstance(x, int) for x in v):
        return Fraction(v[0], v[1])
    if isinstance(v, dict) and set(v) <= {"re", "im"}:
        re, im = (_json_param(v.get(k, 0)) for k in ("re", "im"))
        if _is_exact(re, im):
            return GaussRat(re, im)
        return complex(float(re), float(im))
    if isinstance(v, list):
        return [_json_param(x) for x in v]
    if isinstance(v, str):
        return parse_value(v)
    return v


def build_from_doc(doc: dict) -> Scenario:
    params = {k: _json_param(v) for k, v in (doc.get("params") or {}).items()}
    return build(doc["scenario"], **params)
