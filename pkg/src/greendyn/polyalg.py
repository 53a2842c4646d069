"""Sparse multivariate polynomial arithmetic and exact GCD.

Polynomials are plain dicts mapping exponent tuples to nonzero coefficients.
Coefficients may be any field type supporting + - * / and truthiness
(``GaussRat`` for exact work, ``complex`` for floating work). All routines
here are exact when the coefficients are.

The GCD follows the classical recursive scheme: strip monomial content,
view the polynomial as univariate in its last active variable with
coefficients in the remaining ones, split off the content, and run a
subresultant PRS on the primitive parts. A specialization test certifies
coprimality cheaply in the common case, so the PRS only runs when there
is a genuine common factor.
"""

from __future__ import annotations

import random
from typing import Dict, Sequence, Tuple

Exps = Tuple[int, ...]
Poly = Dict[Exps, object]


def zero_exps(n: int) -> Exps:
    return (0,) * n


def const(c, n: int) -> Poly:
    return {zero_exps(n): c} if c else {}


def padd(a: Poly, b: Poly) -> Poly:
    out = dict(a)
    for e, c in b.items():
        s = out.get(e)
        s = c if s is None else s + c
        if s:
            out[e] = s
        else:
            out.pop(e, None)
    return out


def pneg(a: Poly) -> Poly:
    return {e: -c for e, c in a.items()}


def psub(a: Poly, b: Poly) -> Poly:
    return padd(a, pneg(b))


def pscale(a: Poly, c) -> Poly:
    if not c:
        return {}
    return {e: v * c for e, v in a.items()}


def pmul(a: Poly, b: Poly) -> Poly:
    if len(a) > len(b):
        a, b = b, a
    out: Poly = {}
    for ea, ca in a.items():
        for eb, cb in b.items():
            e = tuple(x + y for x, y in zip(ea, eb))
            s = out.get(e)
            out[e] = ca * cb if s is None else s + ca * cb
    return {e: c for e, c in out.items() if c}


def ppow(a: Poly, k: int, n: int, one) -> Poly:
    out = const(one, n)
    base = a
    while k:
        if k & 1:
            out = pmul(out, base)
        k >>= 1
        if k:
            base = pmul(base, base)
    return out


def monomial_shift(a: Poly, shift: Sequence[int]) -> Poly:
    """Multiply by the monomial x^shift (entries may be negative if exact)."""
    return {tuple(x + s for x, s in zip(e, shift)): c for e, c in a.items()}


def monomial_content(a: Poly) -> Exps:
    it = iter(a)
    m = list(next(it))
    for e in it:
        for i, x in enumerate(e):
            if x < m[i]:
                m[i] = x
    return tuple(m)


def total_degree(a: Poly) -> int:
    return max((sum(e) for e in a), default=-1)


def deg_in(a: Poly, v: int) -> int:
    return max((e[v] for e in a), default=-1)


def coeffs_in(a: Poly, v: int) -> Dict[int, Poly]:
    out: Dict[int, Poly] = {}
    for e, c in a.items():
        k = e[v]
        out.setdefault(k, {})[e[:v] + (0,) + e[v + 1:]] = c
    return out


def lc_in(a: Poly, v: int) -> Poly:
    d = deg_in(a, v)
    return {e[:v] + (0,) + e[v + 1:]: c for e, c in a.items() if e[v] == d}


def leading_term(a: Poly):
    e = max(a)
    return e, a[e]


def divexact(a: Poly, b: Poly) -> Poly:
    """Quotient a/b, raising ArithmeticError unless b divides a exactly."""
    if not b:
        raise ZeroDivisionError("division by the zero polynomial")
    eb, cb = leading_term(b)
    rem = dict(a)
    quo: Poly = {}
    while rem:
        ea, ca = leading_term(rem)
        q = tuple(x - y for x, y in zip(ea, eb))
        if min(q) < 0:
            raise ArithmeticError("inexact polynomial division")
        c = ca / cb
        quo[q] = c
        rem = psub(rem, pscale(monomial_shift(b, q), c))
    return quo


def prem(a: Poly, b: Poly, v: int) -> Poly:
    """Pseudo-remainder of a by b with respect to variable v."""
    da, db = deg_in(a, v), deg_in(b, v)
    if da < db:
        return dict(a)
    lcb = lc_in(b, v)
    e = da - db + 1
    r = dict(a)
    n = len(next(iter(a)))
    while r and deg_in(r, v) >= db:
        dr = deg_in(r, v)
        lcr = lc_in(r, v)
        sh = [0] * n
        sh[v] = dr - db
        r = psub(pmul(lcb, r), pmul(lcr, monomial_shift(b, sh)))
        e -= 1
    if e > 0 and r:
        one = next(iter(lcb.values())) ** 0
        r = pmul(ppow(lcb, e, n, one), r)
    return r


def make_monic(a: Poly) -> Poly:
    if not a:
        return a
    _, c = leading_term(a)
    return {e: v / c for e, v in a.items()}


# ---------------------------------------------------------------- univariate

def _ueval_special(a: Poly, v: int, point: Dict[int, object], zero):
    """Substitute point[w] for every other variable w; return univariate list in v."""
    d = deg_in(a, v)
    out = [zero] * (d + 1)
    for e, c in a.items():
        t = c
        for w, x in point.items():
            if e[w]:
                t = t * x ** e[w]
        out[e[v]] = out[e[v]] + t
    return out


def _utrim(a):
    while a and not a[-1]:
        a.pop()
    return a


def _urem(a, b):
    a = list(a)
    db = len(b) - 1
    inv = b[-1]
    while len(a) - 1 >= db and a:
        c = a[-1] / inv
        shift = len(a) - 1 - db
        for i in range(db + 1):
            a[shift + i] = a[shift + i] - c * b[i]
        a.pop()
        _utrim(a)
    return a


def ugcd_degree(a, b) -> int:
    a, b = _utrim(list(a)), _utrim(list(b))
    while b:
        a, b = b, _urem(a, b)
    return len(a) - 1


def _coprime_in(polys: Sequence[Poly], v: int, others: Sequence[int], rng: random.Random,
                one, zero) -> bool:
    """True when a specialization proves the GCD of polys has degree 0 in v.

    If deg_v of the GCD were k > 0, its leading coefficient divides each
    leading coefficient, so at any point where those do not vanish the
    univariate GCD of the specializations has degree >= k.
    """
    for _ in range(4):
        point = {w: one * rng.randint(-40, 40) for w in others}
        if any(not point[w] for w in others):
            continue
        specs = [_ueval_special(p, v, point, zero) for p in polys]
        if any(len(_utrim(list(s))) != deg_in(p, v) + 1 for s, p in zip(specs, polys)):
            continue
        g = specs[0]
        deg = len(g) - 1
        for s in specs[1:]:
            g_deg = ugcd_degree(g, s)
            deg = min(deg, g_deg)
            if deg == 0:
                return True
        return False
    return False


# ---------------------------------------------------------------- multivariate GCD

def content_in(a: Poly, v: int, rest: Sequence[int], one) -> Poly:
    parts = list(coeffs_in(a, v).values())
    g = parts[0]
    for p in parts[1:]:
        g = gcd(g, p, rest, one)
        if len(g) == 1 and not any(next(iter(g))):
            break
    return make_monic(g)


def _subresultant_last(a: Poly, b: Poly, v: int, n: int, one) -> Poly:
    """Last nonzero element of the subresultant PRS of a, b (deg_v a >= deg_v b >= 1)."""
    g = const(one, n)
    h = const(one, n)
    while True:
        d = deg_in(a, v) - deg_in(b, v)
        r = prem(a, b, v)
        if not r:
            return b
        if deg_in(r, v) == 0:
            return const(one, n)
        a, b = b, divexact(r, pmul(g, ppow(h, d, n, one)))
        g = lc_in(a, v)
        if d > 0:
            h = divexact(ppow(g, d, n, one), ppow(h, d - 1, n, one))


def gcd(a: Poly, b: Poly, variables: Sequence[int], one) -> Poly:
    """Monic GCD of a and b; only the listed variables may occur in them."""
    if not a:
        return make_monic(b)
    if not b:
        return make_monic(a)
    n = len(next(iter(a)))
    if not variables:
        return const(one, n)
    ma, mb = monomial_content(a), monomial_content(b)
    m = tuple(min(x, y) for x, y in zip(ma, mb))
    a = monomial_shift(a, [-x for x in ma])
    b = monomial_shift(b, [-x for x in mb])
    v, rest = variables[-1], list(variables[:-1])
    ca, cb = content_in(a, v, rest, one), content_in(b, v, rest, one)
    c = gcd(ca, cb, rest, one)
    pa, pb = divexact(a, ca), divexact(b, cb)
    if deg_in(pa, v) > 0 and deg_in(pb, v) > 0:
        if deg_in(pa, v) < deg_in(pb, v):
            pa, pb = pb, pa
        rng = random.Random(hash((len(pa), len(pb), v)) & 0xFFFF)
        zero = one - one
        if not rest or not _coprime_in([pa, pb], v, rest, rng, one, zero):
            last = _subresultant_last(pa, pb, v, n, one)
            if deg_in(last, v) > 0:
                c = pmul(c, divexact(last, content_in(last, v, rest, one)))
    return make_monic(monomial_shift(c, m))


def gcd_many(polys: Sequence[Poly], one) -> Poly:
    """Monic GCD of several polynomials in the same variables."""
    polys = [p for p in polys if p]
    if not polys:
        return {}
    n = len(next(iter(polys[0])))
    variables = list(range(n))
    if len(polys) > 1:
        m = tuple(min(col) for col in zip(*(monomial_content(p) for p in polys)))
        stripped = [monomial_shift(p, [-x for x in m]) for p in polys]
        rng = random.Random(12345)
        zero = one - one
        # the GCD is free of v if some input is, or if a specialization says so;
        # free of every variable means it is a constant
        if all(any(deg_in(p, v) == 0 for p in stripped)
               or _coprime_in(stripped, v, [w for w in variables if w != v], rng, one, zero)
               for v in variables):
            return monomial_shift(const(one, n), m)
    g = polys[0]
    for p in polys[1:]:
        g = gcd(g, p, variables, one)
        if len(g) == 1 and not any(next(iter(g))):
            break
    return make_monic(g)
