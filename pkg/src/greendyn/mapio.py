"""Map-definition JSON documents.

A document has ``dim``, ``degree`` and ``components``; each component is a
list of terms ``{"exps": [...], "re": x, "im": y}``. A two-integer array
``[p, q]`` stands for the exact rational p/q. An optional ``inverse`` has the
same shape, and ``scenario`` plus ``params`` replaces everything else with a
built-in family.
"""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path
from typing import Optional

from .gaussrat import GaussRat
from .projmap import Backend, HomogeneousPoly, ProjectiveMap


class MapFormatError(ValueError):
    pass


def _num_to_json(x: Fraction):
    return [x.numerator, x.denominator]


def _json_to_num(v, where: str):
    if isinstance(v, bool):
        raise MapFormatError(f"{where}: boolean is not a coefficient")
    if isinstance(v, int):
        return Fraction(v), True
    if isinstance(v, float):
        return v, False
    if isinstance(v, list) and len(v) == 2 and all(isinstance(t, int) and not isinstance(t, bool)
                                                   for t in v):
        if v[1] == 0:
            raise MapFormatError(f"{where}: zero denominator")
        return Fraction(v[0], v[1]), True
    raise MapFormatError(f"{where}: expected a number or [p, q], got {v!r}")


def map_to_json(f: ProjectiveMap, with_inverse: bool = True) -> dict:
    comps = []
    for p in f.components:
        terms = []
        for e, c in p.terms:
            if f.backend is Backend.EXACT:
                terms.append({"exps": list(e), "re": _num_to_json(c.re), "im": _num_to_json(c.im)})
            else:
                terms.append({"exps": list(e), "re": c.real, "im": c.imag})
        comps.append(terms)
    doc = {"dim": f.dim, "degree": f.degree, "backend": f.backend.value, "components": comps}
    if f.label:
        doc["label"] = f.label
    if with_inverse and f.inverse is not None:
        doc["inverse"] = map_to_json(f.inverse, with_inverse=False)
    return doc


def map_from_json(doc: dict) -> ProjectiveMap:
    if not isinstance(doc, dict):
        raise MapFormatError("map document must be a JSON object")
    if "scenario" in doc:
        from .scenarios import build_from_doc
        return build_from_doc(doc).map
    for key in ("dim", "components"):
        if key not in doc:
            raise MapFormatError(f"missing field '{key}'")
    dim = doc["dim"]
    if dim not in (1, 2):
        raise MapFormatError(f"dim must be 1 or 2, got {dim!r}")
    comps = doc["components"]
    if not isinstance(comps, list) or len(comps) != dim + 1:
        raise MapFormatError(f"expected {dim + 1} components")
    parsed = []
    all_exact = True
    for j, terms in enumerate(comps):
        if not isinstance(terms, list):
            raise MapFormatError(f"component {j} must be a list of terms")
        items = []
        for t, term in enumerate(terms):
            where = f"component {j} term {t}"
            if not isinstance(term, dict) or "exps" not in term:
                raise MapFormatError(f"{where}: needs 'exps'")
            exps = term["exps"]
            if (not isinstance(exps, list) or len(exps) != dim + 1
                    or not all(isinstance(k, int) and k >= 0 for k in exps)):
                raise MapFormatError(f"{where}: bad exponent list {exps!r}")
            re, ex_re = _json_to_num(term.get("re", 0), where)
            im, ex_im = _json_to_num(term.get("im", 0), where)
            all_exact &= ex_re and ex_im
            items.append((tuple(exps), re, im))
        parsed.append(items)
    backend = Backend(doc.get("backend", "exact" if all_exact else "float"))
    polys = []
    degree = doc.get("degree")
    for items in parsed:
        terms = {}
        for e, re, im in items:
            c = GaussRat(re, im) if backend is Backend.EXACT else complex(float(re), float(im))
            terms[e] = terms[e] + c if e in terms else c
        try:
            polys.append(HomogeneousPoly.from_dict(dim + 1, terms, backend, degree))
        except ValueError as exc:
            raise MapFormatError(str(exc)) from exc
    try:
        f = ProjectiveMap(dim, tuple(polys), label=doc.get("label"))
    except ValueError as exc:
        raise MapFormatError(str(exc)) from exc
    if "inverse" in doc and doc["inverse"] is not None:
        f = f.with_inverse(map_from_json(doc["inverse"]))
    return f


def load_map_file(path) -> ProjectiveMap:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MapFormatError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno} column {exc.colno})") from exc
    return map_from_json(doc)


def dump_map_file(f: ProjectiveMap, path, extra: Optional[dict] = None) -> None:
    doc = map_to_json(f)
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
