"""Germ file format: canonical, round-trip-stable JSON records.

A germ file stores the truncation header and one record per monomial in
graded-lexicographic order:

    {"format": "kdvbirkhoff-germ/1",
     "modes": J, "degree": N, "index_set": "positive",
     "components": [{"mode": j,
                     "terms": [[[a_1..a_J], [b_1..b_J], re, im], ...]}, ...]}

Floats are serialized through ``repr`` (the JSON default), so writing and
reading back reproduces every coefficient bit for bit.
"""

from __future__ import annotations

import json
from pathlib import Path

from .germs import ScalarGerm, TruncatedGerm
from .truncation import Truncation

FORMAT = "kdvbirkhoff-germ/1"

__all__ = ["write_germ", "read_germ", "germ_to_dict", "germ_from_dict"]


def germ_to_dict(germ: TruncatedGerm) -> dict:
    tr = germ.trunc
    comps = []
    for j, comp in enumerate(germ.components, start=1):
        if comp.has_tau():
            raise ValueError("cannot serialize tau-dependent coefficients")
        terms = [[list(a), list(b), c.real, c.imag]
                 for a, b, c in comp.items()]
        comps.append({"mode": j, "terms": terms})
    return {
        "format": FORMAT,
        "modes": tr.modes,
        "degree": tr.degree,
        "index_set": "positive",
        "components": comps,
    }


def germ_from_dict(data: dict) -> TruncatedGerm:
    if data.get("format") != FORMAT:
        raise ValueError(f"unsupported germ format: {data.get('format')!r}")
    if data.get("index_set") != "positive":
        raise ValueError("only positive-mode germs are stored")
    tr = Truncation(int(data["modes"]), int(data["degree"]))
    comps = [ScalarGerm.zero(tr) for _ in range(tr.modes)]
    for entry in data["components"]:
        j = int(entry["mode"])
        if not 1 <= j <= tr.modes:
            raise ValueError(f"component mode {j} outside the header range")
        terms = {}
        for a, b, re, im in entry["terms"]:
            key = tr.pack(a, b)
            if key in terms:
                raise ValueError("duplicate monomial record")
            terms[key] = complex(re, im)
        comps[j - 1] = ScalarGerm(tr, terms)
    return TruncatedGerm(tr, comps)


def write_germ(path, germ: TruncatedGerm) -> None:
    Path(path).write_text(json.dumps(germ_to_dict(germ), indent=1,
                                     sort_keys=True))


def read_germ(path) -> TruncatedGerm:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed germ file {path}: {exc}") from exc
    return germ_from_dict(data)
