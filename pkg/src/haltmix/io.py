"""Chain-description documents and table output."""

from __future__ import annotations

import csv
import io as _io
import json
from fractions import Fraction
from pathlib import Path

import numpy as np

from .bd_spectral import BirthDeathChain
from .chain_core import ChainError, DiscreteChain
from .ctime import Generator


class DescriptionError(ChainError):
    """Malformed chain-description document."""


def _matrix(doc: dict, key: str) -> np.ndarray:
    if key not in doc:
        raise DescriptionError(f"field '{key}': missing")
    rows = doc[key]
    if not isinstance(rows, list) or not rows:
        raise DescriptionError(f"field '{key}': expected a non-empty list of rows")
    width = None
    for i, row in enumerate(rows):
        if not isinstance(row, list):
            raise DescriptionError(f"field '{key}' row {i}: expected a list")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise DescriptionError(f"field '{key}' row {i}: length {len(row)}, expected {width}")
        for j, v in enumerate(row):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise DescriptionError(f"field '{key}' row {i} column {j}: not a number ({v!r})")
    return np.array(rows, dtype=float)


def _vector(doc: dict, key: str, required: bool = True) -> np.ndarray | None:
    if key not in doc:
        if required:
            raise DescriptionError(f"field '{key}': missing")
        return None
    vals = doc[key]
    if not isinstance(vals, list):
        raise DescriptionError(f"field '{key}': expected a list")
    for i, v in enumerate(vals):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise DescriptionError(f"field '{key}' entry {i}: not a number ({v!r})")
    return np.array(vals, dtype=float)


def parse_description(text: str):
    """Build a chain from a JSON document.

    Accepted forms::

        {"type": "dense", "kernel": [[...], ...]}
        {"type": "birth_death", "p": [...], "q": [...], "r": [...]}
        {"type": "generator", "rates": [[...], ...]}

    For ``birth_death``, ``p`` and ``q`` have either ``N`` entries
    (``p_0..p_{N-1}``, ``q_1..q_N``) or ``N + 1`` entries with ``p_N = q_0 = 0``;
    ``r`` is optional.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DescriptionError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise DescriptionError("document must be a JSON object")
    kind = doc.get("type")
    if kind == "dense":
        return DiscreteChain.from_kernel(_matrix(doc, "kernel"))
    if kind == "birth_death":
        p, q, r = _vector(doc, "p"), _vector(doc, "q"), _vector(doc, "r", required=False)
        if len(p) != len(q):
            raise DescriptionError(f"fields 'p' and 'q': lengths {len(p)} and {len(q)} differ")
        if r is not None and len(r) not in (len(p), len(p) + 1):
            raise DescriptionError(f"field 'r': length {len(r)} does not fit p and q")
        return BirthDeathChain.from_rates(p, q, r)
    if kind == "generator":
        return Generator(_matrix(doc, "rates"))
    raise DescriptionError(f"field 'type': unknown value {kind!r} (expected dense, birth_death or generator)")


def load_description(path) -> object:
    return parse_description(Path(path).read_text())


def fmt(value) -> str:
    """Render a cell: floats and fractions at 17 significant digits."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating, Fraction)):
        return f"{float(value):.17g}"
    return str(value)


def _plain(value):
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_plain(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating, Fraction)):
        v = float(value)
        return v if np.isfinite(v) else None
    return value


def csv_text(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def json_text(doc) -> str:
    """JSON with floats written by ``repr`` (shortest round-trip form)."""
    return json.dumps(_plain(doc), indent=2, sort_keys=False) + "\n"


def table_json(header, rows, extra: dict | None = None) -> str:
    doc = {"columns": list(header), "rows": [dict(zip(header, r)) for r in rows]}
    if extra:
        doc.update(extra)
    return json_text(doc)
