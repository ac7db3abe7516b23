"""File formats: matrix and chain JSON, sigma files, start vectors, trace CSV.

Matrix JSON is ``{"dim": d, "rows": [[...], ...]}``. A chain file is
``{"dim": d, "terms": [matrix, ...], "meta": {...}}``. Every writer goes
through a temporary file in the target directory followed by a rename.
"""

import csv
import io as _io
import json
import math
import os
from pathlib import Path
import tempfile

import numpy as np

from .errors import DomainError, ParseError, ShapeError
from .products import ConvergenceTrace, parse_sigma, sigma_from_dict
from .rng import make_rng, random_unit_vector
from .seqgen import ContractionChain
from .symmat import as_matrix

FLOAT_FORMAT = ".17g"


def atomic_write_text(path, text):
    """Write ``text`` to ``path`` via a temporary sibling and ``os.replace``."""
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        # mkstemp creates the file private; published artifacts get the usual mode
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_json(obj):
    """Deterministic JSON: sorted keys, two-space indent, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def write_json(path, obj):
    atomic_write_text(path, dumps_json(obj))


def read_json(path):
    """Load JSON; a syntax error becomes :class:`ParseError` naming the file."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def matrix_to_json(a):
    a = np.asarray(a, dtype=float)
    return {"dim": int(a.shape[0]), "rows": a.tolist()}


def matrix_from_json(obj):
    """Decode matrix JSON; rejects ragged, non-square and non-finite input."""
    if not isinstance(obj, dict) or "rows" not in obj:
        raise ParseError('matrix must be an object {"dim": d, "rows": [...]}')
    rows = obj["rows"]
    if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
        raise ParseError("matrix rows must be a list of lists")
    if len({len(r) for r in rows}) > 1:
        raise ShapeError("matrix rows have different lengths")
    try:
        m = as_matrix(rows)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, (ShapeError, DomainError)):
            raise
        raise ParseError(f"matrix entries must be real numbers ({exc})") from None
    if "dim" in obj and obj["dim"] != m.shape[0]:
        raise ShapeError(f"declared dim {obj['dim']} but rows give {m.shape[0]}")
    return m


def chain_to_json(chain):
    return {
        "dim": int(chain.dim),
        "terms": [matrix_to_json(t) for t in chain.terms],
        "meta": chain.meta,
    }


def chain_from_json(obj, verify=True):
    if not isinstance(obj, dict) or "terms" not in obj:
        raise ParseError('chain must be an object {"dim": d, "terms": [...], "meta": {...}}')
    if not isinstance(obj["terms"], list) or not obj["terms"]:
        raise ParseError("chain terms must be a non-empty list")
    terms = [matrix_from_json(t) for t in obj["terms"]]
    dims = {t.shape[0] for t in terms}
    if len(dims) != 1:
        raise ShapeError(f"chain terms have different dimensions {sorted(dims)}")
    if "dim" in obj and obj["dim"] not in dims:
        raise ShapeError(f"declared dim {obj['dim']} but terms have dimension {dims.pop()}")
    meta = obj.get("meta") or {}
    if not isinstance(meta, dict):
        raise ParseError("chain meta must be an object")
    return ContractionChain.from_terms(terms, meta, verify=verify)


def save_chain(chain, path):
    write_json(path, chain_to_json(chain))


def load_chain(path, verify=True):
    return chain_from_json(read_json(path), verify=verify)


def load_sigma(spec, horizon=None):
    """Sigma from ``identity``, ``blocks:B``, ``interleave:S`` or ``file:path``."""
    if spec.startswith("file:"):
        return sigma_from_dict(read_json(spec[5:]), horizon)
    return parse_sigma(spec, horizon)


def parse_xi(spec, dim):
    """Start vector from ``random:SEED``, ``basis:I`` (1-based) or a JSON file path.

    The file holds a list of numbers or ``{"xi": [...]}``.
    """
    kind, sep, arg = spec.partition(":")
    if sep and kind == "random":
        try:
            seed = int(arg)
        except ValueError:
            raise ParseError(f"bad seed in xi spec {spec!r}") from None
        return random_unit_vector(dim, make_rng(seed))
    if sep and kind == "basis":
        try:
            i = int(arg)
        except ValueError:
            raise ParseError(f"bad index in xi spec {spec!r}") from None
        if not 1 <= i <= dim:
            raise DomainError(f"basis index {i} outside 1..{dim}")
        out = np.zeros(dim)
        out[i - 1] = 1.0
        return out
    obj = read_json(spec[5:] if kind == "file" and sep else spec)
    if isinstance(obj, dict):
        obj = obj.get("xi")
    try:
        xi = np.array(obj, dtype=float)
    except (TypeError, ValueError):
        raise ParseError(f"{spec}: xi must be a list of numbers") from None
    if xi.shape != (dim,):
        raise ShapeError(f"xi of shape {xi.shape} does not match dimension {dim}")
    if not np.all(np.isfinite(xi)):
        raise DomainError("xi has non-finite entries")
    return xi


def format_float(x):
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, FLOAT_FORMAT)


def trace_to_csv(trace):
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ConvergenceTrace.COLUMNS)
    for step, idx, *floats in trace.rows():
        writer.writerow([str(step), str(idx)] + [format_float(x) for x in floats])
    return buf.getvalue()


def write_trace_csv(trace, path):
    atomic_write_text(path, trace_to_csv(trace))


def read_trace_csv(path):
    """Columns of a trace CSV as arrays keyed by header name.

    Raises
    ------
    ParseError
        On a wrong header, a short row or a non-numeric field.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != ConvergenceTrace.COLUMNS:
        raise ParseError(f"{path}: header must be {','.join(ConvergenceTrace.COLUMNS)}")
    body = rows[1:]
    if not body:
        raise ParseError(f"{path}: trace has no rows")
    width = len(ConvergenceTrace.COLUMNS)
    body = [r for r in body if r]
    if any(len(r) != width for r in body):
        raise ParseError(f"{path}: every row needs {width} fields")
    try:
        data = np.array([[float(x) for x in r] for r in body], dtype=float)
    except ValueError:
        raise ParseError(f"{path}: non-numeric field") from None
    if data.ndim != 2 or data.shape[1] != width:
        raise ParseError(f"{path}: every row needs {width} fields")
    return {name: data[:, j] for j, name in enumerate(ConvergenceTrace.COLUMNS)}
