"""Plain-text file formats: matrices, graphs, observations, traces, reports, configs.

Every writer goes through a temporary file in the target directory followed
by ``os.replace`` so readers never see a half-written file. Floats are
written with ``%.17g`` which round-trips exactly and makes repeated runs
byte-identical.
"""

import csv
import io
import os
import tempfile

import numpy as np

from .errors import ParseError
from .graphs import SimilarityGraph
from .observation import ObservationSet

FLOAT_FMT = "%.17g"
TRACE_HEADER = ("iter", "train_rmse", "test_rmse", "wall_ms")
STOP_REASONS = ("target", "max_iters", "plateau", "error")


def fmt(x):
    return FLOAT_FMT % x


def atomic_write(path, text):
    """Write ``text`` to ``path`` atomically (LF line endings)."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _lines(path):
    with open(path, "r", newline=None) as fh:
        for lineno, line in enumerate(fh, start=1):
            yield lineno, line.rstrip("\n")


def _float(tok, lineno, path):
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(f"not a number: {tok!r}", lineno, path) from None
    return v


def _int(tok, lineno, path):
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"not an integer: {tok!r}", lineno, path) from None


# dense matrices ---------------------------------------------------------

def matrix_to_csv(M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return "".join(",".join(fmt(v) for v in row) + "\n" for row in M)


def write_matrix(path, M):
    atomic_write(path, matrix_to_csv(M))


def read_matrix(path):
    """Headerless CSV of floats; every row must have the same length."""
    rows = []
    width = None
    for lineno, line in _lines(path):
        if not line.strip():
            continue
        toks = line.split(",")
        if width is None:
            width = len(toks)
        elif len(toks) != width:
            raise ParseError(f"expected {width} columns, found {len(toks)}", lineno, path)
        rows.append([_float(t, lineno, path) for t in toks])
    if not rows:
        raise ParseError("empty matrix file", None, path)
    return np.array(rows, dtype=float)


# graphs -----------------------------------------------------------------

def graph_to_text(G):
    out = [f"{G.n} {G.num_edges}\n"]
    for i, j, w in G.edges:
        out.append(f"{int(i)} {int(j)} {fmt(w)}\n")
    return "".join(out)


def write_graph(path, G):
    atomic_write(path, graph_to_text(G))


def read_graph(path):
    """Graph file: header ``n e`` then ``e`` lines ``i j w`` (0-based, ``i < j``)."""
    it = _lines(path)
    header = None
    edges = []
    for lineno, line in it:
        toks = line.split()
        if not toks:
            continue
        if header is None:
            if len(toks) != 2:
                raise ParseError("graph header must be 'n e'", lineno, path)
            header = (_int(toks[0], lineno, path), _int(toks[1], lineno, path))
            continue
        if len(toks) != 3:
            raise ParseError("edge line must be 'i j w'", lineno, path)
        i, j = _int(toks[0], lineno, path), _int(toks[1], lineno, path)
        w = _float(toks[2], lineno, path)
        if not (0 <= i < j < header[0]):
            raise ParseError(f"edge ({i}, {j}) violates 0 <= i < j < n", lineno, path)
        if not (w > 0 and np.isfinite(w)):
            raise ParseError(f"edge weight must be positive, got {w}", lineno, path)
        edges.append((i, j, w))
    if header is None:
        raise ParseError("empty graph file", None, path)
    if len(edges) != header[1]:
        raise ParseError(f"header announces {header[1]} edges, found {len(edges)}", None, path)
    try:
        return SimilarityGraph(header[0], np.array(edges, dtype=float).reshape(-1, 3))
    except ValueError as exc:
        raise ParseError(str(exc), None, path) from exc


# observations -----------------------------------------------------------

def observations_to_text(obs):
    out = [f"{obs.m} {obs.n} {obs.size} {fmt(obs.p)}\n"]
    for i, j, v in zip(obs.rows, obs.cols, obs.values):
        out.append(f"{int(i)} {int(j)} {fmt(v)}\n")
    return "".join(out)


def write_observations(path, obs):
    atomic_write(path, observations_to_text(obs))


def read_observations(path):
    """Observation file: header ``m n count p`` then ``i j value`` lines (0-based)."""
    header = None
    rows, cols, vals = [], [], []
    seen = set()
    for lineno, line in _lines(path):
        toks = line.split()
        if not toks:
            continue
        if header is None:
            if len(toks) != 4:
                raise ParseError("observation header must be 'm n count p'", lineno, path)
            header = (_int(toks[0], lineno, path), _int(toks[1], lineno, path),
                      _int(toks[2], lineno, path), _float(toks[3], lineno, path))
            if not (0 < header[3] <= 1):
                raise ParseError(f"p must lie in (0, 1], got {header[3]}", lineno, path)
            continue
        if len(toks) != 3:
            raise ParseError("observation line must be 'i j value'", lineno, path)
        i, j = _int(toks[0], lineno, path), _int(toks[1], lineno, path)
        v = _float(toks[2], lineno, path)
        if not (0 <= i < header[0] and 0 <= j < header[1]):
            raise ParseError(f"index ({i}, {j}) out of bounds", lineno, path)
        if not np.isfinite(v):
            raise ParseError("value must be finite", lineno, path)
        if (i, j) in seen:
            raise ParseError(f"duplicate entry ({i}, {j})", lineno, path)
        seen.add((i, j))
        rows.append(i)
        cols.append(j)
        vals.append(v)
    if header is None:
        raise ParseError("empty observation file", None, path)
    if len(vals) != header[2]:
        raise ParseError(f"header announces {header[2]} entries, found {len(vals)}", None, path)
    return ObservationSet(header[0], header[1], np.array(rows, dtype=np.int64),
                          np.array(cols, dtype=np.int64), np.array(vals, dtype=float), header[3])


# traces and reports ---------------------------------------------------------

def trace_to_csv(trace, timing=True):
    """Trace CSV; ``timing=False`` writes ``0`` in the wall_ms column."""
    out = [",".join(TRACE_HEADER) + "\n"]
    for rec in trace.records:
        wall = fmt(rec.wall_ms) if timing else "0"
        out.append(f"{rec.iter},{fmt(rec.train_rmse)},{fmt(rec.test_rmse)},{wall}\n")
    out.append(f"# reason={trace.reason}\n")
    return "".join(out)


def write_trace(path, trace, timing=True):
    atomic_write(path, trace_to_csv(trace, timing))


def read_trace(path):
    """Return ``(array of shape (k, 4), reason)``."""
    rows = []
    reason = None
    for lineno, line in _lines(path):
        if lineno == 1:
            if tuple(line.split(",")) != TRACE_HEADER:
                raise ParseError("bad trace header", lineno, path)
            continue
        if line.startswith("# reason="):
            reason = line[len("# reason="):]
            if reason not in STOP_REASONS:
                raise ParseError(f"unknown stop reason {reason!r}", lineno, path)
            continue
        toks = line.split(",")
        if len(toks) != 4:
            raise ParseError("trace rows have four columns", lineno, path)
        rows.append([_float(t, lineno, path) for t in toks])
    if reason is None:
        raise ParseError("missing '# reason=' line", None, path)
    return np.array(rows, dtype=float).reshape(-1, 4), reason


def table_to_csv(header, rows):
    """CSV with a header row; floats formatted with ``%.17g``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def write_table(path, header, rows):
    atomic_write(path, table_to_csv(header, rows))


def read_table(path):
    """Return ``(header, rows)`` with every cell as a string."""
    with open(path, newline="") as fh:
        data = list(csv.reader(fh))
    if not data:
        raise ParseError("empty table", None, path)
    return data[0], data[1:]


def write_report(path, items):
    """Diagnostics report ``quantity,value``."""
    write_table(path, ("quantity", "value"), [(k, float(v)) for k, v in items])


# configs ----------------------------------------------------------------

def parse_config(text, path=None):
    """Flat ``key = value`` document; ``#`` starts a comment. Keys must be unique."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", lineno, path)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ParseError("empty key", lineno, path)
        if key in out:
            raise ParseError(f"duplicate key {key!r}", lineno, path)
        out[key] = value
    return out


def read_config(path):
    with open(path) as fh:
        return parse_config(fh.read(), os.fspath(path))


def config_to_text(items):
    return "".join(f"{k} = {v}\n" for k, v in items.items())


def write_config(path, items):
    atomic_write(path, config_to_text(items))
