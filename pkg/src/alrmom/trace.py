"""Per-iteration run records and their CSV form.

A trace file is one JSON metadata comment line, a fixed header and one row
per record::

    # {"spec_hash": "...", "termination": "budget", ...}
    k,epoch,f,f_gap,eta,dnorm,dist,trunc,wall_ms
    1,0,37554.5,37554.5,0.0051498...,...

Floats are written with 17 significant digits so reading a written trace
gives back the same binary64 values. Missing quantities are ``nan``.
"""

import json
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from ._validation import ParseError

COLUMNS = ("k", "epoch", "f", "f_gap", "eta", "dnorm", "dist", "trunc", "wall_ms")
_INT_COLUMNS = ("k", "epoch", "trunc")


@dataclass
class Trace:
    columns: dict = field(default_factory=lambda: {c: [] for c in COLUMNS})
    meta: dict = field(default_factory=dict)
    # in-memory only quantities (not written to CSV), e.g. epoch losses
    extras: dict = field(default_factory=dict)

    def append(self, k, epoch=0, f=math.nan, f_gap=math.nan, eta=math.nan, dnorm=math.nan,
               dist=math.nan, trunc=False, wall_ms=0.0):
        row = (k, epoch, f, f_gap, eta, dnorm, dist, int(bool(trunc)), wall_ms)
        for name, value in zip(COLUMNS, row):
            self.columns[name].append(value)

    def finalize(self):
        for name in COLUMNS:
            dtype = np.int64 if name in _INT_COLUMNS else np.float64
            self.columns[name] = np.asarray(self.columns[name], dtype=dtype)
        return self

    def __getitem__(self, name):
        return np.asarray(self.columns[name])

    def __len__(self):
        return len(self.columns["k"])

    @property
    def termination(self):
        return self.meta.get("termination", "budget")

    def final(self, name):
        """Last finite value of column ``name`` (``nan`` if none)."""
        col = self[name].astype(np.float64)
        finite = col[np.isfinite(col)]
        if self.termination == "diverged" and name in ("f", "f_gap", "dist"):
            return math.inf
        return float(finite[-1]) if finite.size else math.nan

    def __eq__(self, other):
        if not isinstance(other, Trace):
            return NotImplemented
        if self.meta != other.meta:
            return False
        for name in COLUMNS:
            a, b = np.asarray(self.columns[name]), np.asarray(other.columns[name])
            if a.shape != b.shape:
                return False
            equal_nan = name not in _INT_COLUMNS
            if not np.array_equal(a, b, equal_nan=equal_nan):
                return False
        return True


def _fmt(name, value):
    if name in _INT_COLUMNS:
        return str(int(value))
    return f"{float(value):.17g}"


def format_trace(trace):
    lines = ["# " + json.dumps(trace.meta, sort_keys=True), ",".join(COLUMNS)]
    cols = [np.asarray(trace.columns[name]) for name in COLUMNS]
    for i in range(len(trace)):
        lines.append(",".join(_fmt(name, col[i]) for name, col in zip(COLUMNS, cols)))
    return "\n".join(lines) + "\n"


def write_trace(trace, path):
    """Write ``trace`` to ``path`` atomically (temp file + rename)."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".trace-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(format_trace(trace))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def parse_trace(text):
    meta = {}
    trace = Trace()
    header_seen = False
    last_k = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            if header_seen:
                raise ParseError("comment after the header", lineno)
            try:
                meta.update(json.loads(line[1:].strip() or "{}"))
            except json.JSONDecodeError as exc:
                raise ParseError(f"bad metadata line: {exc.msg}", lineno) from None
            continue
        fields = line.split(",")
        if not header_seen:
            if tuple(f.strip() for f in fields) != COLUMNS:
                raise ParseError(f"expected header {','.join(COLUMNS)}", lineno)
            header_seen = True
            continue
        if len(fields) != len(COLUMNS):
            raise ParseError(f"expected {len(COLUMNS)} fields, got {len(fields)}", lineno)
        try:
            row = [int(v) if name in _INT_COLUMNS else float(v)
                   for name, v in zip(COLUMNS, fields)]
        except ValueError:
            raise ParseError("non-numeric field", lineno) from None
        if last_k is not None and row[0] <= last_k:
            raise ParseError("k is not strictly increasing", lineno)
        last_k = row[0]
        for name, value in zip(COLUMNS, row):
            trace.columns[name].append(value)
    if not header_seen:
        raise ParseError("missing header", 1)
    trace.meta = meta
    return trace.finalize()


def read_trace(path):
    with open(path, encoding="utf-8") as fh:
        return parse_trace(fh.read())
