"""Dataset loading, synthetic generators and result emission.

Dense files are delimited text, one example per line, ``#`` lines ignored.
Sparse files use ``label idx:value ...`` with 1-based indices.  Rating files
are ``user,item,rating`` lines with 0-based ids.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .learners import Dataset, Ratings

__all__ = [
    "ParseError",
    "parse_dense",
    "load_dense",
    "parse_sparse",
    "load_sparse",
    "parse_ratings",
    "load_ratings",
    "write_dense",
    "write_ratings",
    "synth_regression",
    "synth_classification",
    "synth_lowrank",
    "subsample",
    "ResultRecord",
    "RESULT_COLUMNS",
    "format_results",
    "emit_results",
    "read_results",
]


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _read(source) -> str:
    if isinstance(source, (str, os.PathLike)) and os.path.exists(source):
        with open(source, encoding="utf-8") as fh:
            return fh.read()
    if hasattr(source, "read"):
        return source.read()
    if isinstance(source, str):
        return source
    raise FileNotFoundError(source)


def _records(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line and not line.startswith("#"):
            yield lineno, line


def parse_dense(text: str, *, label_column: int = -1, delimiter: str | None = None) -> Dataset:
    """Parse delimited numeric text; ``label_column`` indexes the label cell.

    The delimiter defaults to ``,`` when a comma is present, else whitespace.
    """
    rows, labels, width = [], [], None
    for lineno, line in _records(text):
        sep = delimiter if delimiter is not None else ("," if "," in line else None)
        cells = [c.strip() for c in line.split(sep)]
        try:
            values = [float(c) for c in cells]
        except ValueError:
            bad = next(c for c in cells if not _is_float(c))
            raise ParseError(f"non-numeric cell {bad!r}", lineno) from None
        if width is None:
            width = len(values)
            if width < 2:
                raise ParseError("need at least one feature and a label", lineno)
        elif len(values) != width:
            raise ParseError(f"expected {width} cells, found {len(values)}", lineno)
        labels.append(values.pop(label_column))
        rows.append(values)
    if not rows:
        raise ParseError("no rows")
    return Dataset(np.array(rows), np.array(labels))


def _is_float(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_dense(source, **kwargs) -> Dataset:
    """Load a dense dataset from a path, file object or literal text."""
    return parse_dense(_read(source), **kwargs)


def parse_sparse(text: str, *, n_dims: int | None = None) -> Dataset:
    """Parse ``label idx:value`` lines (indices 1-based) into a dense Dataset.

    Missing indices are zero; a line with only a label is an all-zero row.
    """
    labels, entries, widest = [], [], 0
    for lineno, line in _records(text):
        head, *pairs = line.split()
        try:
            label = float(head)
        except ValueError:
            raise ParseError(f"bad label {head!r}", lineno) from None
        row = {}
        for pair in pairs:
            idx, sep, val = pair.partition(":")
            try:
                j, v = int(idx), float(val)
            except ValueError:
                raise ParseError(f"bad pair {pair!r}", lineno) from None
            if not sep:
                raise ParseError(f"bad pair {pair!r}", lineno)
            if j < 1:
                raise ParseError(f"index {j} < 1 (indices are 1-based)", lineno)
            if j in row:
                raise ParseError(f"duplicate index {j}", lineno)
            row[j] = v
            widest = max(widest, j)
        labels.append(label)
        entries.append(row)
    if not labels:
        raise ParseError("no rows")
    dims = widest if n_dims is None else n_dims
    if dims < widest:
        raise ParseError(f"index {widest} exceeds n_dims={n_dims}")
    X = np.zeros((len(labels), max(dims, 1)))
    for r, row in enumerate(entries):
        for j, v in row.items():
            X[r, j - 1] = v
    return Dataset(X, np.array(labels))


def load_sparse(source, **kwargs) -> Dataset:
    return parse_sparse(_read(source), **kwargs)


def parse_ratings(text: str, *, n_users: int | None = None,
                  n_items: int | None = None) -> Ratings:
    users, items, values = [], [], []
    for lineno, line in _records(text):
        cells = [c.strip() for c in line.replace(",", " ").split()]
        if len(cells) != 3:
            raise ParseError(f"expected user,item,rating; found {len(cells)} cells", lineno)
        try:
            u, i, r = int(cells[0]), int(cells[1]), float(cells[2])
        except ValueError:
            raise ParseError("bad rating triple", lineno) from None
        if u < 0 or i < 0:
            raise ParseError("negative id", lineno)
        users.append(u)
        items.append(i)
        values.append(r)
    if not values:
        raise ParseError("no rows")
    nu = max(users) + 1 if n_users is None else n_users
    ni = max(items) + 1 if n_items is None else n_items
    return Ratings(np.array(users), np.array(items), np.array(values), nu, ni)


def load_ratings(source, **kwargs) -> Ratings:
    return parse_ratings(_read(source), **kwargs)


def write_dense(dataset: Dataset, path, *, header: str | None = None) -> None:
    """Features then label, ``repr`` floats so reloading is exact."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        for x, y in zip(dataset.features, dataset.labels):
            fh.write(",".join(repr(float(v)) for v in (*x, y)) + "\n")


def write_ratings(ratings: Ratings, path, *, header: str | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        for u, i, r in zip(ratings.users, ratings.items, ratings.values):
            fh.write(f"{int(u)},{int(i)},{float(r)!r}\n")


# --- synthetic data ----------------------------------------------------------------

def _positive(**sizes) -> None:
    for name, value in sizes.items():
        if not isinstance(value, (int, np.integer)) or value < 1:
            raise ValueError(f"{name} must be a positive integer, got {value!r}")


def synth_regression(n_examples: int, n_dims: int, noise: float, seed: int) -> Dataset:
    """``y = X w + noise * e`` with ``X, w, e`` standard normal."""
    _positive(n_examples=n_examples, n_dims=n_dims)
    if noise < 0:
        raise ValueError("noise must be non-negative")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_examples, n_dims))
    w = rng.standard_normal(n_dims)
    y = X @ w + noise * rng.standard_normal(n_examples)
    return Dataset(X, y)


def synth_classification(n_examples: int, n_dims: int, seed: int, *,
                         separation: float = 3.0) -> Dataset:
    """Two Gaussian blobs with unit covariance, labels ±1.

    Centers sit at ``±separation/2`` along a random unit direction.
    """
    _positive(n_examples=n_examples, n_dims=n_dims)
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(n_dims)
    direction /= np.linalg.norm(direction)
    y = np.where(rng.random(n_examples) < 0.5, -1.0, 1.0)
    X = rng.standard_normal((n_examples, n_dims)) + np.outer(y, direction) * separation / 2
    return Dataset(X, y)


def synth_lowrank(users: int, items: int, rank: int, density: float, seed: int, *,
                  noise: float = 0.0) -> Ratings:
    """Ratings ``U V^T + noise`` on a random subset of cells.

    ``U, V`` are standard normal scaled by ``rank**-0.25`` so entries have unit
    variance.  Each row and column keeps at least one observed cell.
    """
    _positive(users=users, items=items, rank=rank)
    if not 0 < density <= 1:
        raise ValueError(f"density must lie in (0, 1], got {density}")
    rng = np.random.default_rng(seed)
    scale = rank ** -0.25
    U = rng.standard_normal((users, rank)) * scale
    V = rng.standard_normal((items, rank)) * scale
    mask = rng.random((users, items)) < density
    mask[np.arange(users), rng.integers(0, items, size=users)] = True
    mask[rng.integers(0, users, size=items), np.arange(items)] = True
    uu, ii = np.nonzero(mask)
    r = np.sum(U[uu] * V[ii], axis=1) + noise * rng.standard_normal(len(uu))
    return Ratings(uu, ii, r, users, items)


def subsample(dataset: Dataset, factor: int, seed: int) -> Dataset:
    """Seeded uniform subsample keeping ``ceil(m / factor)`` examples, original order."""
    _positive(factor=factor)
    m = len(dataset)
    keep = np.sort(np.random.default_rng(seed).choice(m, size=math.ceil(m / factor),
                                                      replace=False))
    return Dataset(dataset.features[keep], dataset.labels[keep])


# --- results -----------------------------------------------------------------------

RESULT_COLUMNS = ("trial", "strategy", "budget", "winner", "test_loss", "pulls",
                  "loss_observations", "wall_ms")


@dataclass(frozen=True)
class ResultRecord:
    """One (trial, strategy, budget) outcome.  ``winner`` is a config string."""

    trial: int
    strategy: str
    budget: int
    winner: str
    test_loss: float
    pulls: int
    loss_observations: int
    wall_ms: float

    def sort_key(self):
        return (self.strategy, self.trial, self.budget)


def _sorted(records: Iterable[ResultRecord]) -> list[ResultRecord]:
    return sorted(records, key=ResultRecord.sort_key)


def _cell(value) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def format_results(records: Iterable[ResultRecord], fmt: str = "csv",
                   meta: dict | None = None) -> str:
    """Render records sorted by ``(strategy, trial, budget)``.

    CSV puts ``meta`` in one leading ``# {json}`` comment line; JSON puts it
    under ``"meta"``.
    """
    rows = _sorted(records)
    if fmt == "csv":
        buf = io.StringIO()
        if meta is not None:
            buf.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for r in rows:
            writer.writerow([_cell(getattr(r, c)) for c in RESULT_COLUMNS])
        return buf.getvalue()
    if fmt == "json":
        doc = {"meta": meta, "columns": list(RESULT_COLUMNS),
               "records": [_json_safe(asdict(r)) for r in rows]}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def _json_safe(d: dict) -> dict:
    # non-finite test losses from divergent learners; JSON has no inf
    return {k: (repr(v) if isinstance(v, float) and not math.isfinite(v) else v)
            for k, v in d.items()}


def emit_results(records: Iterable[ResultRecord], fmt: str = "csv", destination=None,
                 meta: dict | None = None) -> str:
    """Write records to ``destination`` (path, file object, or None for return only)."""
    text = format_results(records, fmt, meta)
    if destination is None:
        return text
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        try:
            with open(destination, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise OSError(f"cannot write results to {destination}: {exc}") from exc
    return text


_TYPES = {"trial": int, "strategy": str, "budget": int, "winner": str,
          "test_loss": float, "pulls": int, "loss_observations": int, "wall_ms": float}


def read_results(source) -> tuple[list[ResultRecord], dict | None]:
    """Inverse of :func:`emit_results` for either format."""
    text = _read(source)
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        records = [ResultRecord(**{k: _TYPES[k](v) for k, v in r.items()})
                   for r in doc["records"]]
        return records, doc.get("meta")
    meta = None
    lines = text.splitlines()
    if lines and lines[0].startswith("# "):
        meta = json.loads(lines[0][2:])
        lines = lines[1:]
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None or tuple(header) != RESULT_COLUMNS:
        raise ParseError(f"unexpected header {header!r}")
    records = [ResultRecord(**{c: _TYPES[c](v) for c, v in zip(RESULT_COLUMNS, row)})
               for row in reader]
    return records, meta
