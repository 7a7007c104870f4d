"""File formats: binary matrix container, CSV/JSON writers, named event ingestion.

Binary container layout (all integers little-endian)::

    8 bytes  magic b"MIPPDPG\\0"
    u32      format version (1)
    u32      kind code (see KINDS)
    u64 x 3  N, M, L
    u32      number of sections
    per section:
        u16 name length, name (utf-8)
        u64 rows, u64 cols
        rows * cols float64 values, row-major, little-endian
"""
from __future__ import annotations

import csv
import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np
import scipy.io

from .binning import TimeMap, UnfoldedIntensity, normalize_times
from .embed import Embedding
from .errors import DataError
from .simulate import EventStream

__all__ = [
    "MAGIC",
    "KINDS",
    "write_container",
    "read_container",
    "save_unfolded",
    "load_unfolded",
    "save_embedding",
    "load_embedding",
    "export_matrix_market",
    "write_matrix_csv",
    "read_matrix_csv",
    "write_json",
    "canonical_json",
    "sha256_file",
    "IngestResult",
    "read_event_table",
    "read_side_table",
    "write_side_table",
]

MAGIC = b"MIPPDPG\0"
VERSION = 1
KINDS = {"unfolded-empirical": 0, "unfolded-exact": 1, "embedding": 2, "distance": 3, "matrix": 4}
_KIND_NAMES = {v: k for k, v in KINDS.items()}


def write_container(path, kind: str, dims, sections: dict):
    """Write named float64 matrices to the binary container."""
    if kind not in KINDS:
        raise ValueError(f"unknown container kind {kind!r}")
    n, m, l = (int(v) for v in dims)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, KINDS[kind]))
        fh.write(struct.pack("<QQQ", n, m, l))
        fh.write(struct.pack("<I", len(sections)))
        for name, mat in sections.items():
            a = np.atleast_2d(np.asarray(mat, dtype="<f8"))
            if a.ndim != 2:
                raise ValueError(f"section {name!r} is not a matrix")
            raw = name.encode()
            fh.write(struct.pack("<H", len(raw)) + raw)
            fh.write(struct.pack("<QQ", *a.shape))
            fh.write(np.ascontiguousarray(a).tobytes())


def read_container(path):
    """Return ``(kind, (N, M, L), {name: matrix})``; raises ``DataError`` on corruption."""
    with open(path, "rb") as fh:
        blob = fh.read()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(blob):
            raise DataError(f"{path}: truncated container at byte {pos}")
        out = blob[pos:pos + n]
        pos += n
        return out

    if take(8) != MAGIC:
        raise DataError(f"{path}: not a matrix container (bad magic)")
    version, code = struct.unpack("<II", take(8))
    if version != VERSION or code not in _KIND_NAMES:
        raise DataError(f"{path}: unsupported container version {version} / kind {code}")
    dims = struct.unpack("<QQQ", take(24))
    (count,) = struct.unpack("<I", take(4))
    sections = {}
    for _ in range(count):
        (ln,) = struct.unpack("<H", take(2))
        name = take(ln).decode()
        rows, cols = struct.unpack("<QQ", take(16))
        data = np.frombuffer(take(8 * rows * cols), dtype="<f8").reshape(rows, cols)
        sections[name] = data.astype(float)
    if pos != len(blob):
        raise DataError(f"{path}: {len(blob) - pos} trailing bytes in container")
    return _KIND_NAMES[code], tuple(int(v) for v in dims), sections


def save_unfolded(path, unfolded: UnfoldedIntensity):
    write_container(path, f"unfolded-{unfolded.kind}",
                    (unfolded.n_nodes, unfolded.n_bins, unfolded.n_layers), {"data": unfolded.data})


def load_unfolded(path) -> UnfoldedIntensity:
    kind, (n, m, l), sections = read_container(path)
    if not kind.startswith("unfolded-") or "data" not in sections:
        raise DataError(f"{path}: container of kind {kind!r} is not an unfolded matrix")
    return UnfoldedIntensity(sections["data"], n, m, l, kind.split("-", 1)[1])


def save_embedding(path, emb: Embedding):
    write_container(path, "embedding", (emb.n_nodes, emb.n_bins, emb.n_layers),
                    {"left": emb.left, "right": emb.right,
                     "singular_values": emb.singular_values[None, :]})


def load_embedding(path) -> Embedding:
    kind, (n, m, l), sections = read_container(path)
    if kind != "embedding":
        raise DataError(f"{path}: container of kind {kind!r} is not an embedding")
    return Embedding(sections["left"], sections["right"], sections["singular_values"][0], n, m, l)


def export_matrix_market(path, unfolded: UnfoldedIntensity):
    """Dense Matrix Market export with the dimensions recorded in the comment line."""
    scipy.io.mmwrite(str(path), unfolded.data, precision=17,
                     comment=f"N={unfolded.n_nodes} M={unfolded.n_bins} "
                             f"L={unfolded.n_layers} kind={unfolded.kind}")


def _fmt(x):
    return format(float(x), ".17g")


def write_matrix_csv(path, A, header=None, index=None):
    """Write a matrix as CSV with round-trip float formatting.

    ``index`` may hold leading integer columns (shape ``(rows, k)``) whose
    names come first in ``header``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    with open(path, "w", newline="") as fh:
        if header is not None:
            fh.write(",".join(header) + "\n")
        for r, row in enumerate(A):
            lead = [str(int(v)) for v in index[r]] if index is not None else []
            fh.write(",".join(lead + [_fmt(v) for v in row]) + "\n")


def read_matrix_csv(path, skip_header=True):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if skip_header:
        rows = rows[1:]
    try:
        return np.array([[float(v) for v in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric matrix entry ({exc})") from exc


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"))


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, sort_keys=True, indent=2)
        fh.write("\n")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# ingestion of event tables with string names and raw timestamps

@dataclass
class IngestResult:
    events: EventStream
    node_names: list
    layer_names: list
    time_map: TimeMap

    def manifest(self):
        return {"n_nodes": len(self.node_names), "n_layers": len(self.layer_names),
                "n_events": len(self.events),
                "time_map": {"offset": self.time_map.offset, "scale": self.time_map.scale}}


def read_side_table(path) -> list:
    """Read a ``name,index`` table; returns names ordered by index (0..K-1)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["name", "index"]:
            raise DataError(f"{path}: expected header name,index", [1])
        pairs, bad = {}, []
        for lineno, rec in enumerate(reader, start=2):
            try:
                name, idx = rec
                pairs[int(idx)] = name
            except ValueError:
                bad.append(lineno)
    if bad:
        raise DataError(f"{path}: malformed side-table rows at lines {bad[:20]}", bad)
    if sorted(pairs) != list(range(len(pairs))):
        raise DataError(f"{path}: indices must be exactly 0..{len(pairs) - 1}")
    return [pairs[k] for k in range(len(pairs))]


def write_side_table(path, names):
    with open(path, "w", newline="") as fh:
        fh.write("name,index\n")
        w = csv.writer(fh, lineterminator="\n")
        for k, name in enumerate(names):
            w.writerow([name, k])


def read_event_table(path, node_names=None, layer_names=None) -> IngestResult:
    """Ingest a ``src,dst,layer,time`` CSV whose names are arbitrary strings.

    Names are mapped through the given side tables, or, when absent, numbered
    in sorted order of the distinct names seen.  Raw timestamps are mapped
    onto (0, 1] by ``normalize_times``.  Malformed rows and unknown names
    are collected and reported together with their line numbers.
    """
    recs, bad = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["src", "dst", "layer", "time"]:
            raise DataError(f"{path}: expected header src,dst,layer,time", [1])
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            try:
                s, d, l, t = (v.strip() for v in rec)
                if not (s and d and l):
                    raise ValueError
                recs.append((lineno, s, d, l, float(t)))
            except ValueError:
                bad.append(lineno)
    if node_names is None:
        node_names = sorted({r[1] for r in recs} | {r[2] for r in recs})
    if layer_names is None:
        layer_names = sorted({r[3] for r in recs})
    node_index = {name: k for k, name in enumerate(node_names)}
    layer_index = {name: k for k, name in enumerate(layer_names)}
    rows, raw_t = [], []
    for lineno, s, d, l, t in recs:
        if (s not in node_index or d not in node_index or l not in layer_index
                or not np.isfinite(t)):
            bad.append(lineno)
            continue
        rows.append((node_index[s], node_index[d], layer_index[l]))
        raw_t.append(t)
    if bad:
        bad = sorted(set(bad))
        raise DataError(f"{path}: {len(bad)} malformed row(s) at lines {bad[:20]}", bad)
    times, tmap = normalize_times(np.asarray(raw_t, dtype=float))
    events = EventStream.from_records(
        [(s, d, l, t) for (s, d, l), t in zip(rows, times)],
        max(len(node_names), 1), max(len(layer_names), 1))
    return IngestResult(events, list(node_names), list(layer_names), tmap)
