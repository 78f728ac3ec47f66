"""File formats: legacy VTK fields, error CSVs, trajectories and the basis cache.

Basis cache layout (little endian)::

    8 bytes   magic  b"FGMSBASE"
    uint32    format version
    uint32    header length H
    H bytes   UTF-8 JSON header: grid checksum, M, N_c, N_p, node count,
              block table (name, rows, nnz), pipe neighborhoods,
              payload length and crc32
    payload   per block: indptr (int64, rows+1), indices (int64), data (float64)

Within an offline block the rows of neighborhood ``i`` start at ``indptr[i*M]``.

Trajectories are ``<stem>.bin`` (float64, T rows then p rows, one row per
layer) plus a ``<stem>.txt`` sidecar of ``key = value`` lines.
"""

from __future__ import annotations

import csv
import json
import struct
import zlib
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .analysis import ErrorReport, RunErrors
from .errors import CacheError
from .offline import MultiscaleSpace

CACHE_MAGIC = b"FGMSBASE"
CACHE_VERSION = 1
_BLOCKS = ("offline_T", "pipe_T", "offline_p")


def write_fields_vtk(path, mesh, T, p, layer_ids=None, frozen=None, title="frostgms fields"):
    """Legacy ASCII VTK unstructured grid with nodal T, p and per-cell tags."""
    T = np.asarray(T, dtype=float)
    p = np.asarray(p, dtype=float)
    if T.shape != (mesh.n_nodes,) or p.shape != (mesh.n_nodes,):
        raise ValueError("nodal fields must have one value per mesh node")
    n, c = mesh.n_nodes, mesh.n_cells
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {n} double"]
    lines += [f"{x!r} {y!r} 0.0" for x, y in mesh.nodes.tolist()]
    lines.append(f"CELLS {c} {4 * c}")
    lines += [f"3 {a} {b} {d}" for a, b, d in mesh.triangles.tolist()]
    lines.append(f"CELL_TYPES {c}")
    lines += ["5"] * c
    lines.append(f"POINT_DATA {n}")
    for name, vals in (("T", T), ("p", p)):
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [repr(v) for v in vals.tolist()]
    tags = [(k, v) for k, v in (("layer_id", layer_ids), ("frozen", frozen)) if v is not None]
    if tags:
        lines.append(f"CELL_DATA {c}")
        for name, vals in tags:
            vals = np.asarray(vals).astype(np.int64)
            if vals.shape != (c,):
                raise ValueError(f"{name} must have one value per cell")
            lines += [f"SCALARS {name} int 1", "LOOKUP_TABLE default"]
            lines += [str(v) for v in vals.tolist()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


TABLE_COLUMNS = ["M", "L", "period", "DOF_c", "e_L2_T", "e_H1_T", "e_L2_p", "e_H1_p"]
SERIES_COLUMNS = ["M", "L", "layer", "e_L2_T", "e_H1_T", "e_L2_p", "e_H1_p"]
_KEYS = ["l2_T", "h1_T", "l2_p", "h1_p"]


def write_error_csv(report: ErrorReport, path, series_path=None):
    """Final-layer table (3 decimals); optionally the full per-layer series."""
    if not report.rows:
        raise ValueError("error report is empty")
    rows = sorted(report.rows, key=lambda r: (r.L, r.M))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        for r in rows:
            w.writerow([r.M, r.L, r.period, r.dof_c] + [f"{r.final(k):.3f}" for k in _KEYS])
    if series_path is not None:
        with open(series_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SERIES_COLUMNS)
            for r in rows:
                for layer, vals in enumerate(zip(*(r.series[k] for k in _KEYS)), start=1):
                    w.writerow([r.M, r.L, layer] + [repr(float(v)) for v in vals])


def read_error_csv(path, series_path=None) -> ErrorReport:
    """Inverse of :func:`write_error_csv`; without a series file each run holds one layer."""
    out = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TABLE_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        for row in reader:
            M, L = int(row["M"]), int(row["L"])
            series = {k: [float(row[c])] for k, c in zip(_KEYS, TABLE_COLUMNS[4:])}
            out[(M, L)] = RunErrors(M, L, int(row["period"]), int(row["DOF_c"]), series)
    if series_path is not None:
        full = {}
        with open(series_path, newline="") as fh:
            for row in csv.DictReader(fh):
                s = full.setdefault((int(row["M"]), int(row["L"])), {k: [] for k in _KEYS})
                for k, c in zip(_KEYS, SERIES_COLUMNS[3:]):
                    s[k].append(float(row[c]))
        for key, s in full.items():
            out[key].series = s
    return ErrorReport(list(out.values()))


def save_trajectory(stem, T, p, **meta):
    """Write ``<stem>.bin`` and ``<stem>.txt``; extra ``meta`` lands in the sidecar."""
    T = np.ascontiguousarray(T, dtype="<f8")
    p = np.ascontiguousarray(p, dtype="<f8")
    if T.shape != p.shape or T.ndim != 2:
        raise ValueError("T and p must be (layers, nodes) arrays of equal shape")
    stem = Path(stem)
    with open(stem.with_suffix(".bin"), "wb") as fh:
        fh.write(T.tobytes())
        fh.write(p.tobytes())
    side = {"layers": T.shape[0], "nodes": T.shape[1], "fields": "T,p", "dtype": "float64-le"}
    side.update(meta)
    text = "".join(
        f"{k} = {','.join(map(str, v)) if isinstance(v, (list, tuple)) else v}\n"
        for k, v in side.items()
    )
    stem.with_suffix(".txt").write_text(text)


def load_trajectory(stem):
    """Returns ``(T, p, meta)``; ``meta`` values are strings."""
    stem = Path(stem)
    meta = {}
    for line in stem.with_suffix(".txt").read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            meta[k.strip()] = v.strip()
    layers, nodes = int(meta["layers"]), int(meta["nodes"])
    raw = np.fromfile(stem.with_suffix(".bin"), dtype="<f8")
    if raw.size != 2 * layers * nodes:
        raise ValueError(f"{stem}.bin holds {raw.size} values, sidecar expects {2 * layers * nodes}")
    raw = raw.reshape(2, layers, nodes)
    return raw[0].copy(), raw[1].copy(), meta


def save_basis_cache(space: MultiscaleSpace, mesh, path):
    payload = bytearray()
    table = []
    for name in _BLOCKS:
        block = sp.csr_matrix(getattr(space, name))
        block.sort_indices()
        parts = (block.indptr.astype("<i8"), block.indices.astype("<i8"), block.data.astype("<f8"))
        for arr in parts:
            payload += arr.tobytes()
        table.append({"name": name, "rows": int(block.shape[0]), "nnz": int(block.nnz)})
    header = {
        "checksum": mesh.checksum(),
        "M": space.M,
        "N_c": space.n_neighborhoods,
        "N_p": space.n_pipe,
        "n_nodes": space.n_nodes,
        "blocks": table,
        "pipe_omegas": space.pipe_omegas.tolist(),
        "payload_length": len(payload),
        "payload_crc32": zlib.crc32(payload),
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<II", CACHE_VERSION, len(hbytes)))
        fh.write(hbytes)
        fh.write(payload)


def load_basis_cache(path, mesh) -> MultiscaleSpace:
    """Read a cache written by :func:`save_basis_cache` for this mesh."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CacheError(f"cannot read basis cache {path}: {exc}") from exc
    if len(blob) < 16 or blob[:8] != CACHE_MAGIC:
        raise CacheError(f"{path}: not a basis cache (bad magic or truncated)")
    version, hlen = struct.unpack("<II", blob[8:16])
    if version != CACHE_VERSION:
        raise CacheError(f"{path}: cache version {version}, expected {CACHE_VERSION}")
    try:
        header = json.loads(blob[16:16 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CacheError(f"{path}: corrupt header") from exc
    payload = blob[16 + hlen:]
    if len(payload) != header["payload_length"] or zlib.crc32(payload) != header["payload_crc32"]:
        raise CacheError(f"{path}: corrupt or truncated payload")
    if header["checksum"] != mesh.checksum() or header["n_nodes"] != mesh.n_nodes:
        raise CacheError(
            f"{path}: grid checksum {header['checksum']} does not match mesh {mesh.checksum()}"
        )
    blocks, off = {}, 0
    for entry in header["blocks"]:
        rows, nnz = entry["rows"], entry["nnz"]
        arrays = []
        for count, dt in ((rows + 1, "<i8"), (nnz, "<i8"), (nnz, "<f8")):
            arrays.append(np.frombuffer(payload, dtype=dt, count=count, offset=off).copy())
            off += 8 * count
        indptr, indices, data = arrays
        blocks[entry["name"]] = sp.csr_matrix((data, indices, indptr), shape=(rows, mesh.n_nodes))
    return MultiscaleSpace(
        n_nodes=mesh.n_nodes,
        M=header["M"],
        n_neighborhoods=header["N_c"],
        offline_T=blocks["offline_T"],
        offline_p=blocks["offline_p"],
        pipe_T=blocks["pipe_T"],
        pipe_omegas=np.asarray(header["pipe_omegas"], dtype=np.int64),
    )
