"""Data loading, normalization, checkpoints, and canonical report output.

Reports and sweep tables are written with sorted keys and repr-float
formatting so identical runs produce byte-identical files; wall-clock facts
are quarantined under a single "timing" key that comparisons can drop.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .numerics import RngStream

NORMALIZATIONS = ("none", "standardize", "unit_interval")


@dataclass(eq=False)
class Batch:
    x: np.ndarray                    # (n, m)
    labels: np.ndarray | None        # (n,) int64
    normalization: dict | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def m(self) -> int:
        return self.x.shape[1]

    def denormalize(self, vectors: np.ndarray) -> np.ndarray:
        """Map model-space vectors back to raw data space."""
        if self.normalization is None:
            return vectors
        scale = self.normalization["scale"]
        offset = self.normalization["offset"]
        return vectors * scale + offset


def normalize(x: np.ndarray, kind: str) -> tuple[np.ndarray, dict | None]:
    """Per-feature normalization; returns the transformed array and the
    parameters needed to invert it."""
    if kind == "none":
        return x, None
    if kind == "standardize":
        offset = x.mean(axis=0)
        scale = x.std(axis=0)
        scale = np.where(scale == 0, 1.0, scale)
    elif kind == "unit_interval":
        offset = x.min(axis=0)
        scale = x.max(axis=0) - offset
        scale = np.where(scale == 0, 1.0, scale)
    else:
        raise ValueError(f"unknown normalization {kind!r}; expected one of {NORMALIZATIONS}")
    offset = offset.astype(np.float64)
    scale = scale.astype(np.float64)
    out = ((x - offset) / scale).astype(x.dtype)
    return out, {"kind": kind, "offset": offset, "scale": scale}


def load_synthetic_gaussian(n: int, m: int, *, label_classes: int, stream: RngStream,
                            dtype=np.float32, normalization: str = "none") -> Batch:
    if n < 1 or m < 1:
        raise ValueError(f"need n, m >= 1, got n={n} m={m}")
    x = stream.derive(0).normal((n, m), dtype=dtype)
    labels = stream.derive(1).integers(n, low=0, high=label_classes)
    x, norm = normalize(x, normalization)
    return Batch(x=x, labels=labels, normalization=norm)


def load_csv(path: str, *, dtype=np.float32, normalization: str = "none",
             label_column: str = "label") -> Batch:
    """CSV with a header row; every column is a float feature except an
    optional integer label column."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        label_idx = header.index(label_column) if label_column in header else None
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            feats = []
            for col, cell in enumerate(row):
                if col == label_idx:
                    try:
                        labels.append(int(cell))
                    except ValueError:
                        raise ValueError(f"{path}:{lineno}: column {header[col]!r}: "
                                         f"bad label {cell!r}") from None
                else:
                    try:
                        feats.append(float(cell))
                    except ValueError:
                        raise ValueError(f"{path}:{lineno}: column {header[col]!r}: "
                                         f"bad float {cell!r}") from None
            rows.append(feats)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    x = np.asarray(rows, dtype=dtype)
    x, norm = normalize(x, normalization)
    lab = np.asarray(labels, dtype=np.int64) if label_idx is not None else None
    return Batch(x=x, labels=lab, normalization=norm)


def load_token_sequences(n_seq: int, seq_len: int, *, vocab: int, embed_dim: int,
                         label_classes: int, stream: RngStream, dtype=np.float32,
                         table: np.ndarray | None = None) -> Batch:
    """Random token ids embedded through a (given or generated) table; the
    model input is the per-sequence concatenation of embeddings."""
    if min(n_seq, seq_len, vocab, embed_dim) < 1:
        raise ValueError("n_seq, seq_len, vocab, embed_dim must all be >= 1")
    if table is None:
        table = stream.derive(0).normal((vocab, embed_dim), dtype=dtype)
    else:
        table = np.asarray(table, dtype=dtype)
        if table.shape != (vocab, embed_dim):
            raise ValueError(f"table shape {table.shape} != ({vocab}, {embed_dim})")
    ids = stream.derive(1).integers((n_seq, seq_len), low=0, high=vocab)
    x = table[ids].reshape(n_seq, seq_len * embed_dim)
    labels = stream.derive(2).integers(n_seq, low=0, high=label_classes)
    return Batch(x=np.ascontiguousarray(x), labels=labels,
                 meta={"ids": ids, "table": table, "seq_len": seq_len, "embed_dim": embed_dim})


# -- raw tensors and checkpoints ----------------------------------------------

def save_raw_tensor(x: np.ndarray, path: str) -> None:
    """Write a float tensor as <path>.json (shape/dtype header) + <path>.bin
    (C-order little-endian payload)."""
    x = np.ascontiguousarray(x)
    header = {"shape": list(x.shape), "dtype": x.dtype.name, "order": "C", "endian": "little"}
    with open(path + ".json", "w") as fh:
        fh.write(canonical_json(header))
    x.astype(x.dtype.newbyteorder("<")).tofile(path + ".bin")


def load_raw_tensor(path: str) -> np.ndarray:
    with open(path + ".json") as fh:
        header = json.load(fh)
    for key in ("shape", "dtype"):
        if key not in header:
            raise ValueError(f"{path}.json: missing {key!r}")
    dtype = np.dtype(header["dtype"]).newbyteorder("<")
    data = np.fromfile(path + ".bin", dtype=dtype)
    expected = int(np.prod(header["shape"]))
    if data.size != expected:
        raise ValueError(f"{path}.bin: holds {data.size} values, header says {expected}")
    return data.reshape(header["shape"]).astype(np.dtype(header["dtype"]))


def load_raw_tensor_batch(path: str, *, normalization: str = "none") -> Batch:
    x = load_raw_tensor(path)
    if x.ndim != 2:
        raise ValueError(f"{path}: expected a 2-d batch, got shape {x.shape}")
    x, norm = normalize(x, normalization)
    return Batch(x=x, labels=None, normalization=norm)


def save_checkpoint(params: dict, path: str) -> None:
    """Flat parameter dict -> sidecar JSON header + single .bin payload."""
    names = sorted(params)
    header = {"format": "checkpoint-v1", "endian": "little", "tensors": []}
    offset = 0  # byte offset into the .bin payload
    for name in names:
        arr = np.ascontiguousarray(params[name])
        header["tensors"].append({"name": name, "shape": list(arr.shape),
                                  "dtype": arr.dtype.name, "offset": offset})
        offset += arr.size * arr.dtype.itemsize
    with open(path + ".json", "w") as fh:
        fh.write(canonical_json(header))
    with open(path + ".bin", "wb") as fh:
        for name in names:
            arr = np.ascontiguousarray(params[name])
            fh.write(arr.astype(arr.dtype.newbyteorder("<")).tobytes())


def load_checkpoint(path: str) -> dict:
    with open(path + ".json") as fh:
        header = json.load(fh)
    if header.get("format") != "checkpoint-v1":
        raise ValueError(f"{path}.json: not a checkpoint header")
    out = {}
    with open(path + ".bin", "rb") as fh:
        payload = fh.read()
    for entry in header["tensors"]:
        dtype = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"]))
        seg = np.frombuffer(payload, dtype=dtype.newbyteorder("<"),
                            count=count, offset=entry["offset"])
        out[entry["name"]] = seg.astype(dtype).reshape(entry["shape"])
    return out


# -- canonical serialization ---------------------------------------------------

def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays so json sees plain Python."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def canonical_json(obj) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2) + "\n"


def write_report(report: dict, path: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        fh.write(canonical_json(report))


def write_csv(path: str, header: list, rows: list) -> None:
    """CSV with repr-formatted floats (deterministic, round-trippable)."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    def fmt(v):
        if isinstance(v, (float, np.floating)):
            return repr(float(v))
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        return str(v)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
