"""UDAW binary containers: feature files and network checkpoints.

Both share the magic string "UDAW" and a little-endian u32 format version
that selects the record layout:

version 1 — feature file:
    magic "UDAW" | u32 version=1 | u32 rank | u32 dim * rank |
    row-major float32 little-endian payload

version 2 — network checkpoint:
    magic "UDAW" | u32 version=2 | u32 meta_len | meta JSON (UTF-8; network
    kind, architecture spec, extra metadata) | u32 n_entries | per entry:
    u16 name_len | name UTF-8 | u8 trainable | u32 rank | u32 dim * rank |
    row-major float32 little-endian payload

Values are stored as float32 regardless of the in-memory dtype.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataError
from .nets import ClassifierSpec, ConvLayerSpec, CriticSpec, FeatureExtractorSpec, Network
from .types import ParameterSet

MAGIC = b"UDAW"
FEATURE_VERSION = 1
CHECKPOINT_VERSION = 2


def _read_exact(fh, n, path):
    buf = fh.read(n)
    if len(buf) != n:
        raise DataError(f"{path}: truncated UDAW file")
    return buf


def _read_header(fh, path, expected_version):
    magic = fh.read(4)
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic bytes (not a UDAW file)")
    (version,) = struct.unpack("<I", _read_exact(fh, 4, path))
    if version != expected_version:
        raise DataError(f"{path}: UDAW version {version}, expected {expected_version}")


# ---------------------------------------------------------------------------
# feature files


def write_feature_file(path, array) -> None:
    """Write one feature array (any rank) as a version-1 UDAW file."""
    arr = np.asarray(array, dtype=np.float32)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FEATURE_VERSION))
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.astype("<f4").tobytes(order="C"))


def read_feature_array(path) -> np.ndarray:
    """Read a version-1 UDAW feature file back as float64."""
    with open(path, "rb") as fh:
        _read_header(fh, path, FEATURE_VERSION)
        (rank,) = struct.unpack("<I", _read_exact(fh, 4, path))
        if rank == 0 or rank > 8:
            raise DataError(f"{path}: implausible rank {rank}")
        dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, path))
        count = int(np.prod(dims))
        payload = _read_exact(fh, 4 * count, path)
        if fh.read(1):
            raise DataError(f"{path}: trailing bytes after payload")
    return np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float64)


# ---------------------------------------------------------------------------
# network checkpoints


def _spec_to_dict(net: Network) -> dict:
    spec = net.spec
    if net.kind == "extractor":
        return {
            "in_channels": spec.in_channels,
            "layers": [
                {
                    "kernel": l.kernel,
                    "out_channels": l.out_channels,
                    "stride": list(l.stride),
                    "batch_norm": l.batch_norm,
                    "pool": None if l.pool is None else [l.pool[0], list(l.pool[1])],
                }
                for l in spec.layers
            ],
        }
    return {"layer_widths": list(spec.layer_widths)}


def _spec_from_dict(kind: str, d: dict):
    if kind == "extractor":
        layers = tuple(
            ConvLayerSpec(
                kernel=l["kernel"],
                out_channels=l["out_channels"],
                stride=tuple(l["stride"]),
                batch_norm=l["batch_norm"],
                pool=None if l["pool"] is None else (l["pool"][0], tuple(l["pool"][1])),
            )
            for l in d["layers"]
        )
        return FeatureExtractorSpec(layers=layers, in_channels=d["in_channels"])
    if kind == "classifier":
        return ClassifierSpec(tuple(d["layer_widths"]))
    if kind == "critic":
        return CriticSpec(tuple(d["layer_widths"]))
    raise DataError(f"unknown network kind {kind!r}")


def save_network(net: Network, path) -> None:
    meta = {"kind": net.kind, "spec": _spec_to_dict(net), "meta": net.meta}
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(net.params)))
        for name, p in net.params.items():
            nb = name.encode("utf-8")
            arr = p.data.astype("<f4")
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<B", 1 if p.trainable else 0))
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes(order="C"))


def load_network(path) -> Network:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: checkpoint not found")
    with open(path, "rb") as fh:
        _read_header(fh, path, CHECKPOINT_VERSION)
        (meta_len,) = struct.unpack("<I", _read_exact(fh, 4, path))
        try:
            meta = json.loads(_read_exact(fh, meta_len, path).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DataError(f"{path}: corrupt checkpoint metadata ({exc})") from exc
        kind = meta["kind"]
        spec = _spec_from_dict(kind, meta["spec"])
        (n_entries,) = struct.unpack("<I", _read_exact(fh, 4, path))
        params = ParameterSet()
        for _ in range(n_entries):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2, path))
            name = _read_exact(fh, name_len, path).decode("utf-8")
            (trainable,) = struct.unpack("<B", _read_exact(fh, 1, path))
            (rank,) = struct.unpack("<I", _read_exact(fh, 4, path))
            dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, path)) if rank else ()
            count = int(np.prod(dims)) if dims else 1
            payload = _read_exact(fh, 4 * count, path)
            arr = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float64)
            params.add(name, arr, trainable=bool(trainable))
        if fh.read(1):
            raise DataError(f"{path}: trailing bytes after last entry")
    return Network(kind, spec, params, meta.get("meta", {}))
