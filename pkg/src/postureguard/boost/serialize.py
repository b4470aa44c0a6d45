"""Binary model file.

Layout (all integers little-endian)::

    magic          8 bytes  b"PGBOOST\\n"
    header_len     uint64
    header         UTF-8 JSON, keys sorted, no whitespace
    payload        raw arrays, back to back, in the order listed in header["arrays"]
    checksum       8 bytes  blake2b (digest_size=8) over everything before it

The header carries ``format_version``, ``layout_hash``, ``tau``,
``n_classes``, ``n_rounds``, ``n_features``, ``classes``, ``params`` and an
``arrays`` manifest of ``[name, dtype, shape]`` triples. Tree arrays hold the
trees in round-major, class-minor order; ``tree_internal`` and
``tree_leaves`` give the per-tree sizes and node records are concatenated in
each tree's preorder. An optional ``ood`` header entry plus ``ood.*`` arrays
carry the attached out-of-distribution detector.

Floats are written as raw IEEE-754 doubles, so a load reproduces the saved
model bit for bit.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct

import numpy as np

from ..core import PostureGuardError
from .model import BoostParams, GbdtModel
from .tree import Tree

MAGIC = b"PGBOOST\n"
FORMAT_VERSION = 1
CHECKSUM_SIZE = 8


class ModelFileError(PostureGuardError):
    pass


class VersionMismatch(ModelFileError):
    pass


class CorruptModel(ModelFileError):
    pass


def checksum(data: bytes) -> str:
    return hashlib.blake2b(data, digest_size=CHECKSUM_SIZE).hexdigest()


def _tree_arrays(model: GbdtModel) -> dict:
    ts = model.flat_trees()

    def cat(name, dtype):
        parts = [getattr(t, name) for t in ts]
        return np.concatenate(parts).astype(dtype) if parts else np.zeros(0, dtype)

    edges = model.bin_edges
    return {
        "base_score": model.base_score.astype("<f8"),
        "bin_edge_counts": np.array([e.size for e in edges], dtype="<i8"),
        "bin_edges": np.concatenate(edges).astype("<f8") if edges else np.zeros(0, "<f8"),
        "tree_internal": np.array([t.n_internal for t in ts], dtype="<i4"),
        "tree_leaves": np.array([t.n_leaves for t in ts], dtype="<i4"),
        "node_feature": cat("feature", "<i4"),
        "node_threshold": cat("threshold", "<f8"),
        "node_threshold_bin": cat("threshold_bin", "<i4"),
        "node_left": cat("left", "<i4"),
        "node_right": cat("right", "<i4"),
        "leaf_value": cat("leaf_value", "<f8"),
    }


def to_bytes(model: GbdtModel, include_ood: bool = True) -> bytes:
    arrays = _tree_arrays(model)
    header = {
        "format_version": FORMAT_VERSION,
        "layout_hash": model.layout_hash,
        "tau": model.tau,
        "n_classes": model.n_classes,
        "n_rounds": model.n_rounds,
        "n_features": model.n_features,
        "classes": [int(c) for c in model.classes],
        "params": {k: v for k, v in vars(model.params).items()},
    }
    if include_ood and model.ood is not None:
        meta, ood_arrays = model.ood.to_sections()
        header["ood"] = meta
        arrays.update({f"ood.{k}": v for k, v in ood_arrays.items()})
    header["arrays"] = [[name, a.dtype.str, list(a.shape)] for name, a in arrays.items()]
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = b"".join([MAGIC, struct.pack("<Q", len(head)), head]
                    + [np.ascontiguousarray(a).tobytes() for a in arrays.values()])
    return body + bytes.fromhex(checksum(body))


def fingerprint(model: GbdtModel) -> str:
    """Checksum of the model's file image without any detector section."""
    return checksum(to_bytes(model, include_ood=False))


def save_model(model: GbdtModel, path) -> str:
    """Write ``model`` atomically; returns the file checksum (hex)."""
    data = to_bytes(model)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)
    return data[-CHECKSUM_SIZE:].hex()


def from_bytes(data: bytes) -> GbdtModel:
    if len(data) < len(MAGIC) + 8 + CHECKSUM_SIZE or not data.startswith(MAGIC):
        raise CorruptModel("not a model file (bad magic or too short)")
    body, tail = data[:-CHECKSUM_SIZE], data[-CHECKSUM_SIZE:]
    if checksum(body) != tail.hex():
        raise CorruptModel("checksum mismatch; the model file is truncated or damaged")
    (head_len,) = struct.unpack_from("<Q", body, len(MAGIC))
    start = len(MAGIC) + 8
    try:
        header = json.loads(body[start:start + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptModel(f"unreadable header: {exc}") from exc
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"model format version {version}, this build reads {FORMAT_VERSION}")

    arrays, offset = {}, start + head_len
    for name, dtype, shape in header["arrays"]:
        dt = np.dtype(dtype)
        count = int(np.prod(shape)) if shape else 1
        end = offset + count * dt.itemsize
        if end > len(body):
            raise CorruptModel(f"array {name} runs past the end of the file")
        arrays[name] = np.frombuffer(body[offset:end], dtype=dt).reshape(shape).copy()
        offset = end
    if offset != len(body):
        raise CorruptModel("trailing bytes after the last array")

    edges, pos = [], 0
    for n in arrays["bin_edge_counts"]:
        edges.append(arrays["bin_edges"][pos:pos + n].astype(float))
        pos += int(n)

    n_classes = header["n_classes"]
    node, leaf = 0, 0
    flat = []
    for ni, nl in zip(arrays["tree_internal"], arrays["tree_leaves"]):
        ni, nl = int(ni), int(nl)
        flat.append(Tree(
            arrays["node_feature"][node:node + ni].astype(np.int32),
            arrays["node_threshold"][node:node + ni].astype(float),
            arrays["node_threshold_bin"][node:node + ni].astype(np.int32),
            arrays["node_left"][node:node + ni].astype(np.int32),
            arrays["node_right"][node:node + ni].astype(np.int32),
            arrays["leaf_value"][leaf:leaf + nl].astype(float)))
        node += ni
        leaf += nl
    if len(flat) != header["n_rounds"] * n_classes:
        raise CorruptModel("tree count does not match the header")
    trees = [flat[m * n_classes:(m + 1) * n_classes] for m in range(header["n_rounds"])]

    model = GbdtModel(header["classes"], arrays["base_score"].astype(float), trees,
                      BoostParams.from_dict(header["params"]), header["n_features"], edges,
                      header["layout_hash"], header["tau"])
    if "ood" in header:
        from ..ood import OodDetector

        ood_arrays = {k[4:]: v for k, v in arrays.items() if k.startswith("ood.")}
        model.ood = OodDetector.from_sections(header["ood"], ood_arrays)
    return model


def load_model(path) -> GbdtModel:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
