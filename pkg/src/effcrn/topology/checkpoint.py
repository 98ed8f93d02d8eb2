"""Binary checkpoints and human-readable spec documents.

Checkpoint layout::

    b"EFFCRNCK"  | uint32 LE format version | uint64 LE header length
    UTF-8 JSON header                       | little-endian parameter blob

The header carries the ``ModelSpec``, its hash, the parameter table (name, shape,
offset) and a SHA-256 of the blob.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from ..exceptions import LoadError
from .accounting import count_flops_per_frame
from .layers import describe_layers, weighted_depth
from .model import EnhancementModel
from .spec import ModelSpec

MAGIC = b"EFFCRNCK"
FORMAT_VERSION = 1
_PREAMBLE = struct.Struct("<8sIQ")


def _blob(model: EnhancementModel) -> tuple[bytes, list[dict], str]:
    dtype = np.dtype(model.dtype).newbyteorder("<")
    table, chunks, offset = [], [], 0
    for name, p in model.params.items():
        raw = np.ascontiguousarray(p.data, dtype=dtype).tobytes()
        table.append({"name": name, "shape": list(p.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    return b"".join(chunks), table, dtype.str


def save_checkpoint(model: EnhancementModel, path, extra: dict | None = None) -> Path:
    blob, table, dtype = _blob(model)
    header = {
        "format_version": FORMAT_VERSION,
        "spec": model.spec.to_dict(),
        "spec_hash": model.spec.hash(),
        "dtype": dtype,
        "params": table,
        "blob_bytes": len(blob),
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
        "extra": extra or {},
    }
    head = json.dumps(header, sort_keys=True).encode()
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_PREAMBLE.pack(MAGIC, FORMAT_VERSION, len(head)))
        fh.write(head)
        fh.write(blob)
    tmp.replace(path)
    return path


def read_header(path) -> tuple[dict, bytes]:
    """Validate framing and checksum; returns ``(header, blob)``."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise LoadError(f"{path}: cannot read checkpoint ({exc})") from exc
    if len(raw) < _PREAMBLE.size:
        raise LoadError(f"{path}: truncated checkpoint")
    magic, version, head_len = _PREAMBLE.unpack_from(raw)
    if magic != MAGIC:
        raise LoadError(f"{path}: not a checkpoint file")
    if version != FORMAT_VERSION:
        raise LoadError(f"{path}: format version {version}, this build reads {FORMAT_VERSION}")
    body = raw[_PREAMBLE.size :]
    if len(body) < head_len:
        raise LoadError(f"{path}: truncated header")
    try:
        header = json.loads(body[:head_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise LoadError(f"{path}: corrupt header ({exc})") from exc
    blob = body[head_len:]
    if len(blob) != header.get("blob_bytes"):
        raise LoadError(f"{path}: parameter blob has {len(blob)} bytes, "
                        f"expected {header.get('blob_bytes')} (truncated?)")
    if hashlib.sha256(blob).hexdigest() != header.get("blob_sha256"):
        raise LoadError(f"{path}: checksum mismatch, file is corrupt")
    return header, blob


def load_checkpoint(path, expect_spec_hash: str | None = None) -> EnhancementModel:
    """Rebuild the model stored at ``path``; nothing is returned on any error."""
    header, blob = read_header(path)
    try:
        spec = ModelSpec.from_dict(header["spec"])
        dtype = np.dtype(header["dtype"])
        if spec.hash() != header["spec_hash"]:
            raise LoadError(f"{path}: spec hash does not match its spec")
        if expect_spec_hash is not None and spec.hash() != expect_spec_hash:
            raise LoadError(f"{path}: spec hash {spec.hash()} differs from "
                            f"expected {expect_spec_hash}")
        model = EnhancementModel(spec, dtype=dtype.newbyteorder("="))
        state = {}
        for entry in header["params"]:
            count = int(np.prod(entry["shape"], dtype=np.int64))
            arr = np.frombuffer(blob, dtype=dtype, count=count, offset=entry["offset"])
            state[entry["name"]] = arr.reshape(entry["shape"]).astype(model.dtype)
        model.load_state_dict(state)
    except LoadError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise LoadError(f"{path}: inconsistent checkpoint ({exc})") from exc
    return model


def checkpoint_extra(path) -> dict:
    return read_header(path)[0].get("extra", {})


def spec_document(spec: ModelSpec) -> dict:
    """JSON-compatible description: variant, hyperparameters and layer table."""
    layers = describe_layers(spec)
    return {
        "variant": spec.name,
        "spec_hash": spec.hash(),
        "hyperparameters": spec.to_dict(),
        "depth": weighted_depth(layers),
        "params": sum(layer.params for layer in layers),
        "flops_per_frame": count_flops_per_frame(spec),
        "layers": [layer.to_dict() for layer in layers],
    }


def write_spec(spec: ModelSpec, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(spec_document(spec), indent=2) + "\n")
    return path


def read_spec(path) -> ModelSpec:
    try:
        doc = json.loads(Path(path).read_text())
        return ModelSpec.from_dict(doc["hyperparameters"])
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise LoadError(f"{path}: not a spec document ({exc})") from exc
