"""Network checkpoint files.

Layout (integers little-endian)::

    0       8   magic b"CVPRCKPT"
    8       4   uint32 format version (1)
    12      8   uint64 manifest length M
    20      M   UTF-8 JSON manifest: spec, dtype "<f4", tensors [{name, shape,
                offset, nbytes}] with offsets relative to the blob start
    20+M    ..  float32 blob

Parameters are stored as float32; a float64 network is rounded on save.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .network import Network, NetworkSpec, SpecError

CKPT_MAGIC = b"CVPRCKPT"
CKPT_VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, net: Network) -> None:
    tensors = []
    blobs = []
    offset = 0
    for name in net.spec.param_shapes():
        arr = np.ascontiguousarray(net.params[name], dtype="<f4")
        b = arr.tobytes()
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(b)})
        blobs.append(b)
        offset += len(b)
    manifest = {"spec": net.spec.to_dict(), "dtype": "<f4", "tensors": tensors}
    mbytes = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(CKPT_MAGIC, CKPT_VERSION, len(mbytes)))
        fh.write(mbytes)
        for b in blobs:
            fh.write(b)


def _layer_of(name: str) -> str:
    return name.split(".")[0]


def load_checkpoint(path, spec: NetworkSpec | None = None) -> Network:
    """Load a network; if ``spec`` is given it must match the stored one.

    Mismatches name the first offending layer.
    """
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX.size:
        raise CheckpointError("file too short for checkpoint header")
    magic, version, mlen = _PREFIX.unpack_from(raw)
    if magic != CKPT_MAGIC:
        raise CheckpointError(f"bad magic bytes {magic!r}")
    if version != CKPT_VERSION:
        raise CheckpointError(f"checkpoint version {version}, expected {CKPT_VERSION}")
    start = _PREFIX.size
    try:
        manifest = json.loads(raw[start : start + mlen].decode("utf-8"))
        stored = NetworkSpec.from_dict(manifest["spec"])
        tensors = manifest["tensors"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, SpecError) as exc:
        raise CheckpointError(f"unreadable manifest: {exc}") from exc
    if manifest.get("dtype") != "<f4":
        raise CheckpointError(f"unsupported tensor dtype {manifest.get('dtype')!r}")

    expected = stored.param_shapes()
    if spec is not None:
        declared = spec.param_shapes()
        for name in declared:
            if name not in expected or tuple(expected[name]) != tuple(declared[name]):
                got = expected.get(name)
                raise CheckpointError(
                    f"layer {_layer_of(name)}: checkpoint has {name} shape {got}, declared spec requires {declared[name]}"
                )
        extra = set(expected) - set(declared)
        if extra:
            raise CheckpointError(f"layer {_layer_of(sorted(extra)[0])}: not present in declared spec")
        if spec != stored:
            raise CheckpointError("declared spec differs from stored spec (geometry or pooling)")

    blob = raw[start + mlen :]
    params = {}
    by_name = {t["name"]: t for t in tensors}
    for name, shape in expected.items():
        t = by_name.get(name)
        if t is None:
            raise CheckpointError(f"layer {_layer_of(name)}: tensor {name} missing")
        if tuple(t["shape"]) != tuple(shape):
            raise CheckpointError(f"layer {_layer_of(name)}: tensor {name} shape {t['shape']} != spec {list(shape)}")
        n = int(np.prod(shape)) * 4
        off = int(t["offset"])
        if int(t["nbytes"]) != n or off < 0 or off + n > len(blob):
            raise CheckpointError(f"layer {_layer_of(name)}: tensor {name} length does not match its shape")
        params[name] = np.frombuffer(blob, dtype="<f4", count=n // 4, offset=off).reshape(shape).astype(np.float32)
    try:
        return Network(stored, params)
    except SpecError as exc:
        raise CheckpointError(str(exc)) from exc
