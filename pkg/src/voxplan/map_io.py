"""Flat binary serialization of value maps plus a debug slice dump.

Binary layout (little-endian):
    magic  b"VXMP"
    u32    format version (1)
    u32x3  dims (w, h, d)
    u8     kind tag
    u32    channels k
    f64x6  world_min, world_max
    f64    payload, row-major, w*h*d*k values
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .voxels import GridSpec, MapKind, ValueMap

_MAGIC = b"VXMP"
_VERSION = 1
_KIND_TAGS = {k: i for i, k in enumerate(MapKind)}
_TAG_KINDS = {i: k for k, i in _KIND_TAGS.items()}


def dump_map(vmap: ValueMap, path) -> None:
    path = Path(path)
    k = vmap.kind.channels
    header = struct.pack(
        "<4sI3IBI6d",
        _MAGIC,
        _VERSION,
        *vmap.spec.dims,
        _KIND_TAGS[vmap.kind],
        k,
        *vmap.spec.world_min,
        *vmap.spec.world_max,
    )
    payload = np.ascontiguousarray(vmap.data, dtype="<f8").tobytes()
    path.write_bytes(header + payload)


def load_map(path) -> ValueMap:
    raw = Path(path).read_bytes()
    head_size = struct.calcsize("<4sI3IBI6d")
    magic, version, w, h, d, tag, k, *bounds = struct.unpack("<4sI3IBI6d", raw[:head_size])
    if magic != _MAGIC or version != _VERSION:
        raise InvalidInputError("not a recognized value-map dump")
    kind = _TAG_KINDS[tag]
    if k != kind.channels:
        raise InvalidInputError(f"channel count {k} inconsistent with kind {kind.value}")
    spec = GridSpec(dims=(w, h, d), world_min=tuple(bounds[:3]), world_max=tuple(bounds[3:]))
    shape = (w, h, d) + ((4,) if kind is MapKind.ROTATION else ())
    data = np.frombuffer(raw[head_size:], dtype="<f8").reshape(shape).copy()
    return ValueMap(kind=kind, data=data, spec=spec)


def slice_text(vmap: ValueMap, z: int, fmt: str = "{:5.2f}") -> str:
    """Human-readable dump of one z-slice for debugging."""
    if vmap.kind is MapKind.ROTATION:
        plane = np.linalg.norm(vmap.data[:, :, z], axis=-1)
    else:
        plane = vmap.data[:, :, z]
    lines = [f"# {vmap.kind.value} z={z} dims={vmap.spec.dims}"]
    for row in plane:
        lines.append(" ".join(fmt.format(v) for v in row))
    return "\n".join(lines) + "\n"
