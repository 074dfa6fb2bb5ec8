"""Checkpoint file layout.

    magic        8 bytes  b"DNRESCKP"
    version      1 byte
    header_len   uint32, little-endian
    header       header_len bytes of UTF-8 JSON (sorted keys, compact separators)
    blobs        every parameter as raw little-endian floats, in declaration order
"""
import json
import struct
from dataclasses import dataclass, field
from typing import Any, Dict

from dnres_forge.net.topology import NetworkTopology
from dnres_forge.nn.tensor import DType

MAGIC = b"DNRESCKP"
VERSION = 1
HEADER_LEN = struct.Struct("<I")
BLOB_DTYPES = {DType.F32: "<f4", DType.F64: "<f8"}


@dataclass
class Checkpoint:
    topology: NetworkTopology
    # Training metadata: stage history, optimizer kind, seed, ...
    metadata: Dict[str, Any] = field(default_factory=dict)


def dump_header(header: dict) -> bytes:
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
