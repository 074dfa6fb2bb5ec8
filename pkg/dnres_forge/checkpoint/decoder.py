import json
from typing import Dict, List, Tuple

import numpy as np

from dnres_forge.checkpoint.common import (
    BLOB_DTYPES,
    HEADER_LEN,
    MAGIC,
    VERSION,
    Checkpoint,
)
from dnres_forge.errors import CheckpointError
from dnres_forge.net.topology import LayerNode, NetworkTopology, ProvenanceEntry
from dnres_forge.nn.tensor import DType


def _check_shape(name: str, shape: Tuple) -> None:
    for dim in shape:
        if isinstance(dim, bool) or not isinstance(dim, int) or dim < 0:
            raise CheckpointError(f"Invalid shape {list(shape)} for {name}")


class CheckpointDecoder:
    def __init__(self, data: bytes):
        self.data = data  # contents of the checkpoint file
        self.index = 0  # current position in data

    def _read(self, n: int) -> bytes:
        if self.index + n > len(self.data):
            raise CheckpointError(
                f"Truncated checkpoint: needed {n} bytes at offset {self.index}, "
                f"only {len(self.data) - self.index} left"
            )
        chunk = self.data[self.index : self.index + n]
        self.index += n
        return chunk

    def _read_preamble(self):
        magic = self._read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"Not a dnres checkpoint (magic {magic!r})")
        (version,) = self._read(1)
        if version != VERSION:
            raise CheckpointError(
                f"Unsupported checkpoint version {version}, expected {VERSION}"
            )

    def _read_header(self) -> dict:
        (length,) = HEADER_LEN.unpack(self._read(HEADER_LEN.size))
        try:
            return json.loads(self._read(length).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointError("Corrupt checkpoint header") from e

    def _read_params(
        self, specs: List[Tuple[str, Tuple[int, ...]]], dtype: DType
    ) -> Dict[str, np.ndarray]:
        blob_dtype = np.dtype(BLOB_DTYPES[dtype])
        params = {}
        for name, shape in specs:
            count = int(np.prod(shape))
            raw = self._read(count * blob_dtype.itemsize)
            params[name] = (
                np.frombuffer(raw, dtype=blob_dtype).astype(dtype.numpy).reshape(shape)
            )
        return params

    @property
    def result(self) -> Checkpoint:
        self.index = 0
        self._read_preamble()
        header = self._read_header()

        try:
            dtype = DType(header["dtype"])
            layers = tuple(LayerNode.from_dict(d) for d in header["layers"])
            provenance = tuple(ProvenanceEntry(*entry) for entry in header["provenance"])
            declared = [(name, tuple(shape)) for name, shape in header["params"]]
            metadata = header["metadata"]
        except (KeyError, TypeError, ValueError) as e:
            raise CheckpointError(f"Malformed checkpoint header: {e}") from e

        for name, shape in declared:
            _check_shape(name, shape)
        expected = [spec for node in layers for spec in node.param_specs()]
        if declared != expected:
            raise CheckpointError("Parameter table does not match the topology")

        params = self._read_params(expected, dtype)
        if self.index != len(self.data):
            raise CheckpointError(
                f"{len(self.data) - self.index} trailing bytes after the last parameter"
            )
        return Checkpoint(NetworkTopology(layers, params, provenance), metadata)
