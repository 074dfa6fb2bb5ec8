import numpy as np

from dnres_forge.checkpoint.common import (
    BLOB_DTYPES,
    HEADER_LEN,
    MAGIC,
    VERSION,
    Checkpoint,
    dump_header,
)


class CheckpointEncoder:
    def __init__(self, checkpoint: Checkpoint):
        self.checkpoint = checkpoint
        self.net = checkpoint.topology
        self.blob_dtype = BLOB_DTYPES[self.net.dtype]

    def _encode_header(self) -> bytes:
        header = {
            "dtype": self.net.dtype.value,
            "layers": [node.to_dict() for node in self.net.layers],
            "provenance": [
                [entry.stage, entry.action, entry.node, entry.replaced]
                for entry in self.net.provenance
            ],
            "params": [[name, list(shape)] for name, shape in self.net.param_specs()],
            "metadata": self.checkpoint.metadata,
        }
        encoded = dump_header(header)
        return HEADER_LEN.pack(len(encoded)) + encoded

    def _encode_params(self) -> bytes:
        return b"".join(
            np.ascontiguousarray(self.net.params[name], dtype=self.blob_dtype).tobytes()
            for name in self.net.param_names()
        )

    @property
    def result(self) -> bytes:
        return MAGIC + bytes([VERSION]) + self._encode_header() + self._encode_params()
