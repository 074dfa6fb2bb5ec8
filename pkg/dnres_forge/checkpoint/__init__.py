import logging
from pathlib import Path
from typing import Any, Dict, Optional

from dnres_forge.checkpoint.common import Checkpoint
from dnres_forge.checkpoint.decoder import CheckpointDecoder
from dnres_forge.checkpoint.encoder import CheckpointEncoder
from dnres_forge.net.topology import NetworkTopology

logger = logging.getLogger(__name__)


def save_checkpoint(
    net: NetworkTopology, path: Path, metadata: Optional[Dict[str, Any]] = None
):
    encoded = CheckpointEncoder(Checkpoint(net, metadata or {})).result
    with open(path, "wb") as file:
        file.write(encoded)
    logger.info(f"Wrote file: {path}")


def read_checkpoint(path: Path) -> Checkpoint:
    with open(path, "rb") as file:
        data = file.read()
    return CheckpointDecoder(data).result


def load_checkpoint(path: Path) -> NetworkTopology:
    return read_checkpoint(path).topology
