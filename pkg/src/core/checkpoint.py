"""
Versioned checkpoint container.

Layout (big-endian)::

    magic      4 bytes   b"S2RC"
    version    1 byte
    meta_len   8 bytes   length of the JSON metadata block
    meta       meta_len  UTF-8 JSON: step, config, config hash, loss log
    data_len   8 bytes   length of the parameter payload
    data       data_len  torch-serialized {"refiner": state_dict, "disc": state_dict}
    digest     32 bytes  SHA-256 over meta + data
"""
import hashlib
import io
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import torch

from .errors import CheckpointFormatError
from .types import StepLog

logger = logging.getLogger(__name__)

MAGIC = b"S2RC"
FORMAT_VERSION = 1
_LENGTH = struct.Struct(">Q")
_DIGEST_SIZE = 32


@dataclass
class Checkpoint:
    """Refiner and discriminator parameters plus the training record."""
    refiner_params: Dict[str, torch.Tensor]
    disc_params: Dict[str, torch.Tensor]
    step: int
    loss_log: List[StepLog] = field(default_factory=list)
    config: Dict[str, Any] = field(default_factory=dict)
    config_hash: str = ""

    def metadata(self) -> Dict[str, Any]:
        return {
            "step": self.step,
            "config": self.config,
            "config_hash": self.config_hash,
            "loss_log": [entry.to_dict() for entry in self.loss_log],
        }


def _clone_state(state: Dict[str, torch.Tensor]) -> Dict[str, torch.Tensor]:
    return {name: tensor.detach().cpu().clone() for name, tensor in state.items()}


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    """Serialize a checkpoint to bytes."""
    meta = json.dumps(ckpt.metadata(), sort_keys=True).encode("utf-8")
    buffer = io.BytesIO()
    torch.save({"refiner": _clone_state(ckpt.refiner_params),
                "disc": _clone_state(ckpt.disc_params)}, buffer)
    data = buffer.getvalue()
    digest = hashlib.sha256(meta + data).digest()
    return b"".join([
        MAGIC,
        bytes([FORMAT_VERSION]),
        _LENGTH.pack(len(meta)), meta,
        _LENGTH.pack(len(data)), data,
        digest,
    ])


def decode_checkpoint(blob: bytes, source: str = "<bytes>") -> Checkpoint:
    """
    Parse checkpoint bytes.

    Args:
        blob: Raw file contents
        source: Name used in error messages

    Raises:
        CheckpointFormatError: on bad magic, version mismatch, truncation or digest mismatch
    """
    header = len(MAGIC) + 1
    if len(blob) < header or blob[:len(MAGIC)] != MAGIC:
        raise CheckpointFormatError(f"{source}: not a checkpoint file")
    version = blob[len(MAGIC)]
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(
            f"{source}: unsupported checkpoint version {version} (expected {FORMAT_VERSION})"
        )

    offset = header
    sections = []
    for name in ("metadata", "parameter"):
        if offset + _LENGTH.size > len(blob):
            raise CheckpointFormatError(f"{source}: truncated before {name} length")
        (length,) = _LENGTH.unpack_from(blob, offset)
        offset += _LENGTH.size
        if offset + length > len(blob):
            raise CheckpointFormatError(f"{source}: truncated {name} block")
        sections.append(blob[offset:offset + length])
        offset += length
    if offset + _DIGEST_SIZE != len(blob):
        raise CheckpointFormatError(f"{source}: truncated or trailing data after payload")
    meta_bytes, data = sections
    if hashlib.sha256(meta_bytes + data).digest() != blob[offset:]:
        raise CheckpointFormatError(f"{source}: checksum mismatch")

    meta = json.loads(meta_bytes.decode("utf-8"))
    params = torch.load(io.BytesIO(data), map_location="cpu", weights_only=True)
    return Checkpoint(
        refiner_params=params["refiner"],
        disc_params=params["disc"],
        step=int(meta["step"]),
        loss_log=[StepLog.from_dict(entry) for entry in meta["loss_log"]],
        config=meta.get("config", {}),
        config_hash=meta.get("config_hash", ""),
    )


def save_checkpoint(ckpt: Checkpoint, path: Union[str, Path]) -> Path:
    """
    Write a checkpoint atomically (temporary file, then rename).

    Args:
        ckpt: Checkpoint to save
        path: Destination file

    Returns:
        The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_checkpoint(ckpt))
    tmp.replace(path)
    logger.info("Saved checkpoint at step %d to %s", ckpt.step, path)
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """
    Read a checkpoint written by ``save_checkpoint``.

    Raises:
        FileNotFoundError: if the file does not exist
        CheckpointFormatError: if the file is corrupt or of another version
    """
    path = Path(path)
    return decode_checkpoint(path.read_bytes(), source=str(path))


def checkpoint_path(directory: Union[str, Path], step: int) -> Path:
    """Conventional checkpoint filename for a step."""
    return Path(directory) / f"ckpt_{step}.bin"


def find_checkpoints(directory: Union[str, Path]) -> Dict[int, Path]:
    """Map step -> path for every ``ckpt_<step>.bin`` in a directory."""
    found = {}
    for candidate in Path(directory).glob("ckpt_*.bin"):
        suffix = candidate.stem[len("ckpt_"):]
        if suffix.isdigit():
            found[int(suffix)] = candidate
    return dict(sorted(found.items()))


def nearest_checkpoint(directory: Union[str, Path], step: int) -> Optional[Path]:
    """The checkpoint with the largest step not exceeding ``step``."""
    eligible = [(s, p) for s, p in find_checkpoints(directory).items() if s <= step]
    return eligible[-1][1] if eligible else None
