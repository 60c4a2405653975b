"""On-disk artifacts: CKP1 checkpoints, run manifests and partial-output cleanup

CKP1 layout (little-endian)::

    b"CKP1" | u32 header_length | header_length bytes of UTF-8 JSON
    | float64 tensors in the order listed by header["tensors"]

The JSON header is written with sorted keys so identical checkpoints are
byte-identical.
"""

import json
import struct
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Union

import numpy as np

from app.core.errors import CheckpointFormatError, FormatIssue
from app.models.schemas import RunManifest
from app.utils.logger import get_logger

logger = get_logger(__name__)

MAGIC = b"CKP1"
FORMAT_VERSION = 1
LENGTH = struct.Struct("<I")

PathLike = Union[str, Path]


@dataclass
class Checkpoint:
    """Named float64 tensors plus a JSON-serializable header

    ``kind`` tells the generative model ("vae") from the compression harness
    ("compressor"); ``config`` is the dumped pydantic config of the model.
    """
    kind: str
    config: Dict[str, Any]
    tensors: Dict[str, np.ndarray]
    history: List[float] = field(default_factory=list)
    scale: float = 1.0
    extra: Dict[str, Any] = field(default_factory=dict)

    def header(self) -> Dict[str, Any]:
        return {
            "format_version": FORMAT_VERSION,
            "kind": self.kind,
            "config": self.config,
            "tensors": [[name, list(values.shape)] for name, values in self.tensors.items()],
            "history": [float(v) for v in self.history],
            "scale": float(self.scale),
            "extra": self.extra,
        }


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    header = json.dumps(ckpt.header(), sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob = b"".join(np.ascontiguousarray(t, dtype="<f8").tobytes() for t in ckpt.tensors.values())
    return MAGIC + LENGTH.pack(len(header)) + header + blob


def write_checkpoint(ckpt: Checkpoint, path: PathLike) -> Path:
    path = Path(path)
    path.write_bytes(encode_checkpoint(ckpt))
    logger.info(f"Wrote {ckpt.kind} checkpoint ({len(ckpt.tensors)} tensors) to {path}")
    return path


def read_checkpoint(path: PathLike, kind: Optional[str] = None) -> Checkpoint:
    """Parse a CKP1 file; ``kind`` rejects checkpoints of another model family"""
    path = Path(path)
    data = path.read_bytes()
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointFormatError(FormatIssue.BAD_MAGIC, path)
    start = len(MAGIC) + LENGTH.size
    if len(data) < start:
        raise CheckpointFormatError(FormatIssue.TRUNCATED_HEADER, path)
    (header_length,) = LENGTH.unpack_from(data, len(MAGIC))
    if len(data) < start + header_length:
        raise CheckpointFormatError(FormatIssue.TRUNCATED_HEADER, path, f"{len(data) - start} of {header_length} bytes")

    try:
        header = json.loads(data[start:start + header_length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointFormatError(FormatIssue.TRUNCATED_HEADER, path, f"unreadable header: {e}") from e

    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(FormatIssue.UNSUPPORTED_VERSION, path, f"version {version}")
    if kind is not None and header.get("kind") != kind:
        raise CheckpointFormatError(
            FormatIssue.SHAPE_MISMATCH, path, f"expected a {kind} checkpoint, found {header.get('kind')}"
        )

    tensors: Dict[str, np.ndarray] = {}
    offset = start + header_length
    for name, shape in header["tensors"]:
        nbytes = int(np.prod(shape, dtype=np.int64)) * 8
        if offset + nbytes > len(data):
            raise CheckpointFormatError(FormatIssue.TRUNCATED_PAYLOAD, path, f"tensor {name}")
        tensors[name] = np.frombuffer(data, dtype="<f8", count=nbytes // 8, offset=offset).astype(np.float64).reshape(shape)
        offset += nbytes
    if offset != len(data):
        raise CheckpointFormatError(FormatIssue.SHAPE_MISMATCH, path, f"{len(data) - offset} trailing bytes")

    return Checkpoint(
        kind=header["kind"],
        config=header["config"],
        tensors=tensors,
        history=header.get("history", []),
        scale=header.get("scale", 1.0),
        extra=header.get("extra", {}),
    )


def manifest_path(output: PathLike) -> Path:
    output = Path(output)
    return output.with_name(output.name + ".manifest.json")


def write_manifest(manifest: RunManifest, output: PathLike) -> Path:
    path = manifest_path(output)
    path.write_text(manifest.model_dump_json(indent=2))
    return path


@contextmanager
def cleanup_on_failure(outputs: List[Path]) -> Iterator[List[Path]]:
    """Delete every path appended to ``outputs`` if the block raises"""
    try:
        yield outputs
    except BaseException:
        for path in outputs:
            try:
                Path(path).unlink(missing_ok=True)
            except OSError as e:
                logger.warning(f"Could not remove partial output {path}: {e}")
        raise
