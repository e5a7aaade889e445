#!/usr/bin/env python3
"""
Artifact integrity utilities

File digests, atomic writes, output-directory locks and the run manifest
written next to every command's outputs.
"""

import hashlib
import json
import os
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterator, List, Mapping, Optional, Union

from loguru import logger

from .config import Constants
from .errors import ArtifactLockError, StaleArtifactError, UsageError

PathLike = Union[str, Path]


def file_digest(file_path: PathLike) -> str:
    """
    Compute the SHA-256 digest of a file.

    Args:
        file_path (PathLike): File to hash

    Returns:
        str: Hex digest
    """
    sha = hashlib.sha256()
    with open(file_path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 20), b''):
            sha.update(chunk)
    return sha.hexdigest()


def atomic_write_bytes(file_path: PathLike, data: bytes) -> Path:
    """Write bytes to a sibling temp file, then rename over the target."""
    path = Path(file_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    with open(tmp_path, 'wb') as f:
        f.write(data)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp_path, path)
    return path


def atomic_write_text(file_path: PathLike, text: str) -> Path:
    return atomic_write_bytes(file_path, text.encode('utf-8'))


@contextmanager
def output_lock(out_dir: PathLike) -> Iterator[Path]:
    """
    Hold an exclusive lock file in ``out_dir`` for the duration of a command.

    Raises:
        ArtifactLockError: If the directory is already locked
    """
    directory = Path(out_dir)
    directory.mkdir(parents=True, exist_ok=True)
    lock_path = directory / Constants.LOCK_FILE
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ArtifactLockError(f"Output directory {directory} is locked by another command ({lock_path})")
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield directory
    finally:
        lock_path.unlink(missing_ok=True)


@dataclass
class RunManifest:
    """Provenance record written alongside a command's outputs."""

    command: str
    seed: Optional[int] = None
    config: Dict[str, Any] = field(default_factory=dict)
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)
    rejected_rows: List[Dict[str, Any]] = field(default_factory=list)
    tool_version: str = Constants.TOOL_VERSION
    started_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    finished_at: Optional[str] = None
    wall_clock_seconds: Optional[float] = None
    _t0: float = field(default_factory=time.perf_counter, repr=False)

    def add_input(self, name: str, file_path: PathLike) -> None:
        self.inputs[name] = file_digest(file_path)

    def add_output(self, file_path: PathLike, out_dir: PathLike) -> None:
        path = Path(file_path)
        self.outputs[str(path.relative_to(out_dir))] = file_digest(path)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data.pop('_t0')
        return data

    def write(self, out_dir: PathLike) -> Path:
        """
        Finalize timing fields and write ``manifest.json`` atomically.

        Args:
            out_dir (PathLike): Output directory of the command

        Returns:
            Path: Manifest path
        """
        self.finished_at = datetime.now(timezone.utc).isoformat()
        self.wall_clock_seconds = round(time.perf_counter() - self._t0, 3)
        path = Path(out_dir) / Constants.MANIFEST_FILE
        atomic_write_text(path, json.dumps(self.to_dict(), indent=2, sort_keys=True) + '\n')
        logger.debug(f"Manifest written: {path}")
        return path


def load_manifest(artifact_dir: PathLike) -> Dict[str, Any]:
    """
    Load the manifest of an upstream artifact directory.

    Raises:
        UsageError: If the directory has no manifest
    """
    path = Path(artifact_dir) / Constants.MANIFEST_FILE
    if not path.exists():
        raise UsageError(f"No manifest found in {artifact_dir}; run the upstream command first")
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def verify_artifact(file_path: PathLike, manifest: Optional[Mapping[str, Any]] = None) -> str:
    """
    Check that an upstream file still matches the digest its manifest recorded.

    Args:
        file_path (PathLike): Artifact file
        manifest: Manifest of the directory holding the file; loaded when omitted

    Returns:
        str: The verified digest

    Raises:
        UsageError: If the file does not exist
        StaleArtifactError: If the digest differs or the file is not listed
    """
    path = Path(file_path)
    if not path.exists():
        raise UsageError(f"Artifact not found: {path}")
    if manifest is None:
        manifest = load_manifest(path.parent)
    recorded = manifest.get('outputs', {}).get(path.name)
    if recorded is None:
        raise StaleArtifactError(f"{path} is not listed in its manifest outputs")
    actual = file_digest(path)
    if actual != recorded:
        raise StaleArtifactError(f"{path} changed since it was produced (digest {actual[:12]} != {recorded[:12]})")
    return actual
