# core/manifest.py
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

from core.errors import DataError, UsageError
from utils.jsonl import file_sha256, read_json, write_json

logger = logging.getLogger(__name__)

LOCK_NAME = ".dialopre.lock"
MANIFEST_VERSION = 1


def manifest_path(output_dir: "str | Path", key: str) -> Path:
    """`key` is the stage name, extended by stage options for stages run once per task"""
    return Path(output_dir) / f"{key}.manifest.json"


def hash_files(paths: Iterable[Path]) -> Dict[str, str]:
    return {str(path): file_sha256(path) for path in sorted(set(paths), key=str)}


@dataclass
class Manifest:
    """Everything needed to replay one stage: inputs, config, seed, stage options"""

    stage: str
    seed: int
    config: Dict[str, Any]
    options: Dict[str, Any] = field(default_factory=dict)
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)

    def to_json(self) -> Dict[str, Any]:
        return {
            "version": MANIFEST_VERSION,
            "stage": self.stage,
            "seed": self.seed,
            "config": self.config,
            "options": self.options,
            "inputs": self.inputs,
            "outputs": self.outputs,
        }

    def write(self, output_dir: "str | Path", key: Optional[str] = None) -> Path:
        path = manifest_path(output_dir, key or self.stage)
        write_json(path, self.to_json())
        return path

    @classmethod
    def read(cls, path: "str | Path") -> "Manifest":
        data = read_json(path)
        try:
            if data.get("version") != MANIFEST_VERSION:
                raise DataError(f"{path}: unsupported manifest version {data.get('version')}")
            return cls(
                stage=data["stage"],
                seed=int(data["seed"]),
                config=dict(data["config"]),
                options=dict(data.get("options") or {}),
                inputs=dict(data.get("inputs") or {}),
                outputs=dict(data.get("outputs") or {}),
            )
        except (KeyError, TypeError, AttributeError) as e:
            raise DataError(f"{path}: malformed manifest ({e})") from e

    def changed_inputs(self) -> list[str]:
        """Inputs whose content no longer matches the recorded hash"""
        changed = []
        for path, digest in self.inputs.items():
            if not Path(path).exists() or file_sha256(path) != digest:
                changed.append(path)
        return changed


class OutputLock:
    """Exclusive lock file: one CLI process per output directory"""

    def __init__(self, output_dir: "str | Path"):
        self.path = Path(output_dir) / LOCK_NAME
        self._fd = None

    def __enter__(self) -> "OutputLock":
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            self._fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError as e:
            raise UsageError(f"output directory {self.path.parent} is busy (remove {self.path} if stale)") from e
        os.write(self._fd, str(os.getpid()).encode("ascii"))
        return self

    def __exit__(self, *exc):
        if self._fd is not None:
            os.close(self._fd)
            self._fd = None
            try:
                self.path.unlink()
            except FileNotFoundError:
                logger.warning(f"lock file {self.path} vanished before release")
        return False
