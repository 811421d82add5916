# stages/base.py
import argparse
import logging
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Dict, Optional

from core.config import RunConfig
from core.errors import DataError


class BaseStage(ABC):
    """
    One CLI subcommand. The Application calls initialize(), run() and
    cleanup(), then writes the manifest from the recorded inputs/outputs.
    """

    name: str = ""
    help: str = ""

    def __init__(self, config: RunConfig, options: Optional[Dict[str, Any]] = None):
        self.config = config
        self.options = options or {}
        self.logger = logging.getLogger(f"stage.{self.name}")
        self.output_dir = Path(config.output_dir)
        self.inputs: list[Path] = []
        self.outputs: list[Path] = []
        self.result: Any = None

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser):
        """Stage-specific flags"""
        pass

    def initialize(self):
        self.logger.info(f"Initializing {self.name}")
        self._setup()

    def run(self) -> Any:
        self.logger.info(f"Running {self.name}")
        self.result = self._run()
        return self.result

    def cleanup(self):
        self._cleanup()

    def manifest_key(self) -> str:
        """Manifest file stem; stages that run once per option set override it"""
        return self.name

    @abstractmethod
    def _setup(self):
        """Validate inputs before any output is written"""
        pass

    @abstractmethod
    def _run(self) -> Any:
        pass

    def _cleanup(self):
        pass

    def require(self, path: "str | Path", what: str = "input") -> Path:
        path = Path(path)
        if not path.exists():
            raise DataError(f"missing {what}: {path}")
        return path

    def record_input(self, path: "str | Path") -> Path:
        path = self.require(path)
        self.inputs.append(path)
        return path

    def record_output(self, path: "str | Path") -> Path:
        path = Path(path)
        self.outputs.append(path)
        return path
