# core/stage_manager.py
import logging
from typing import Any, Dict, Optional, Type

from core.config import RunConfig
from core.errors import UsageError
from stages.base import BaseStage

logger = logging.getLogger(__name__)


class StageManager:
    def __init__(self):
        self._stages: Dict[str, Type[BaseStage]] = {}

    def register(self, stage_cls: Type[BaseStage]):
        """Register a stage class under its subcommand name"""
        if not stage_cls.name:
            raise UsageError(f"{stage_cls.__name__} has no name")
        self._stages[stage_cls.name] = stage_cls

        logger.debug(f"Registered stage: {stage_cls.name}")

    def get_stage(self, name: str) -> Optional[Type[BaseStage]]:
        return self._stages.get(name)

    def create(self, name: str, config: RunConfig, options: Optional[Dict[str, Any]] = None) -> BaseStage:
        stage_cls = self.get_stage(name)
        if stage_cls is None:
            raise UsageError(f"unknown stage {name!r}, expected one of {', '.join(self.names())}")
        return stage_cls(config, options)

    def names(self) -> list[str]:
        return list(self._stages)

    def items(self):
        return self._stages.items()
