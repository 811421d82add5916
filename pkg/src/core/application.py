# core/application.py
import logging
from pathlib import Path
from typing import Any, Dict, Optional

from core.config import Config, RunConfig
from core.errors import DataError
from core.manifest import Manifest, OutputLock, hash_files
from core.stage_manager import StageManager

from stages.analysis_stages import MiCheckStage, ReportStage
from stages.corpus_stages import AlignStage, IngestStage, SegmentStage, VocabStage
from stages.model_stages import GradCheckStage, PretrainStage
from stages.task_stages import EvaluateStage, MakeTasksStage

logger = logging.getLogger(__name__)

# pipeline order, also the order of `--help`
STAGES = (
    IngestStage,
    SegmentStage,
    VocabStage,
    AlignStage,
    PretrainStage,
    MakeTasksStage,
    EvaluateStage,
    MiCheckStage,
    GradCheckStage,
    ReportStage,
)


def build_stage_manager() -> StageManager:
    manager = StageManager()
    for stage_cls in STAGES:
        manager.register(stage_cls)
    return manager


class Application:
    def __init__(self, config: RunConfig, stage_manager: Optional[StageManager] = None):
        self.config = config
        self.stage_manager = stage_manager or build_stage_manager()

    def run_stage(self, name: str, options: Optional[Dict[str, Any]] = None) -> Manifest:
        """Run one stage under the output lock and write its manifest"""
        options = dict(options or {})
        stage = self.stage_manager.create(name, self.config, options)

        with OutputLock(self.config.output_dir):
            try:
                stage.initialize()
                stage.run()
            finally:
                stage.cleanup()

            manifest = Manifest(
                stage=name,
                seed=self.config.seed,
                config=self.config.snapshot(),
                options=options,
                inputs=hash_files(stage.inputs),
                outputs=hash_files(stage.outputs),
            )
            path = manifest.write(self.config.output_dir, stage.manifest_key())

        logger.info(f"{name} finished, manifest at {path}")
        return manifest

    @classmethod
    def replay(cls, manifest_path: "str | Path", stage_manager: Optional[StageManager] = None) -> Manifest:
        """
        Re-run a manifest's stage with its config snapshot and options, then
        check that every output hashes as recorded.
        """
        recorded = Manifest.read(manifest_path)
        changed = recorded.changed_inputs()
        if changed:
            raise DataError(f"inputs changed since the manifest was written: {', '.join(changed)}")

        config = Config().resolve(recorded.config)
        app = cls(config, stage_manager)
        replayed = app.run_stage(recorded.stage, recorded.options)

        differing = sorted(
            path
            for path in set(recorded.outputs) | set(replayed.outputs)
            if recorded.outputs.get(path) != replayed.outputs.get(path)
        )
        if differing:
            raise DataError(f"replay of {recorded.stage} produced different outputs: {', '.join(differing)}")

        logger.info(f"replay of {recorded.stage}: {len(replayed.outputs)} outputs byte-identical")
        return replayed
