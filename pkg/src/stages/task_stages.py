# stages/task_stages.py
from dataclasses import replace
from pathlib import Path
from typing import Any

from core.errors import DataError
from core.seeding import derive_seed
from corpus.shards import HELDOUT, TRAIN, aligned_shard_name, monolingual_shard_name, read_context_shard
from corpus.types import LanguageTag
from model.checkpoint import load_checkpoint
from stages.base import BaseStage
from stages.corpus_stages import SHARDS_DIR
from stages.model_stages import checkpoint_path
from tasks.instances import TaskName, UtterancePool, instance_from_record, make_ii, make_nur
from tasks.metrics import compute_metrics
from tasks.scoring import FineTuneSettings, fine_tune, labels_of, model_predictions, random_predictions
from utils.jsonl import iter_jsonl, write_json, write_jsonl

TASKS_DIR = "tasks"
METRICS_DIR = "metrics"


def task_file(output_dir: Path, task: TaskName, split: str) -> Path:
    return output_dir / TASKS_DIR / f"{task.value}.{split}.jsonl"


def _task_option(options: dict) -> TaskName:
    value = options.get("task")
    try:
        return TaskName(str(value).lower())
    except ValueError as e:
        raise DataError(f"unknown task {value!r}, expected one of {[t.value for t in TaskName]}") from e


class MakeTasksStage(BaseStage):
    name = "make-tasks"
    help = "generate II/NUR (and multilingual mII/mNUR) instances from context shards"

    @classmethod
    def add_arguments(cls, parser):
        parser.add_argument("--task", required=True, choices=[t.value for t in TaskName])
        parser.add_argument("--split", default=HELDOUT, choices=[TRAIN, HELDOUT])
        parser.add_argument("--lang", default=LanguageTag.EN.value, help="base language L")
        parser.add_argument("--target-lang", default=None, help="L' for mII/mNUR (default: the only aligned pair)")

    def _setup(self):
        self.task = _task_option(self.options)
        self.split = self.options.get("split") or HELDOUT
        lang = LanguageTag.parse(self.options.get("lang") or LanguageTag.EN.value)
        shards = self.output_dir / SHARDS_DIR

        if not self.task.multilingual:
            path = shards / monolingual_shard_name(self.split, lang)
        elif self.options.get("target_lang"):
            path = shards / aligned_shard_name(self.split, lang, LanguageTag.parse(self.options["target_lang"]))
        else:
            found = sorted(shards.glob(f"{self.split}.{lang.value}-*.jsonl"))
            if len(found) != 1:
                expected = shards / f"{self.split}.{lang.value}-<L'>.jsonl"
                raise DataError(f"{self.task} needs exactly one aligned shard {expected}, found {len(found)}")
            path = found[0]

        if not path.exists():
            raise DataError(f"missing {'aligned ' if self.task.multilingual else ''}shard for {self.task}: {path}")
        self.items = read_context_shard(self.record_input(path))
        if not self.items:
            raise DataError(f"{path} holds no contexts")

    def manifest_key(self) -> str:
        return f"{self.name}.{self.task.value}.{self.split}"

    def _run(self) -> int:
        cfg = self.config
        pool = UtterancePool.from_items(self.items)
        items = self.items[: cfg.n_instances] if cfg.n_instances > 0 else self.items
        p_lprime = cfg.p_lprime if self.task.multilingual else 0.0
        seed = derive_seed(cfg.seed, f"tasks:{self.split}")

        if self.task.base == TaskName.II:
            instances = make_ii(items, pool, p_lprime, seed=seed)
        else:
            instances = make_nur(items, pool, cfg.distractors, p_lprime, seed=seed)

        count = write_jsonl(
            self.record_output(task_file(self.output_dir, self.task, self.split)), (i.to_record() for i in instances)
        )
        self.logger.info(f"{count} {self.task} instances ({self.split})")
        return count


def read_instances(path: Path) -> list:
    return [instance_from_record(record) for record in iter_jsonl(path)]


class EvaluateStage(BaseStage):
    name = "evaluate"
    help = "score task instances with the pretrained model (optionally fine-tuned) or a random baseline"

    @classmethod
    def add_arguments(cls, parser):
        parser.add_argument("--task", required=True, choices=[t.value for t in TaskName])
        parser.add_argument("--random", action="store_true", help="score with the seeded random baseline")
        parser.add_argument(
            "--finetune-steps", type=int, default=0, help="fine-tune on the train split instances first (0 = off)"
        )

    def _setup(self):
        self.task = _task_option(self.options)
        self.use_random = bool(self.options.get("random"))
        self.finetune_steps = int(self.options.get("finetune_steps") or 0)

        test_path = task_file(self.output_dir, self.task, HELDOUT)
        self.require(test_path, f"{self.task} instances (run `make-tasks --task {self.task}` first)")
        self.test = read_instances(self.record_input(test_path))
        if not self.test:
            raise DataError(f"{test_path} holds no instances")

        self.train = []
        if not self.use_random:
            self.checkpoint = self.record_input(checkpoint_path(self))
            if self.finetune_steps > 0:
                train_path = task_file(self.output_dir, self.task, TRAIN)
                self.require(train_path, f"training instances (run `make-tasks --task {self.task} --split train`)")
                self.train = read_instances(self.record_input(train_path))
                if len(self.train) < 2:
                    raise DataError(f"{train_path}: fine-tuning needs at least two instances")

    def _scorer(self) -> str:
        if self.use_random:
            return "random"
        return "finetuned" if self.finetune_steps > 0 else "pretrained"

    def manifest_key(self) -> str:
        return f"{self.name}.{self.task.value}.{self._scorer()}"

    def _run(self) -> dict[str, Any]:
        cfg = self.config
        if self.use_random:
            predictions = random_predictions(self.test, seed=derive_seed(cfg.seed, "random-scorer"))
        else:
            model = load_checkpoint(self.checkpoint)
            if self.finetune_steps > 0:
                half = len(self.train) // 2
                settings = replace(
                    FineTuneSettings(), steps=self.finetune_steps, batch_size=cfg.batch_size, seed=cfg.seed
                )
                model, losses = fine_tune(model, self.train[:half], self.train[half:], settings)
                self.logger.info(f"fine-tune validation losses: {losses}")
            predictions = model_predictions(model, self.test)

        metrics = compute_metrics(predictions, labels_of(self.test))
        scorer = self._scorer()
        report = {
            "task": self.task.value,
            "scorer": scorer,
            "label": "random" if self.use_random else "+".join(cfg.loss_modes),
            "metrics": metrics.to_json(),
        }
        write_json(self.record_output(self.output_dir / METRICS_DIR / f"{self.task.value}.{scorer}.json"), report)
        self.logger.info(f"{self.task} [{scorer}]: {metrics.to_json()}")
        return report
