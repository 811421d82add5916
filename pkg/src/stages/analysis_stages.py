# stages/analysis_stages.py
import sys
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional

from core.errors import DataError, NumericError
from corpus.synthetic import SyntheticCorpusSpec, generate_synthetic_corpus
from mi.experiments import mi_check, preset_reports
from stages.base import BaseStage
from stages.task_stages import METRICS_DIR
from tasks.instances import TaskName
from tasks.metrics import Metrics
from utils.jsonl import read_json, write_json

BEST_MARK = "*"
RECALL_COLUMNS = (5, 2, 1)


class MiCheckStage(BaseStage):
    name = "mi-check"
    help = "check the InfoNCE bound against exact mutual information on random joints"

    @classmethod
    def add_arguments(cls, parser):
        parser.add_argument("--joints", type=int, default=20, help="number of random joints")
        parser.add_argument("--max-size", type=int, default=16, help="largest side of a random joint")
        parser.add_argument("--steps", type=int, default=500, help="critic optimisation steps per joint")
        parser.add_argument(
            "--presets", action="store_true", help="also report the masked-token joints of the synthetic corpus"
        )

    def _setup(self):
        self.n_joints = int(self.options.get("joints", 20))
        self.max_size = int(self.options.get("max_size", 16))
        self.steps = int(self.options.get("steps", 500))
        if self.n_joints < 1 or self.max_size < 2 or self.steps < 0:
            raise DataError("--joints must be >= 1, --max-size >= 2 and --steps >= 0")

    def _run(self) -> dict[str, Any]:
        seed = self.config.seed
        joints = mi_check(self.n_joints, seed=seed, max_size=self.max_size, steps=self.steps)
        presets = []
        if self.options.get("presets"):
            corpus = generate_synthetic_corpus(SyntheticCorpusSpec(seed=seed))
            presets = preset_reports(corpus, steps=self.steps, seed=seed)

        reports = [*joints, *presets]
        report = {"joints": joints, "presets": presets, "valid": all(r["valid"] for r in reports)}
        write_json(self.record_output(self.output_dir / "mi" / "report.json"), report)

        if not report["valid"]:
            invalid = [r["joint_id"] for r in reports if not r["valid"]]
            raise NumericError(f"InfoNCE bound exceeded the exact MI or ln|B| on {invalid}")
        return report


def report_columns(tasks: Iterable[TaskName]) -> list[str]:
    """Stable column order: tasks in declaration order, R@5/R@2/R@1 for retrieval, Acc for II"""
    columns = []
    for task in TaskName:
        if task not in tasks:
            continue
        if task.base == TaskName.NUR:
            columns.extend(f"{task.value} R@{n}" for n in RECALL_COLUMNS)
        else:
            columns.append(f"{task.value} Acc")
    return columns


def _cells(task: TaskName, metrics: Metrics) -> dict[str, Optional[float]]:
    if task.base == TaskName.NUR:
        return {f"{task.value} R@{n}": metrics.recall_at.get(n) for n in RECALL_COLUMNS}
    return {f"{task.value} Acc": metrics.accuracy}


def build_report(files: Mapping[str, Any]) -> dict[str, Any]:
    """
    Summary table from evaluate outputs: one row per (loss combination,
    scorer), one column group per task. Values are fractions; the best
    value of each column is recorded under "best".
    """
    if not files:
        raise DataError("report needs at least one metrics file")

    rows: dict[str, dict[str, Optional[float]]] = {}
    tasks = set()
    for source, data in files.items():
        if not isinstance(data, dict):
            raise DataError(f"{source}: metrics file must hold a json object")
        try:
            task = TaskName(str(data["task"]))
            scorer, label = str(data["scorer"]), str(data["label"])
        except (KeyError, ValueError) as e:
            raise DataError(f"{source}: malformed metrics file ({e})") from e
        metrics = Metrics.from_json(data.get("metrics") or {})

        row = "random" if scorer == "random" else f"{label} [{scorer}]"
        cells = rows.setdefault(row, {})
        for column, value in _cells(task, metrics).items():
            if column in cells:
                raise DataError(f"{source}: duplicate result for {row} / {column}")
            cells[column] = value
        tasks.add(task)

    columns = report_columns(tasks)
    best = {}
    for column in columns:
        # ties go to the first row in name order
        for name in sorted(rows):
            value = rows[name].get(column)
            if value is not None and (column not in best or value > rows[best[column]][column]):
                best[column] = name

    return {
        "columns": columns,
        "rows": [{"name": name, "values": {c: rows[name].get(c) for c in columns}} for name in sorted(rows)],
        "best": best,
    }


def render_table(report: Mapping[str, Any]) -> str:
    """Plain-text table, percentages with one decimal, best value per column starred"""
    header = ["model", *report["columns"]]
    body = []
    for row in report["rows"]:
        cells = [row["name"]]
        for column in report["columns"]:
            value = row["values"].get(column)
            if value is None:
                cells.append("-")
                continue
            mark = BEST_MARK if report["best"].get(column) == row["name"] else ""
            cells.append(f"{100 * value:.1f}{mark}")
        body.append(cells)

    widths = [max(len(line[k]) for line in [header, *body]) for k in range(len(header))]
    lines = [
        "  ".join(cell.ljust(widths[k]) if k == 0 else cell.rjust(widths[k]) for k, cell in enumerate(line))
        for line in [header, *body]
    ]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(line.rstrip() for line in lines) + "\n"


class ReportStage(BaseStage):
    name = "report"
    help = "summarise metrics files into a plain-text and a JSON table"

    @classmethod
    def add_arguments(cls, parser):
        parser.add_argument(
            "metrics", nargs="*", help="metrics files (default: every file in <output_dir>/metrics)"
        )

    def _setup(self):
        paths = [Path(p) for p in self.options.get("metrics") or []]
        if not paths:
            paths = sorted((self.output_dir / METRICS_DIR).glob("*.json"))
        if not paths:
            raise DataError("no metrics files to report")
        self.paths = [self.record_input(p) for p in paths]

    def _run(self) -> dict[str, Any]:
        report = build_report({str(path): read_json(path) for path in self.paths})
        table = render_table(report)

        write_json(self.record_output(self.output_dir / "report.json"), report)
        text_path = self.record_output(self.output_dir / "report.txt")
        text_path.write_text(table, encoding="utf-8")
        sys.stdout.write(table)
        return report
