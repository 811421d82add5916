# tests/test_cli.py
import json
import shutil

import pytest

from core.manifest import LOCK_NAME, Manifest, manifest_path
from corpus.synthetic import SyntheticCorpusSpec, generate_synthetic_corpus, write_synthetic_corpus
from run import main

SMALL_MODEL = [
    "--seed", "0",
    "--heldout-fraction", "0.5",
    "--window-stride", "1",
    "--workers", "1",
    "--dim", "16",
    "--heads", "2",
    "--layers-u", "1",
    "--layers-d", "1",
    "--layers-dec", "1",
    "--dropout", "0",
    "--steps", "4",
    "--batch-size", "4",
    "--warmup", "2",
    "--n-instances", "40",
]

PIPELINE = [
    ["ingest"],
    ["segment"],
    ["vocab"],
    ["align"],
    ["pretrain"],
    ["make-tasks", "--task", "nur"],
    ["make-tasks", "--task", "ii"],
    ["make-tasks", "--task", "ii", "--split", "train"],
    ["make-tasks", "--task", "mii"],
    ["evaluate", "--task", "nur", "--random"],
    ["evaluate", "--task", "nur"],
    ["evaluate", "--task", "ii", "--random"],
    ["evaluate", "--task", "ii", "--finetune-steps", "2"],
]

TASK_MANIFESTS = ["make-tasks.nur.heldout", "make-tasks.ii.heldout", "make-tasks.ii.train", "make-tasks.mii.heldout"]
METRICS_MANIFESTS = ["evaluate.nur.random", "evaluate.nur.pretrained", "evaluate.ii.random", "evaluate.ii.finetuned"]


def run_pipeline(corpus, output) -> list[int]:
    common = ["--corpus-dir", str(corpus), "--output-dir", str(output), *SMALL_MODEL]
    return [main([*stage, *common]) for stage in PIPELINE]


def output_files(directory) -> dict[str, bytes]:
    return {
        str(path.relative_to(directory)): path.read_bytes()
        for path in sorted(directory.rglob("*"))
        if path.is_file() and not path.name.endswith(".manifest.json")
    }


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    # 12 movies keep both splits non-empty at a 0.5 heldout fraction
    spec = SyntheticCorpusSpec(n_movies=12, seed=0)
    return write_synthetic_corpus(generate_synthetic_corpus(spec), tmp_path_factory.mktemp("corpus"))


@pytest.fixture(scope="module")
def pipeline(corpus, tmp_path_factory):
    output = tmp_path_factory.mktemp("run")
    assert run_pipeline(corpus, output) == [0] * len(PIPELINE)
    return output


class TestPipeline:
    def test_stage_outputs(self, pipeline):
        for name in ("vocab.json", "model.ckpt", "pretrain/history.jsonl", "ingest/summary.json"):
            assert (pipeline / name).is_file(), name
        for split in ("train", "heldout"):
            assert (pipeline / "shards" / f"{split}.en.jsonl").is_file()
            assert (pipeline / "shards" / f"{split}.en-fr.jsonl").is_file()
        for task in ("nur.heldout", "ii.heldout", "ii.train", "mii.heldout"):
            assert (pipeline / "tasks" / f"{task}.jsonl").is_file()
        for metrics in ("nur.random", "nur.pretrained", "ii.random", "ii.finetuned"):
            assert (pipeline / "metrics" / f"{metrics}.json").is_file()

    def test_every_stage_leaves_a_manifest(self, pipeline):
        keys = ["ingest", "segment", "vocab", "align", "pretrain", *TASK_MANIFESTS, *METRICS_MANIFESTS]
        for key in keys:
            manifest = Manifest.read(manifest_path(pipeline, key))
            assert manifest.stage == key.split(".")[0] and manifest.seed == 0
            assert manifest.outputs
            assert all(len(digest) == 64 for digest in manifest.outputs.values())
        assert not (pipeline / LOCK_NAME).exists()

    def test_task_runs_keep_separate_manifests(self, pipeline):
        for key in TASK_MANIFESTS:
            _, task, split = key.split(".")
            manifest = Manifest.read(manifest_path(pipeline, key))
            assert manifest.options["task"] == task
            assert list(manifest.outputs) == [str(pipeline / "tasks" / f"{task}.{split}.jsonl")]

    @pytest.mark.parametrize("key", TASK_MANIFESTS + METRICS_MANIFESTS)
    def test_replay_task_and_evaluate_runs(self, pipeline, key):
        assert main(["replay", "--manifest", str(manifest_path(pipeline, key))]) == 0

    def test_history_has_one_record_per_step(self, pipeline):
        lines = (pipeline / "pretrain" / "history.jsonl").read_text().splitlines()
        assert [json.loads(line)["step"] for line in lines] == [0, 1, 2, 3]

    def test_metrics_file(self, pipeline):
        data = json.loads((pipeline / "metrics" / "nur.pretrained.json").read_text())
        assert data["task"] == "nur" and data["scorer"] == "pretrained"
        assert data["label"] == "MUG+TMUG+MMUG"
        assert set(data["metrics"]["recall_at"]) == {"1", "2", "5"}

    def test_rerun_is_byte_identical(self, pipeline, corpus, tmp_path):
        assert run_pipeline(corpus, tmp_path) == [0] * len(PIPELINE)
        fresh, first = output_files(tmp_path), output_files(pipeline)
        assert fresh == {name: data for name, data in first.items() if name in fresh}

    def test_replay_pretrain(self, pipeline):
        assert main(["replay", "--manifest", str(manifest_path(pipeline, "pretrain"))]) == 0

    def test_report_table(self, pipeline, capsys):
        assert main(["report", "--output-dir", str(pipeline)]) == 0
        table = (pipeline / "report.txt").read_text()
        assert capsys.readouterr().out == table

        header, rule, *rows = table.splitlines()
        assert header.split()[0] == "model"
        assert "ii Acc" in header and "nur R@5" in header and "nur R@1" in header
        assert header.index("ii Acc") < header.index("nur R@5") < header.index("nur R@2") < header.index("nur R@1")
        assert set(rule.replace(" ", "")) == {"-"}
        names = [row.split("  ")[0].strip() for row in rows]
        assert names == sorted(["random", "MUG+TMUG+MMUG [pretrained]", "MUG+TMUG+MMUG [finetuned]"])
        assert "*" in table and "-" in " ".join(rows)

        report = json.loads((pipeline / "report.json").read_text())
        assert set(report["best"]) == set(report["columns"])


def test_replay_refuses_changed_inputs(corpus, tmp_path):
    common = ["--corpus-dir", str(corpus), "--output-dir", str(tmp_path), "--workers", "1"]
    assert main(["ingest", *common]) == 0
    assert main(["segment", *common]) == 0

    first = sorted((tmp_path / "ingest").glob("*.en.jsonl"))[0]
    first.write_text(first.read_text() + "\n")
    assert main(["replay", "--manifest", str(manifest_path(tmp_path, "segment"))]) == 2


class TestExitCodes:
    def test_unknown_command(self):
        assert main(["nonsense"]) == 1

    def test_bad_config_value(self, tmp_path):
        assert main(["vocab", "--output-dir", str(tmp_path), "--dim", "10", "--heads", "3"]) == 1

    def test_unknown_config_key(self, tmp_path):
        config = tmp_path / "run.toml"
        config.write_text("no_such_key = 1\n")
        assert main(["--config", str(config), "vocab", "--output-dir", str(tmp_path)]) == 1

    def test_busy_output_directory(self, corpus, tmp_path):
        (tmp_path / LOCK_NAME).write_text("")
        assert main(["ingest", "--corpus-dir", str(corpus), "--output-dir", str(tmp_path)]) == 1
        assert (tmp_path / LOCK_NAME).exists()

    def test_missing_aligned_shard(self, pipeline, tmp_path):
        output = tmp_path / "run"
        shutil.copytree(pipeline, output)
        assert main(["make-tasks", "--task", "mnur", "--target-lang", "es", "--output-dir", str(output)]) == 2

    def test_empty_report(self, tmp_path):
        assert main(["report", "--output-dir", str(tmp_path)]) == 2

    def test_missing_corpus(self, tmp_path):
        assert main(["ingest", "--corpus-dir", str(tmp_path / "none"), "--output-dir", str(tmp_path / "out")]) == 2

    def test_gradient_check_passes(self, tmp_path):
        assert main(["grad-check", "--coords", "50", "--output-dir", str(tmp_path)]) == 0
        assert json.loads((tmp_path / "gradcheck.json").read_text())["passed"] is True

    def test_gradient_check_failure_is_numeric(self, tmp_path):
        assert main(["grad-check", "--coords", "50", "--epsilon", "1.0", "--output-dir", str(tmp_path)]) == 3

    def test_mi_check(self, tmp_path):
        args = ["mi-check", "--joints", "3", "--max-size", "4", "--steps", "20", "--output-dir", str(tmp_path)]
        assert main(args) == 0
        assert json.loads((tmp_path / "mi" / "report.json").read_text())["valid"] is True
