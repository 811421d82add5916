# tests/test_experiments.py
import pytest

from corpus.synthetic import SyntheticCorpusSpec
from tasks.experiments import CodeSwitchSettings, run_code_switch_experiment
from tasks.scoring import FineTuneSettings


@pytest.mark.slow
def test_code_switched_pretraining_helps_multilingual_ii():
    result = run_code_switch_experiment()
    assert len(result["mug_only"]) == len(result["code_switched"]) == 5
    assert result["mean_code_switched"] > result["mean_mug_only"]


def test_experiment_report_shape():
    settings = CodeSwitchSettings(
        seeds=(0,),
        corpus=SyntheticCorpusSpec(n_movies=12, conversations_per_movie=4),
        heldout_fraction=0.5,
        dim=16,
        pretrain_steps=2,
        batch_size=4,
        finetune=FineTuneSettings(steps=2, batch_size=4, lrs=(1e-3,)),
    )
    result = run_code_switch_experiment(settings)
    assert result["seeds"] == [0]
    for key in ("mug_only", "code_switched"):
        assert len(result[key]) == 1 and 0.0 <= result[key][0] <= 1.0
    assert result["mean_mug_only"] == result["mug_only"][0]
