# tests/test_gradcheck.py
import pytest
import torch

from core.errors import DataError
from model.config import ModelConfig
from model.gradcheck import gradient_check, mug_loss_fn, randomize_parameters, relative_error
from model.hierarchical import HierarchicalModel
from model import layers
from stages.model_stages import GRADCHECK_TOLERANCE, gradcheck_contexts


@pytest.fixture
def setup():
    config = ModelConfig(
        vocab_size=11, dim=8, heads=2, layers_u=1, layers_d=1, layers_dec=1,
        max_utt_tokens=8, context_size=3, dropout=0.0, lang_ids={"en": 5, "fr": 6},
    )
    model = HierarchicalModel(config, seed=1).double()
    randomize_parameters(model, seed=0)
    contexts = gradcheck_contexts(4, config.context_size, config.vocab_size, 7, seed=0)
    return model, mug_loss_fn(model, contexts, seed=0)


def test_relative_error_floor():
    assert relative_error(0.0, 0.0) == 0.0
    assert relative_error(1e-9, 0.0) == pytest.approx(1e-3)
    assert relative_error(2.0, 1.0) == pytest.approx(0.5)


def test_analytic_gradients_match_finite_differences(setup):
    model, loss_fn = setup
    result = gradient_check(model, loss_fn, n_coords=200)
    assert result.n_coords == 200
    assert result.max_rel_error < GRADCHECK_TOLERANCE


def test_detached_softmax_is_caught(setup, monkeypatch):
    model, loss_fn = setup
    monkeypatch.setattr(layers, "attention_weights", lambda scores: torch.softmax(scores, dim=-1).detach())
    result = gradient_check(model, loss_fn, n_coords=400)
    assert result.max_rel_error > 1e-2


def test_needs_float64(setup):
    model, loss_fn = setup
    with pytest.raises(DataError):
        gradient_check(model.float(), loss_fn)


def test_contexts_use_regular_ids_only():
    for ctx in gradcheck_contexts(4, 3, 11, 7, seed=2):
        assert len(ctx.utterances) == 3
        assert all(7 <= t < 11 for utt in ctx.utterances for t in utt.tokens)
