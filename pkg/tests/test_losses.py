# tests/test_losses.py
import math

import pytest
import torch

from conftest import context_of, tokenized
from core.errors import DataError, NumericError
from corpus.types import LanguageTag
from model.config import ModelConfig
from model.hierarchical import HierarchicalModel
from objectives.losses import (
    batch_context_loss,
    batch_utterance_loss,
    context_loss,
    masked_token_nll,
    total_loss,
    utterance_loss,
)
from objectives.masking import CorruptedContext, LossMode, MaskPlan, MaskedTarget, corrupt_context, plan_token_masks
from vocab.vocabulary import MASK


def uniform_model(vocab_size: int = 10, T: int = 2) -> HierarchicalModel:
    """All-zero parameters: every logit is 0, so every softmax is uniform"""
    config = ModelConfig(vocab_size=vocab_size, dim=8, heads=2, layers_u=1, layers_d=1, layers_dec=1,
                         context_size=T, dropout=0.0, lang_ids={"en": 5})
    model = HierarchicalModel(config).double().eval()
    with torch.no_grad():
        for param in model.parameters():
            param.zero_()
    return model


class TestUtteranceLoss:
    def test_uniform_model_gives_log_vocab(self):
        plan = MaskPlan((1, 2), (7, 8))
        loss = utterance_loss(uniform_model(), [6, 7, 8], plan)
        assert float(loss) == pytest.approx(math.log(10), abs=1e-9)

    def test_three_way_softmax(self):
        logits = torch.tensor([[1.0, 0.0, 0.0]], dtype=torch.float64)
        nll = masked_token_nll(logits, torch.tensor([0]))
        assert float(nll) == pytest.approx(math.log(math.e + 2) - 1.0, abs=1e-12)

    def test_perfect_prediction_gives_zero(self):
        logits = torch.tensor([[0.0, 1000.0, 0.0]], dtype=torch.float64)
        assert float(masked_token_nll(logits, torch.tensor([1]))) == pytest.approx(0.0, abs=1e-12)

    def test_plan_count_must_match(self):
        with pytest.raises(DataError):
            batch_utterance_loss(uniform_model(), [[6, 7]], [])


class TestContextLoss:
    @pytest.fixture
    def corrupted(self):
        target = (6, 7, 8, 9)
        ctx = context_of(tokenized(MASK, MASK, MASK, MASK), tokenized(6, 7))
        return CorruptedContext(ctx, (0,), (MaskedTarget(target, LanguageTag.EN),), LossMode.MUG)

    def test_uniform_model_gives_log_vocab_per_step(self, corrupted):
        loss, count = batch_context_loss(uniform_model(), [corrupted])
        assert count == 4
        assert float(loss) * count == pytest.approx(4 * math.log(10), abs=1e-9)

    def test_matches_stepwise_softmax_chain(self, corrupted):
        config = ModelConfig(vocab_size=10, dim=8, heads=2, layers_u=1, layers_d=1, layers_dec=1,
                             context_size=2, dropout=0.0, lang_ids={"en": 5})
        model = HierarchicalModel(config, seed=3).double().eval()
        generator = torch.Generator().manual_seed(1)
        with torch.no_grad():
            for param in model.parameters():
                param.add_(0.5 * torch.randn(param.shape, dtype=torch.float64, generator=generator))

        _, states = model.encode_contexts([corrupted.context])
        target = corrupted.targets[0].tokens
        expected = 0.0
        for j in range(len(target)):
            inputs = torch.tensor([[5, *target[:j]]])
            logits = model.decode(states, inputs, torch.tensor([0]))[0, -1]
            expected -= float(torch.log_softmax(logits, dim=-1)[target[j]])

        assert float(context_loss(model, corrupted)) * len(target) == pytest.approx(expected, rel=1e-10)

    def test_empty_batch(self):
        with pytest.raises(DataError):
            batch_context_loss(uniform_model(), [])


class TestTotalLoss:
    def test_unit_weights(self):
        assert total_loss(2.0, 3.0).total == 5.0

    def test_zero_dialog_part(self):
        assert total_loss(1.25, 0.0).total == 1.25

    def test_weighted(self):
        assert total_loss(2.0, 3.0, 0.5, 2.0).total == 7.0

    def test_non_finite(self):
        with pytest.raises(NumericError):
            total_loss(float("nan"), 1.0)
        with pytest.raises(NumericError):
            total_loss(1.0, torch.tensor(float("inf")))


def test_initial_loss_close_to_log_vocab(tiny_model, vocab, contexts):
    batch = contexts[:16]
    corrupted = [corrupt_context(ctx, LossMode.MUG, 0.2, seed=k) for k, ctx in enumerate(batch)]
    utterances = [u.tokens for ctx in batch for u in ctx.utterances]
    plans = [plan_token_masks(u, 0.15, seed=k) for k, u in enumerate(utterances)]

    with torch.no_grad():
        u_part, _ = batch_utterance_loss(tiny_model, utterances, plans)
        d_part, _ = batch_context_loss(tiny_model, corrupted)

    log_v = math.log(len(vocab))
    assert float(u_part) == pytest.approx(log_v, rel=0.05)
    assert float(d_part) == pytest.approx(log_v, rel=0.05)


def test_losses_are_finite_and_non_negative(tiny_model, pairs):
    usable = [p for p in pairs if len(p.translated_slots) < len(p.base)][:8]
    for mode in (LossMode.TMUG, LossMode.MMUG):
        corrupted = [corrupt_context(p, mode, 0.4, seed=k) for k, p in enumerate(usable)]
        with torch.no_grad():
            loss, count = batch_context_loss(tiny_model, corrupted)
        assert count > 0
        assert math.isfinite(float(loss)) and float(loss) >= 0
