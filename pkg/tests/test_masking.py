# tests/test_masking.py
import numpy as np
import pytest

from conftest import context_of, tokenized
from core.errors import DataError
from corpus.types import AlignedContextPair, LanguageTag
from objectives.masking import (
    CorruptedContext,
    LossMode,
    MaskedTarget,
    corrupt_context,
    plan_token_masks,
    reconstruct,
)
from vocab.vocabulary import MASK

EN, FR, ES, IT = LanguageTag.EN, LanguageTag.FR, LanguageTag.ES, LanguageTag.IT


@pytest.fixture
def en_context():
    return context_of(*(tokenized(10 + k, 20 + k, lang=EN) for k in range(5)))


@pytest.fixture
def pair(en_context):
    translated = [None, tokenized(31, 32, 33, lang=FR), None, tokenized(34, lang=FR), tokenized(35, 36, lang=FR)]
    return AlignedContextPair(en_context, tuple(translated), (EN, FR))


class TestPlanTokenMasks:
    def test_count_rounds_proportion(self):
        assert len(plan_token_masks(list(range(20)), 0.15, seed=0).masked_token_positions) == 3

    def test_single_token_masked_at_least_once(self):
        plan = plan_token_masks([7], 0.15, seed=0)
        assert plan.masked_token_positions == (0,) and plan.target_tokens == (7,)

    def test_same_seed_same_plan(self):
        utt = list(range(30, 60))
        assert plan_token_masks(utt, seed=5) == plan_token_masks(utt, seed=5)

    def test_apply(self):
        plan = plan_token_masks([5, 6, 7, 8], 0.5, seed=1)
        masked = plan.apply([5, 6, 7, 8])
        assert [masked[p] for p in plan.masked_token_positions] == [MASK, MASK]
        assert tuple([5, 6, 7, 8][p] for p in plan.masked_token_positions) == plan.target_tokens

    @pytest.mark.parametrize("p", [0.0, 1.5])
    def test_bad_proportion(self, p):
        with pytest.raises(DataError):
            plan_token_masks([1, 2], p)

    def test_empty_utterance(self):
        with pytest.raises(DataError):
            plan_token_masks([], 0.15)


class TestCorruptContext:
    def test_mug_masks_and_targets_originals(self, en_context):
        cc = corrupt_context(en_context, LossMode.MUG, p_c=0.4, seed=0)
        assert len(cc.masked_positions) == 2
        for pos, target in zip(cc.masked_positions, cc.targets):
            assert cc.context.utterances[pos].tokens == (MASK,) * len(target.tokens)
            assert target.tokens == en_context.utterances[pos].tokens and target.lang == EN
        assert reconstruct(cc) == en_context

    def test_mug_rejects_multilingual_context(self, pair):
        with pytest.raises(DataError):
            corrupt_context(pair.code_switched(), LossMode.MUG, seed=0)

    def test_tmug_masks_every_translated_slot(self, pair):
        cc = corrupt_context(pair, LossMode.TMUG, seed=0)
        assert cc.masked_positions == (1, 3, 4)
        assert cc.surviving_langs == {EN}
        assert {t.lang for t in cc.targets} == {FR}
        assert cc.targets[0].tokens == (31, 32, 33)

    def test_tmug_needs_translations(self, en_context):
        empty = AlignedContextPair(en_context, (None,) * 5, (EN, FR))
        with pytest.raises(DataError):
            corrupt_context(empty, LossMode.TMUG, seed=0)
        with pytest.raises(DataError):
            corrupt_context(en_context, LossMode.TMUG, seed=0)

    def test_tmug_needs_an_untranslated_slot(self, en_context):
        full = AlignedContextPair(en_context, tuple(tokenized(30 + k, lang=FR) for k in range(5)), (EN, FR))
        with pytest.raises(DataError):
            corrupt_context(full, LossMode.TMUG, seed=0)

    def test_mmug_targets_keep_their_language(self):
        ctx = context_of(
            tokenized(11, lang=EN),
            tokenized(12, lang=FR),
            tokenized(13, 14, lang=IT),
            tokenized(15, lang=ES),
            tokenized(16, lang=EN),
        )
        rng = np.random.default_rng(0)
        for _ in range(20):
            cc = corrupt_context(ctx, LossMode.MMUG, p_c=0.4, rng=rng)
            for pos, target in zip(cc.masked_positions, cc.targets):
                assert target.lang == ctx.utterances[pos].lang

    def test_mmug_rejects_monolingual(self, en_context):
        with pytest.raises(DataError):
            corrupt_context(en_context, LossMode.MMUG, seed=0)

    def test_record_round_trip(self, pair):
        cc = corrupt_context(pair, LossMode.MMUG, seed=3)
        assert CorruptedContext.from_record(cc.to_record()) == cc


class TestCorruptedContextInvariants:
    def test_no_masked_positions(self, en_context):
        with pytest.raises(DataError):
            CorruptedContext(en_context, (), (), LossMode.MUG)

    def test_slot_must_be_mask_run(self, en_context):
        with pytest.raises(DataError):
            CorruptedContext(en_context, (0,), (MaskedTarget((10, 20), EN),), LossMode.MUG)

    def test_tmug_survivors_must_be_monolingual(self, pair):
        mixed = pair.code_switched((1,))
        masked = mixed.replace_at(3, tokenized(MASK, lang=FR))
        with pytest.raises(DataError):
            CorruptedContext(masked, (3,), (MaskedTarget((34,), FR),), LossMode.TMUG)


def _check(cc: CorruptedContext, source_len: int):
    assert cc.masked_positions and len(cc.masked_positions) == len(cc.targets)
    assert list(cc.masked_positions) == sorted(set(cc.masked_positions))
    assert 0 <= cc.masked_positions[0] and cc.masked_positions[-1] < source_len
    for pos, target in zip(cc.masked_positions, cc.targets):
        assert cc.context.utterances[pos].tokens == (MASK,) * len(target.tokens)
    if cc.mode == LossMode.TMUG:
        assert len(cc.surviving_langs) <= 1
        assert not cc.surviving_langs & {t.lang for t in cc.targets}


@pytest.mark.parametrize("mode", list(LossMode))
def test_randomized_corruptions_keep_invariants(mode, contexts, pairs):
    rng = np.random.default_rng(11)
    # a pair translated in every slot code-switches to a monolingual context
    mixed = [p for p in pairs if len(p.translated_slots) < len(p.base)]
    pool = contexts if mode == LossMode.MUG else mixed
    for k in range(10_000):
        item = pool[k % len(pool)]
        p_c = float(rng.uniform(0.05, 1.0))
        cc = corrupt_context(item, mode, p_c=p_c, rng=rng)
        _check(cc, 5)
        source = item if mode == LossMode.MUG else item.code_switched()
        assert reconstruct(cc) == source
