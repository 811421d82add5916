# tests/test_corpus.py
import io
import json
import math

import pytest

from conftest import timed
from core.errors import DataError
from corpus.alignment import align_movie, best_links, join_alignments
from corpus.segmenter import segment_conversations, window_contexts
from corpus.shards import (
    HELDOUT,
    TRAIN,
    read_context_shard,
    record_to_conversation,
    conversation_record,
    split_for_movie,
    write_context_shard,
)
from corpus.subtitles import discover_corpus, load_movie_streams, parse_alignment_stream, parse_subtitle_stream
from corpus.types import AlignmentLink, Conversation, LanguageTag
from vocab.vocabulary import build_vocab


def jsonl(*records) -> io.BytesIO:
    lines = [r if isinstance(r, str) else json.dumps(r) for r in records]
    return io.BytesIO(("\n".join(lines) + "\n").encode("utf-8"))


def conversation(texts, lang=LanguageTag.EN, movie="m1", gap=500, duration=1000) -> Conversation:
    utts, clock = [], 0
    for text in texts:
        utts.append(timed(text, clock, clock + duration, movie, lang))
        clock += duration + gap
    return Conversation(tuple(utts), movie)


class TestParseSubtitleStream:
    def test_two_lines_in_time_order(self):
        parsed = parse_subtitle_stream(
            jsonl({"start_ms": 3000, "end_ms": 4000, "text": "b"}, {"start_ms": 0, "end_ms": 1000, "text": "a"}),
            "en",
            "m1",
        )
        assert [u.text for u in parsed.utterances] == ["a", "b"]
        assert parsed.skipped == 0

    def test_end_before_start_is_skipped(self):
        parsed = parse_subtitle_stream(
            jsonl({"start_ms": 10, "end_ms": 5, "text": "bad"}, {"start_ms": 20, "end_ms": 30, "text": "ok"}), "en", "m1"
        )
        assert [u.text for u in parsed.utterances] == ["ok"]
        assert parsed.skipped == 1

    def test_empty_stream(self):
        parsed = parse_subtitle_stream(io.BytesIO(b""), "en", "m1")
        assert parsed.utterances == [] and parsed.skipped == 0

    def test_malformed_lines_counted(self):
        parsed = parse_subtitle_stream(
            jsonl(
                "{not json",
                {"start_ms": "0", "end_ms": 10, "text": "x"},
                {"start_ms": 0, "end_ms": 10, "text": "   "},
                {"start_ms": 0, "end_ms": 10},
                {"start_ms": 0, "end_ms": 10, "text": "  keep   me ", "speaker": "ANNA"},
            ),
            "en",
            "m1",
        )
        assert parsed.skipped == 4
        assert parsed.utterances[0].text == "keep me"
        assert parsed.utterances[0].speaker == "ANNA"

    def test_unknown_language(self):
        with pytest.raises(DataError):
            parse_subtitle_stream(io.BytesIO(b""), "pt", "m1")


def test_parse_alignment_stream_skips_out_of_range_confidence():
    parsed = parse_alignment_stream(
        jsonl({"src": 0, "tgt": 1, "conf": 0.95}, {"src": 1, "tgt": 2, "conf": 1.5}, {"src": "x", "tgt": 0, "conf": 1})
    )
    assert parsed.links == [AlignmentLink(0, 1, 0.95)]
    assert parsed.skipped == 2


class TestSegmentConversations:
    @staticmethod
    def with_gaps(gaps):
        utts, clock = [timed("u0", 0, 1000)], 1000
        for k, gap in enumerate(gaps, start=1):
            clock += gap
            utts.append(timed(f"u{k}", clock, clock + 1000))
            clock += 1000
        return utts

    def test_split_at_long_gap(self):
        convs = segment_conversations(self.with_gaps([1000, 7000, 500]), 6000)
        assert [len(c) for c in convs] == [2, 2]

    def test_short_gaps_keep_one_conversation(self):
        assert len(segment_conversations(self.with_gaps([100, 5999, 3000]), 6000)) == 1

    def test_gap_equal_to_threshold_splits(self):
        assert [len(c) for c in segment_conversations(self.with_gaps([6000]), 6000)] == [1, 1]

    def test_empty(self):
        assert segment_conversations([], 6000) == []

    def test_idempotent(self):
        utts = self.with_gaps([100, 8000, 200, 300, 9000, 10])
        convs = segment_conversations(utts, 6000)
        again = segment_conversations([u for c in convs for u in c.utterances], 6000)
        assert again == convs
        assert sum(len(c) for c in convs) == len(utts)

    def test_rejects_unsorted_input(self):
        with pytest.raises(DataError):
            segment_conversations([timed("a", 500, 600), timed("b", 0, 100)], 6000)


class TestWindowContexts:
    def test_trailing_utterances_dropped(self):
        texts = [f"w{k}" for k in range(12)]
        vocab = build_vocab(texts, max_size=100)
        contexts = window_contexts(conversation(texts), vocab, T=5, stride=5)
        assert len(contexts) == 2
        assert all(len(c) == 5 for c in contexts)

    def test_short_conversation_gives_nothing(self):
        vocab = build_vocab(["a"], max_size=100)
        assert window_contexts(conversation(["a"] * 4), vocab, T=5) == []

    def test_long_utterance_trimmed(self):
        long_text = " ".join(f"t{k}" for k in range(80))
        vocab = build_vocab([long_text], max_size=1000)
        contexts = window_contexts(conversation([long_text] * 5), vocab, T=5, max_utt_tokens=50)
        assert all(len(u) == 50 for u in contexts[0].utterances)

    def test_overlapping_windows_with_stride_one(self):
        vocab = build_vocab(["a"], max_size=100)
        assert len(window_contexts(conversation(["a"] * 7), vocab, T=5, stride=1)) == 3


class TestJoinAlignments:
    @pytest.fixture
    def convs(self):
        en = conversation([f"e{k}" for k in range(5)], LanguageTag.EN)
        fr = conversation([f"f{k}" for k in range(5)], LanguageTag.FR)
        vocab = build_vocab([*(f"e{k}" for k in range(5)), *(f"f{k}" for k in range(5))], max_size=100)
        return en, fr, vocab

    def test_translated_slots_follow_high_confidence_links(self, convs):
        en, fr, vocab = convs
        links = [AlignmentLink(1, 1, 0.95), AlignmentLink(3, 3, 0.99), AlignmentLink(4, 4, 0.9), AlignmentLink(2, 2, 0.5)]
        (pair,) = join_alignments(en, fr, links, vocab, min_conf=0.9)
        assert pair.translated_slots == (1, 3, 4)
        assert pair.lang_pair == (LanguageTag.EN, LanguageTag.FR)
        assert pair.link_confidence[2] is None

    def test_low_confidence_only_gives_nothing(self, convs):
        en, fr, vocab = convs
        assert join_alignments(en, fr, [AlignmentLink(k, k, 0.5) for k in range(5)], vocab) == []

    def test_duplicate_source_keeps_best_link(self):
        kept = best_links([AlignmentLink(2, 1, 0.91), AlignmentLink(2, 3, 0.95)], 0.9)
        assert kept[2].tgt_index == 3 and kept[2].confidence == 0.95

    def test_same_language_rejected(self, convs):
        en, _, vocab = convs
        with pytest.raises(DataError):
            join_alignments(en, en, [], vocab)


def test_align_movie_rebases_movie_level_links():
    en = [conversation([f"e{k}" for k in range(5)]), conversation([f"e{k}" for k in range(5, 10)])]
    fr = [
        conversation([f"f{k}" for k in range(5)], LanguageTag.FR),
        conversation([f"f{k}" for k in range(5, 10)], LanguageTag.FR),
    ]
    vocab = build_vocab([f"{p}{k}" for p in "ef" for k in range(10)], max_size=100)
    pairs = align_movie(en, fr, [AlignmentLink(6, 6, 0.99), AlignmentLink(8, 9, 0.97)], vocab, T=5)

    assert len(pairs) == 1
    pair = pairs[0]
    assert pair.translated_slots == (1, 3)
    assert pair.translated[3].tokens == (vocab.token_to_id["f9"],)


def test_align_movie_votes_with_confident_links_only():
    en = [conversation([f"e{k}" for k in range(5)])]
    fr = [
        conversation([f"f{k}" for k in range(5)], LanguageTag.FR),
        conversation([f"f{k}" for k in range(5, 10)], LanguageTag.FR),
    ]
    vocab = build_vocab([f"{p}{k}" for p in "ef" for k in range(10)], max_size=100)
    weak = [AlignmentLink(k, 5 + k, 0.5) for k in range(3)]
    pairs = align_movie(en, fr, [*weak, AlignmentLink(4, 4, 0.95)], vocab, T=5)

    assert len(pairs) == 1
    assert pairs[0].translated_slots == (4,)
    assert pairs[0].translated[4].tokens == (vocab.token_to_id["f4"],)

class TestShards:
    def test_split_is_stable_and_exclusive(self):
        splits = {m: split_for_movie(m, 0.3, seed=1) for m in (f"movie{k}" for k in range(200))}
        assert splits == {m: split_for_movie(m, 0.3, seed=1) for m in splits}
        assert set(splits.values()) == {TRAIN, HELDOUT}
        assert math.isclose(sum(s == HELDOUT for s in splits.values()) / 200, 0.3, abs_tol=0.1)

    def test_shard_round_trip(self, tmp_path, contexts, pairs):
        path = tmp_path / "shard.jsonl"
        write_context_shard(path, [*contexts[:3], *pairs[:3]])
        assert read_context_shard(path) == [*contexts[:3], *pairs[:3]]

    def test_conversation_record_round_trip(self):
        conv = conversation(["a b", "c"], LanguageTag.FR)
        assert record_to_conversation(conversation_record(conv)) == conv

    def test_malformed_record(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"movie_id": "m"}\n')
        with pytest.raises(DataError):
            read_context_shard(path)


class TestSyntheticCorpus:
    def test_files_are_discovered(self, corpus_dir, synthetic_corpus):
        streams, alignments = discover_corpus(corpus_dir)
        assert len(streams) == len(synthetic_corpus.streams)
        assert len(alignments) == len(synthetic_corpus.links)

    def test_parallel_load_matches_serial(self, corpus_dir):
        streams, _ = discover_corpus(corpus_dir)
        assert load_movie_streams(streams, workers=4) == load_movie_streams(streams, workers=1)

    def test_pairs_carry_translations(self, pairs):
        assert pairs
        assert all(p.translated_slots for p in pairs)
        assert all(p.base.is_monolingual for p in pairs)
        assert any(not p.code_switched().is_monolingual for p in pairs)

    def test_generation_is_deterministic(self, synthetic_corpus):
        from corpus.synthetic import SyntheticCorpusSpec, generate_synthetic_corpus

        assert generate_synthetic_corpus(SyntheticCorpusSpec(seed=0)).streams == synthetic_corpus.streams

    def test_translation_follows_the_concept_map(self, synthetic_corpus):
        from corpus.synthetic import translate_text

        assert translate_text("s0_en m1_en", "en", "fr") == "s0_fr m1_fr"
        assert translate_text("hello s0_en", "en", "fr") == "hello s0_fr"
        movie_id = synthetic_corpus.movie_ids[0]
        en = synthetic_corpus.streams[(movie_id, LanguageTag.EN)]
        fr = synthetic_corpus.streams[(movie_id, LanguageTag.FR)]
        assert [translate_text(u.text, "en", "fr") for u in en] == [u.text for u in fr]
