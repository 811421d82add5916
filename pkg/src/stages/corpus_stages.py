# stages/corpus_stages.py
"""ingest -> segment -> vocab -> align: raw subtitle files to context shards"""
from collections import defaultdict
from typing import Any

from core.errors import DataError
from corpus.alignment import align_movie
from corpus.segmenter import segment_conversations, window_contexts
from corpus.shards import (
    HELDOUT,
    TRAIN,
    aligned_shard_name,
    conversation_record,
    monolingual_shard_name,
    record_to_conversation,
    segment_file_name,
    split_for_movie,
    utterance_record,
    write_context_shard,
)
from corpus.subtitles import discover_corpus, load_alignment_file, load_movie_streams
from corpus.types import LanguageTag
from stages.base import BaseStage
from utils.jsonl import iter_jsonl, write_json, write_jsonl
from vocab.vocabulary import Vocabulary, build_vocab

INGEST_DIR = "ingest"
SEGMENTS_DIR = "segments"
SHARDS_DIR = "shards"
VOCAB_FILE = "vocab.json"


class IngestStage(BaseStage):
    name = "ingest"
    help = "parse raw subtitle and alignment files into normalized JSONL"

    def _setup(self):
        self.streams, self.alignments = discover_corpus(self.config.corpus_dir)
        if not self.streams:
            raise DataError(f"no <movie>.<lang>.jsonl files in {self.config.corpus_dir}")
        for item in [*self.streams, *self.alignments]:
            self.record_input(item.path)

    def _run(self) -> dict[str, Any]:
        target = self.output_dir / INGEST_DIR
        summary: dict[str, Any] = {"streams": {}, "alignments": {}}

        for stream, parsed in load_movie_streams(self.streams, workers=self.config.workers):
            path = self.record_output(target / segment_file_name(stream.movie_id, stream.lang))
            write_jsonl(path, (utterance_record(u) for u in parsed.utterances))
            summary["streams"][path.name] = {"utterances": len(parsed.utterances), "skipped": parsed.skipped}

        for alignment in self.alignments:
            parsed = load_alignment_file(alignment)
            path = self.record_output(target / alignment.path.name)
            write_jsonl(path, ({"src": l.src_index, "tgt": l.tgt_index, "conf": l.confidence} for l in parsed.links))
            summary["alignments"][path.name] = {"links": len(parsed.links), "skipped": parsed.skipped}

        write_json(self.record_output(target / "summary.json"), summary)
        self.logger.info(f"ingested {len(self.streams)} streams and {len(self.alignments)} alignment files")
        return summary


class SegmentStage(BaseStage):
    name = "segment"
    help = "split every movie stream into conversations at silences >= delta_t_ms"

    def _setup(self):
        source = self.require(self.output_dir / INGEST_DIR, "ingest output (run `ingest` first)")
        self.streams, _ = discover_corpus(source)
        if not self.streams:
            raise DataError(f"no ingested streams in {source}")
        for stream in self.streams:
            self.record_input(stream.path)

    def _run(self) -> dict[str, int]:
        counts = {}
        for stream, parsed in load_movie_streams(self.streams, workers=self.config.workers):
            conversations = segment_conversations(parsed.utterances, self.config.delta_t_ms)
            path = self.record_output(self.output_dir / SEGMENTS_DIR / segment_file_name(stream.movie_id, stream.lang))
            write_jsonl(path, (conversation_record(c) for c in conversations))
            counts[path.name] = len(conversations)

        self.logger.info(f"{sum(counts.values())} conversations across {len(counts)} streams")
        return counts


def _segment_files(stage: BaseStage) -> list:
    source = stage.require(stage.output_dir / SEGMENTS_DIR, "segment output (run `segment` first)")
    files = sorted(source.glob("*.jsonl"))
    if not files:
        raise DataError(f"no segment files in {source}")
    return files


class VocabStage(BaseStage):
    name = "vocab"
    help = "build the shared multilingual vocabulary from segmented text"

    @classmethod
    def add_arguments(cls, parser):
        parser.add_argument(
            "--pin-lang",
            action="append",
            metavar="LANG=ID",
            help="fix a language token id, e.g. --pin-lang en=99 (repeatable)",
        )

    def _setup(self):
        self.pinned = {}
        for item in self.options.get("pin_lang") or []:
            lang, sep, idx = str(item).partition("=")
            if not sep or not idx.strip().isdigit():
                raise DataError(f"--pin-lang expects LANG=ID, got {item!r}")
            self.pinned[LanguageTag.parse(lang.strip()).value] = int(idx)
        self.files = [self.record_input(path) for path in _segment_files(self)]

    def _texts(self):
        for path in self.files:
            for record in iter_jsonl(path):
                for utt in record_to_conversation(record).utterances:
                    yield utt.text

    def _run(self) -> Vocabulary:
        vocab = build_vocab(self._texts(), self.config.vocab_max_size, self.pinned or None)
        vocab.save(self.record_output(self.output_dir / VOCAB_FILE))
        self.logger.info(f"vocabulary of {len(vocab)} tokens")
        return vocab


class AlignStage(BaseStage):
    name = "align"
    help = "window conversations into contexts and join aligned language pairs into shards"

    def _setup(self):
        self.vocab = Vocabulary.load(self.record_input(self.output_dir / VOCAB_FILE))
        self.conversations = {}
        for path in _segment_files(self):
            self.record_input(path)
            convs = [record_to_conversation(r) for r in iter_jsonl(path)]
            movie_id, _, lang = path.name.removesuffix(".jsonl").rpartition(".")
            self.conversations[(movie_id, LanguageTag.parse(lang))] = convs

        _, self.alignments = discover_corpus(self.output_dir / INGEST_DIR)
        for alignment in self.alignments:
            self.record_input(alignment.path)

    def _split(self, movie_id: str) -> str:
        return split_for_movie(movie_id, self.config.heldout_fraction, self.config.seed)

    def _run(self) -> dict[str, int]:
        cfg = self.config
        mono = defaultdict(list)
        for (movie_id, lang), convs in sorted(self.conversations.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
            for conv in convs:
                if len(conv) >= cfg.context_size:
                    mono[(self._split(movie_id), lang)].extend(
                        window_contexts(conv, self.vocab, cfg.context_size, cfg.window_stride, cfg.max_utt_tokens)
                    )

        aligned = defaultdict(list)
        for alignment in self.alignments:
            key_a, key_b = (alignment.movie_id, alignment.src_lang), (alignment.movie_id, alignment.tgt_lang)
            if key_a not in self.conversations or key_b not in self.conversations:
                raise DataError(f"{alignment.path.name}: no segmented stream for one of its languages")
            aligned[(self._split(alignment.movie_id), alignment.src_lang, alignment.tgt_lang)].extend(
                align_movie(
                    self.conversations[key_a],
                    self.conversations[key_b],
                    load_alignment_file(alignment).links,
                    self.vocab,
                    min_conf=cfg.min_conf,
                    T=cfg.context_size,
                    stride=cfg.window_stride,
                    max_utt_tokens=cfg.max_utt_tokens,
                )
            )

        # every split gets a file, possibly empty, so consumers can tell "no data" from "not aligned"
        langs = sorted({lang for _, lang in self.conversations}, key=lambda l: l.value)
        lang_pairs = sorted({(a.src_lang, a.tgt_lang) for a in self.alignments}, key=lambda p: (p[0].value, p[1].value))
        counts = {}
        shards = self.output_dir / SHARDS_DIR
        for split in (TRAIN, HELDOUT):
            for lang in langs:
                path = self.record_output(shards / monolingual_shard_name(split, lang))
                counts[path.name] = write_context_shard(path, mono[(split, lang)])
            for src, tgt in lang_pairs:
                path = self.record_output(shards / aligned_shard_name(split, src, tgt))
                counts[path.name] = write_context_shard(path, aligned[(split, src, tgt)])

        self.logger.info(", ".join(f"{name}: {n}" for name, n in counts.items()))
        return counts
