# corpus/synthetic.py
"""Synthetic multilingual subtitle corpus with known structure.

Every movie talks in "utterance types" i in [0, N_TYPES). A conversation walks
the type cycle with a per-movie step, so any utterance is predictable from its
neighbours, and a foreign utterance breaks the walk. Each type renders to four
concept words plus one random marker word (m0..m3). A concept renders in
language L as `<concept>_<L>`, which gives a deterministic word-level
translation map between every pair of languages.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from core.seeding import substream
from corpus.alignment import align_movie
from corpus.segmenter import segment_conversations, window_contexts
from corpus.types import AlignedContextPair, AlignmentLink, Context, LanguageTag, TimedUtterance
from utils.jsonl import write_jsonl
from vocab.vocabulary import Vocabulary

logger = logging.getLogger(__name__)

N_TYPES = 8
STEPS = (1, 3, 5, 7)  # coprime with N_TYPES, so every walk visits all types
N_MARKERS = 4  # free word per utterance, unpredictable from the context


def type_concepts(i: int) -> list[str]:
    return [f"s{i % 4}", f"v{(i // 2) % 4}", f"o{i}", f"p{i % 2}"]


def render(concepts: Iterable[str], lang: LanguageTag) -> str:
    return " ".join(f"{c}_{lang.value}" for c in concepts)


def translate_text(text: str, src: "str | LanguageTag", tgt: "str | LanguageTag") -> str:
    """Word-level translation through the concept map; unknown words pass through"""
    src, tgt = LanguageTag.parse(src), LanguageTag.parse(tgt)
    suffix = f"_{src.value}"
    return " ".join(
        f"{word[: -len(suffix)]}_{tgt.value}" if word.endswith(suffix) else word for word in text.split()
    )


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    n_movies: int = 8
    conversations_per_movie: int = 4
    min_conversation_length: int = 5
    max_conversation_length: int = 8
    languages: tuple[LanguageTag, ...] = (LanguageTag.EN, LanguageTag.FR)
    link_coverage: float = 0.7
    high_conf_rate: float = 0.85
    seed: int = 0


@dataclass
class SyntheticCorpus:
    spec: SyntheticCorpusSpec
    # (movie_id, lang) -> time-ordered utterances
    streams: dict[tuple[str, LanguageTag], list[TimedUtterance]] = field(default_factory=dict)
    # (movie_id, src, tgt) -> movie-level links
    links: dict[tuple[str, LanguageTag, LanguageTag], list[AlignmentLink]] = field(default_factory=dict)
    # movie_id -> utterance type of every utterance, in stream order
    types: dict[str, list[int]] = field(default_factory=dict)

    @property
    def movie_ids(self) -> list[str]:
        return sorted(self.types)

    def texts(self) -> Iterable[str]:
        for key in sorted(self.streams, key=lambda k: (k[0], k[1].value)):
            for utt in self.streams[key]:
                yield utt.text


def generate_synthetic_corpus(spec: SyntheticCorpusSpec = SyntheticCorpusSpec()) -> SyntheticCorpus:
    corpus = SyntheticCorpus(spec)
    pivot = spec.languages[0]

    for m in range(spec.n_movies):
        movie_id = f"movie{m:03d}"
        rng = substream(spec.seed, "synthetic", m)
        step = int(rng.choice(STEPS))

        types: list[int] = []
        markers: list[int] = []
        timings: list[tuple[int, int]] = []
        clock = int(rng.integers(0, 5_000))

        for c in range(spec.conversations_per_movie):
            if c > 0:
                clock += int(rng.integers(8_000, 15_000))  # silence ending a conversation
            length = int(rng.integers(spec.min_conversation_length, spec.max_conversation_length + 1))
            current = int(rng.integers(0, N_TYPES))
            for k in range(length):
                if k > 0:
                    clock += int(rng.integers(200, 2_500))
                duration = int(rng.integers(800, 2_500))
                timings.append((clock, clock + duration))
                types.append(current)
                markers.append(int(rng.integers(N_MARKERS)))
                clock += duration
                current = (current + step) % N_TYPES

        corpus.types[movie_id] = types
        for lang in spec.languages:
            corpus.streams[(movie_id, lang)] = [
                TimedUtterance(render([*type_concepts(t), f"m{marker}"], lang), start, end, movie_id, lang)
                for t, marker, (start, end) in zip(types, markers, timings)
            ]

        for tgt in spec.languages[1:]:
            links = []
            for idx in range(len(types)):
                if rng.random() >= spec.link_coverage:
                    continue
                if rng.random() < spec.high_conf_rate:
                    conf = float(rng.uniform(0.9, 1.0))
                else:
                    conf = float(rng.uniform(0.3, 0.89))
                links.append(AlignmentLink(idx, idx, round(conf, 4)))
            corpus.links[(movie_id, pivot, tgt)] = links

    logger.debug(f"generated synthetic corpus: {spec.n_movies} movies, languages {[l.value for l in spec.languages]}")
    return corpus


def write_synthetic_corpus(corpus: SyntheticCorpus, directory: "str | Path") -> Path:
    """Emit the corpus in the canonical on-disk JSONL formats"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    for (movie_id, lang), utterances in corpus.streams.items():
        write_jsonl(
            directory / f"{movie_id}.{lang.value}.jsonl",
            ({"start_ms": u.start_ms, "end_ms": u.end_ms, "text": u.text} for u in utterances),
        )

    for (movie_id, src, tgt), links in corpus.links.items():
        write_jsonl(
            directory / f"{movie_id}.{src.value}-{tgt.value}.align.jsonl",
            ({"src": l.src_index, "tgt": l.tgt_index, "conf": l.confidence} for l in links),
        )

    return directory


def synthetic_contexts(
    corpus: SyntheticCorpus,
    vocab: Vocabulary,
    lang: Optional[LanguageTag] = None,
    T: int = 5,
    stride: int = 1,
    delta_t_ms: int = 6000,
) -> list[Context]:
    """Monolingual contexts through the real segment/window path"""
    lang = lang or corpus.spec.languages[0]
    contexts = []
    for movie_id in corpus.movie_ids:
        for conv in segment_conversations(corpus.streams[(movie_id, lang)], delta_t_ms):
            if len(conv) >= T:
                contexts.extend(window_contexts(conv, vocab, T=T, stride=stride))
    return contexts


def synthetic_pairs(
    corpus: SyntheticCorpus,
    vocab: Vocabulary,
    tgt: Optional[LanguageTag] = None,
    T: int = 5,
    stride: int = 1,
    min_conf: float = 0.9,
    delta_t_ms: int = 6000,
) -> list[AlignedContextPair]:
    """Aligned bilingual contexts through the real segment/join path"""
    src = corpus.spec.languages[0]
    tgt = tgt or corpus.spec.languages[1]
    pairs = []
    for movie_id in corpus.movie_ids:
        pairs.extend(
            align_movie(
                segment_conversations(corpus.streams[(movie_id, src)], delta_t_ms),
                segment_conversations(corpus.streams[(movie_id, tgt)], delta_t_ms),
                corpus.links[(movie_id, src, tgt)],
                vocab,
                min_conf=min_conf,
                T=T,
                stride=stride,
            )
        )
    return pairs
