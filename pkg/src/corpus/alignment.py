# corpus/alignment.py
import logging
from typing import Optional, Sequence

from core.errors import DataError
from corpus.segmenter import tokenize_utterance, window_starts
from corpus.types import AlignedContextPair, AlignmentLink, Context, Conversation
from vocab.vocabulary import Vocabulary

logger = logging.getLogger(__name__)


def best_links(links: Sequence[AlignmentLink], min_conf: float) -> dict[int, AlignmentLink]:
    """Links at or above min_conf, one per source index (highest confidence wins)"""
    kept: dict[int, AlignmentLink] = {}
    for link in links:
        if link.confidence < min_conf:
            continue
        current = kept.get(link.src_index)
        # ties keep the lower target index so the result never depends on file order
        if (
            current is None
            or link.confidence > current.confidence
            or (link.confidence == current.confidence and link.tgt_index < current.tgt_index)
        ):
            kept[link.src_index] = link
    return kept


def join_alignments(
    conv_a: Conversation,
    conv_b: Conversation,
    links: Sequence[AlignmentLink],
    vocab: Vocabulary,
    min_conf: float = 0.9,
    T: int = 5,
    stride: Optional[int] = None,
    max_utt_tokens: int = 50,
) -> list[AlignedContextPair]:
    """
    Build bilingual contexts from two conversations of the same movie.

    Every T-window of conv_a becomes the base context; slot k is filled with
    the conv_b utterance its surviving link points at. Windows without any
    translated slot are discarded.
    """
    if not conv_a.utterances or not conv_b.utterances:
        return []

    lang_a, lang_b = conv_a.lang, conv_b.lang
    if lang_a == lang_b:
        raise DataError(f"join_alignments needs two languages, both conversations are {lang_a}")
    if conv_a.movie_id != conv_b.movie_id:
        raise DataError(f"cannot align {conv_a.movie_id} with {conv_b.movie_id}")

    for link in links:
        if link.src_index >= len(conv_a) or link.tgt_index >= len(conv_b):
            raise DataError(
                f"alignment link {link.src_index}->{link.tgt_index} outside conversations "
                f"of length {len(conv_a)}/{len(conv_b)}"
            )

    kept = best_links(links, min_conf)
    stride = T if stride is None else stride

    base = [tokenize_utterance(vocab, u, max_utt_tokens) for u in conv_a.utterances]
    target = [tokenize_utterance(vocab, u, max_utt_tokens) for u in conv_b.utterances]

    pairs = []
    for start in window_starts(len(base), T, stride):
        window_links = [kept.get(start + k) for k in range(T)]
        if not any(window_links):
            continue

        pairs.append(
            AlignedContextPair(
                base=Context(tuple(base[start : start + T]), conv_a.movie_id).validate(T, max_utt_tokens),
                translated=tuple(target[link.tgt_index] if link else None for link in window_links),
                lang_pair=(lang_a, lang_b),
                link_confidence=tuple(link.confidence if link else None for link in window_links),
            )
        )

    logger.debug(
        f"{conv_a.movie_id} {lang_a}-{lang_b}: {len(kept)}/{len(links)} links kept, {len(pairs)} aligned windows"
    )
    return pairs


def rebase_links(
    links: Sequence[AlignmentLink], src_offset: int, src_len: int, tgt_offset: int, tgt_len: int
) -> list[AlignmentLink]:
    """Movie-level links falling inside two conversations, re-indexed to them"""
    return [
        AlignmentLink(link.src_index - src_offset, link.tgt_index - tgt_offset, link.confidence)
        for link in links
        if src_offset <= link.src_index < src_offset + src_len
        and tgt_offset <= link.tgt_index < tgt_offset + tgt_len
    ]


def conversation_offsets(conversations: Sequence[Conversation]) -> list[int]:
    """Index of each conversation's first utterance in the movie stream"""
    offsets, running = [], 0
    for conv in conversations:
        offsets.append(running)
        running += len(conv)
    return offsets


def align_movie(
    convs_a: Sequence[Conversation],
    convs_b: Sequence[Conversation],
    links: Sequence[AlignmentLink],
    vocab: Vocabulary,
    min_conf: float = 0.9,
    T: int = 5,
    stride: Optional[int] = None,
    max_utt_tokens: int = 50,
) -> list[AlignedContextPair]:
    """
    Join two segmented streams of one movie through movie-level links.

    Each conv_a is paired with the conv_b holding most of its links of at
    least min_conf (lowest index on ties); links crossing that pair are dropped.
    """
    offsets_a, offsets_b = conversation_offsets(convs_a), conversation_offsets(convs_b)
    starts_b = [(offset, offset + len(conv)) for offset, conv in zip(offsets_b, convs_b)]

    pairs = []
    for conv_a, offset_a in zip(convs_a, offsets_a):
        if len(conv_a) < T:
            continue
        inside = [
            l for l in links if offset_a <= l.src_index < offset_a + len(conv_a) and l.confidence >= min_conf
        ]
        votes: dict[int, int] = {}
        for link in inside:
            for k, (lo, hi) in enumerate(starts_b):
                if lo <= link.tgt_index < hi:
                    votes[k] = votes.get(k, 0) + 1
                    break
        if not votes:
            continue

        k = min(votes, key=lambda idx: (-votes[idx], idx))
        local = rebase_links(inside, offset_a, len(conv_a), offsets_b[k], len(convs_b[k]))
        pairs.extend(
            join_alignments(
                conv_a, convs_b[k], local, vocab, min_conf=min_conf, T=T, stride=stride, max_utt_tokens=max_utt_tokens
            )
        )
    return pairs
