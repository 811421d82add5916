# corpus/segmenter.py
import logging
from typing import Optional, Sequence

from core.errors import DataError
from corpus.types import Context, Conversation, TimedUtterance, TokenizedUtterance
from vocab.vocabulary import Vocabulary, encode

logger = logging.getLogger(__name__)


def segment_conversations(utts: Sequence[TimedUtterance], delta_t_ms: int = 6000) -> list[Conversation]:
    """
    Split one movie's time-ordered utterances into conversations.

    Two consecutive utterances belong to the same conversation iff the silence
    between them is strictly shorter than delta_t_ms, so a split happens
    exactly where start_ms[k+1] - end_ms[k] >= delta_t_ms.
    """
    if delta_t_ms <= 0:
        raise DataError(f"delta_t_ms must be positive, got {delta_t_ms}")
    if not utts:
        return []

    movie_id = utts[0].movie_id
    for prev, cur in zip(utts, utts[1:]):
        if cur.movie_id != movie_id:
            raise DataError(f"segment_conversations got several movies ({movie_id}, {cur.movie_id})")
        if cur.start_ms < prev.start_ms:
            raise DataError(f"utterances of {movie_id} are not time-ordered, sort them first")

    conversations = []
    current = [utts[0]]
    for prev, cur in zip(utts, utts[1:]):
        if cur.start_ms - prev.end_ms >= delta_t_ms:
            conversations.append(Conversation(tuple(current), movie_id))
            current = []
        current.append(cur)
    conversations.append(Conversation(tuple(current), movie_id))

    logger.debug(f"{movie_id}: {len(utts)} utterances -> {len(conversations)} conversations")
    return conversations


def tokenize_utterance(vocab: Vocabulary, utt: TimedUtterance, max_utt_tokens: int) -> TokenizedUtterance:
    return TokenizedUtterance(tuple(encode(vocab, utt.text)[:max_utt_tokens]), utt.lang)


def window_starts(n: int, T: int, stride: int) -> range:
    if T < 1 or stride < 1:
        raise DataError(f"T and stride must be >= 1 (got T={T}, stride={stride})")
    return range(0, n - T + 1, stride)


def window_contexts(
    conv: Conversation,
    vocab: Vocabulary,
    T: int = 5,
    stride: Optional[int] = None,
    max_utt_tokens: int = 50,
) -> list[Context]:
    """Cut a conversation into T-utterance contexts at offsets 0, stride, 2*stride, ..."""
    if not conv.utterances:
        raise DataError("window_contexts needs a non-empty conversation")

    stride = T if stride is None else stride
    tokenized = [tokenize_utterance(vocab, u, max_utt_tokens) for u in conv.utterances]

    return [
        Context(tuple(tokenized[start : start + T]), conv.movie_id).validate(T, max_utt_tokens)
        for start in window_starts(len(tokenized), T, stride)
    ]
