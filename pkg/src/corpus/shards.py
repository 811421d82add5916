# corpus/shards.py
import hashlib
from pathlib import Path
from typing import Any, Iterable, Union

from core.errors import DataError
from corpus.types import AlignedContextPair, Context, Conversation, LanguageTag, TimedUtterance, TokenizedUtterance
from utils.jsonl import iter_jsonl, write_jsonl

TRAIN, HELDOUT = "train", "heldout"


def split_for_movie(movie_id: str, heldout_fraction: float, seed: int) -> str:
    """Stable train/heldout assignment, a movie never lands in both splits"""
    digest = hashlib.sha256(f"{seed}:{movie_id}".encode("utf-8")).digest()
    u = int.from_bytes(digest[:8], "big") / float(1 << 64)
    return HELDOUT if u < heldout_fraction else TRAIN


def context_record(item: Union[Context, AlignedContextPair]) -> dict[str, Any]:
    if isinstance(item, AlignedContextPair):
        base = item.base
        return {
            "movie_id": base.movie_id,
            "langs": [lang.value for lang in base.langs],
            "utterances": [list(u.tokens) for u in base.utterances],
            "lang_pair": [lang.value for lang in item.lang_pair],
            "translated": [list(u.tokens) if u is not None else None for u in item.translated],
            "link_confidence": list(item.link_confidence),
        }

    return {
        "movie_id": item.movie_id,
        "langs": [lang.value for lang in item.langs],
        "utterances": [list(u.tokens) for u in item.utterances],
        "translated": None,
    }


def record_to_context(record: dict[str, Any]) -> Union[Context, AlignedContextPair]:
    try:
        base = Context(
            tuple(
                TokenizedUtterance(tuple(tokens), LanguageTag.parse(lang))
                for tokens, lang in zip(record["utterances"], record["langs"], strict=True)
            ),
            str(record["movie_id"]),
        )
        if record.get("translated") is None:
            return base

        src, tgt = (LanguageTag.parse(lang) for lang in record["lang_pair"])
        return AlignedContextPair(
            base=base,
            translated=tuple(
                TokenizedUtterance(tuple(tokens), tgt) if tokens is not None else None
                for tokens in record["translated"]
            ),
            lang_pair=(src, tgt),
            link_confidence=tuple(record.get("link_confidence") or ()),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"malformed context record: {e}") from e


def write_context_shard(path: "str | Path", items: Iterable[Union[Context, AlignedContextPair]]) -> int:
    return write_jsonl(path, (context_record(item) for item in items))


def read_context_shard(path: "str | Path") -> list[Union[Context, AlignedContextPair]]:
    return [record_to_context(record) for record in iter_jsonl(path)]


def monolingual_shard_name(split: str, lang: LanguageTag) -> str:
    return f"{split}.{lang.value}.jsonl"


def aligned_shard_name(split: str, src: LanguageTag, tgt: LanguageTag) -> str:
    return f"{split}.{src.value}-{tgt.value}.jsonl"


def utterance_record(utt: TimedUtterance) -> dict[str, Any]:
    record: dict[str, Any] = {"start_ms": utt.start_ms, "end_ms": utt.end_ms, "text": utt.text}
    if utt.speaker is not None:
        record["speaker"] = utt.speaker
    return record


def conversation_record(conv: Conversation) -> dict[str, Any]:
    return {
        "movie_id": conv.movie_id,
        "lang": conv.lang.value if conv.lang else None,
        "utterances": [utterance_record(u) for u in conv.utterances],
    }


def record_to_conversation(record: dict[str, Any]) -> Conversation:
    try:
        movie_id, lang = str(record["movie_id"]), LanguageTag.parse(record["lang"])
        return Conversation(
            tuple(
                TimedUtterance(u["text"], int(u["start_ms"]), int(u["end_ms"]), movie_id, lang, u.get("speaker"))
                for u in record["utterances"]
            ),
            movie_id,
        )
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"malformed conversation record: {e}") from e


def segment_file_name(movie_id: str, lang: LanguageTag) -> str:
    return f"{movie_id}.{lang.value}.jsonl"
