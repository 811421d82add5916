# corpus/types.py
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Optional

from core.errors import DataError


class LanguageTag(StrEnum):
    """Languages of the subtitle corpus"""

    DE = "de"
    EN = "en"
    ES = "es"
    FR = "fr"
    IT = "it"

    @classmethod
    def parse(cls, value: "str | LanguageTag") -> "LanguageTag":
        try:
            return cls(str(value).lower())
        except ValueError as e:
            raise DataError(f"Unknown language tag: {value!r}") from e


@dataclass(frozen=True)
class TimedUtterance:
    text: str
    start_ms: int
    end_ms: int
    movie_id: str
    lang: LanguageTag
    speaker: Optional[str] = None

    def __post_init__(self):
        normalized = " ".join(self.text.split())
        if not normalized:
            raise DataError("utterance text is empty after whitespace normalization")
        if self.end_ms < self.start_ms:
            raise DataError(f"end_ms ({self.end_ms}) < start_ms ({self.start_ms})")
        object.__setattr__(self, "text", normalized)


@dataclass(frozen=True)
class Conversation:
    utterances: tuple[TimedUtterance, ...]
    movie_id: str

    def __post_init__(self):
        object.__setattr__(self, "utterances", tuple(self.utterances))
        if any(u.movie_id != self.movie_id for u in self.utterances):
            raise DataError(f"conversation mixes movies (expected {self.movie_id})")

    def __len__(self):
        return len(self.utterances)

    @property
    def lang(self) -> Optional[LanguageTag]:
        return self.utterances[0].lang if self.utterances else None

    def gaps(self) -> list[int]:
        """Inter-pausal gaps between consecutive utterances, in ms"""
        return [b.start_ms - a.end_ms for a, b in zip(self.utterances, self.utterances[1:])]


@dataclass(frozen=True)
class TokenizedUtterance:
    tokens: tuple[int, ...]
    lang: LanguageTag

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        if not self.tokens:
            raise DataError("tokenized utterance is empty")

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True)
class Context:
    """A window of exactly T consecutive tokenized utterances from one movie"""

    utterances: tuple[TokenizedUtterance, ...]
    movie_id: str

    def __post_init__(self):
        object.__setattr__(self, "utterances", tuple(self.utterances))

    def __len__(self):
        return len(self.utterances)

    @property
    def langs(self) -> tuple[LanguageTag, ...]:
        return tuple(u.lang for u in self.utterances)

    @property
    def is_monolingual(self) -> bool:
        return len(set(self.langs)) == 1

    def validate(self, T: int, max_utt_tokens: int) -> "Context":
        if len(self.utterances) != T:
            raise DataError(f"context has {len(self.utterances)} utterances, expected T={T}")
        for k, utt in enumerate(self.utterances):
            if not 1 <= len(utt) <= max_utt_tokens:
                raise DataError(f"utterance {k} has {len(utt)} tokens, allowed [1, {max_utt_tokens}]")
        return self

    def replace_at(self, position: int, utterance: TokenizedUtterance) -> "Context":
        utterances = list(self.utterances)
        utterances[position] = utterance
        return Context(tuple(utterances), self.movie_id)


@dataclass(frozen=True)
class AlignmentLink:
    src_index: int
    tgt_index: int
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise DataError(f"alignment confidence {self.confidence} outside [0, 1]")
        if self.src_index < 0 or self.tgt_index < 0:
            raise DataError("alignment indices must be non-negative")


@dataclass(frozen=True)
class AlignedContextPair:
    base: Context
    translated: tuple[Optional[TokenizedUtterance], ...]
    lang_pair: tuple[LanguageTag, LanguageTag]
    # confidence of the link behind each translated slot, None where empty
    link_confidence: tuple[Optional[float], ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "translated", tuple(self.translated))
        if len(self.translated) != len(self.base):
            raise DataError("translated slots must match the base context length")
        src, tgt = self.lang_pair
        if src == tgt:
            raise DataError(f"aligned pair needs two languages, got {src}/{tgt}")
        for k, utt in enumerate(self.translated):
            if utt is not None and utt.lang != tgt:
                raise DataError(f"translated slot {k} is {utt.lang}, expected {tgt}")
        if not self.link_confidence:
            object.__setattr__(self, "link_confidence", (None,) * len(self.translated))

    @property
    def translated_slots(self) -> tuple[int, ...]:
        return tuple(k for k, utt in enumerate(self.translated) if utt is not None)

    def code_switched(self, slots: Optional[tuple[int, ...]] = None) -> Context:
        """Base context with translated utterances substituted at their slots"""
        chosen = self.translated_slots if slots is None else slots
        utterances = list(self.base.utterances)
        for k in chosen:
            if self.translated[k] is None:
                raise DataError(f"slot {k} has no translation")
            utterances[k] = self.translated[k]
        return Context(tuple(utterances), self.base.movie_id)
