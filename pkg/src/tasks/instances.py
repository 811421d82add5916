# tasks/instances.py
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any, Callable, Iterable, Optional, Sequence, Union

import numpy as np

from core.errors import DataError
from core.seeding import derive_seed, round_half_up, substream
from corpus.types import AlignedContextPair, Context, LanguageTag, TokenizedUtterance

logger = logging.getLogger(__name__)

DEFAULT_DISTRACTORS = 9


class TaskName(StrEnum):
    II = "ii"
    NUR = "nur"
    MII = "mii"
    MNUR = "mnur"

    @property
    def multilingual(self) -> bool:
        return self in (TaskName.MII, TaskName.MNUR)

    @property
    def base(self) -> "TaskName":
        return TaskName.II if self in (TaskName.II, TaskName.MII) else TaskName.NUR


def _utterance_record(utt: TokenizedUtterance) -> dict[str, Any]:
    return {"tokens": list(utt.tokens), "lang": utt.lang.value}


def _utterance_from_record(record: dict[str, Any]) -> TokenizedUtterance:
    return TokenizedUtterance(tuple(record["tokens"]), LanguageTag.parse(record["lang"]))


def _context_from_record(record: dict[str, Any]) -> Context:
    return Context(
        tuple(
            TokenizedUtterance(tuple(tokens), LanguageTag.parse(lang))
            for tokens, lang in zip(record["context_tokens"], record["langs"], strict=True)
        ),
        str(record.get("movie_id", "")),
    )


@dataclass(frozen=True)
class InconsistencyInstance:
    """A context with the utterance at `label` swapped for another one of the same movie"""

    context: Context
    label: int
    task: TaskName = TaskName.II
    seed: Optional[int] = None
    original: Optional[TokenizedUtterance] = field(default=None, compare=False)

    def __post_init__(self):
        if not 0 <= self.label < len(self.context):
            raise DataError(f"label {self.label} outside context of length {len(self.context)}")

    def to_record(self) -> dict[str, Any]:
        return {
            "task": self.task.value,
            "movie_id": self.context.movie_id,
            "context_tokens": [list(u.tokens) for u in self.context.utterances],
            "langs": [u.lang.value for u in self.context.utterances],
            "label": self.label,
            "seed": self.seed,
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "InconsistencyInstance":
        try:
            return cls(_context_from_record(record), int(record["label"]), TaskName(record["task"]), record.get("seed"))
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"malformed II instance record: {e}") from e


@dataclass(frozen=True)
class RetrievalInstance:
    """First T-1 utterances of a context and D+1 candidates for the next one"""

    context: Context
    candidates: tuple[TokenizedUtterance, ...]
    label: int
    task: TaskName = TaskName.NUR
    seed: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if not 0 <= self.label < len(self.candidates):
            raise DataError(f"label {self.label} outside {len(self.candidates)} candidates")

    @property
    def langs(self) -> tuple[LanguageTag, ...]:
        return self.context.langs

    @property
    def answer(self) -> TokenizedUtterance:
        return self.candidates[self.label]

    def to_record(self) -> dict[str, Any]:
        return {
            "task": self.task.value,
            "movie_id": self.context.movie_id,
            "context_tokens": [list(u.tokens) for u in self.context.utterances],
            "langs": [u.lang.value for u in self.context.utterances],
            "candidates": [_utterance_record(c) for c in self.candidates],
            "label": self.label,
            "seed": self.seed,
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "RetrievalInstance":
        try:
            return cls(
                _context_from_record(record),
                tuple(_utterance_from_record(c) for c in record["candidates"]),
                int(record["label"]),
                TaskName(record["task"]),
                record.get("seed"),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"malformed NUR instance record: {e}") from e


def instance_from_record(record: dict[str, Any]) -> Union[InconsistencyInstance, RetrievalInstance]:
    if "candidates" in record:
        return RetrievalInstance.from_record(record)
    return InconsistencyInstance.from_record(record)


class UtterancePool:
    """Distinct utterances per (movie, language), in first-seen order"""

    def __init__(self):
        self._pool: dict[tuple[str, LanguageTag], list[TokenizedUtterance]] = defaultdict(list)
        self._seen: dict[tuple[str, LanguageTag], set[tuple[int, ...]]] = defaultdict(set)

    def add(self, movie_id: str, utt: TokenizedUtterance):
        key = (movie_id, utt.lang)
        if utt.tokens not in self._seen[key]:
            self._seen[key].add(utt.tokens)
            self._pool[key].append(utt)

    def utterances(self, movie_id: str, lang: LanguageTag) -> list[TokenizedUtterance]:
        return list(self._pool.get((movie_id, lang), ()))

    def __len__(self):
        return sum(len(v) for v in self._pool.values())

    @classmethod
    def from_items(cls, items: Iterable[Union[Context, AlignedContextPair]]) -> "UtterancePool":
        pool = cls()
        for item in items:
            base = item.base if isinstance(item, AlignedContextPair) else item
            for utt in base.utterances:
                pool.add(base.movie_id, utt)
            if isinstance(item, AlignedContextPair):
                for utt in item.translated:
                    if utt is not None:
                        pool.add(base.movie_id, utt)
        return pool


# (eligible utterances, count, rng) -> count distinct utterances
DistractorSampler = Callable[[Sequence[TokenizedUtterance], int, np.random.Generator], list[TokenizedUtterance]]


def uniform_distractors(
    eligible: Sequence[TokenizedUtterance], count: int, rng: np.random.Generator
) -> list[TokenizedUtterance]:
    if len(eligible) < count:
        raise DataError(f"need {count} distractors, only {len(eligible)} eligible")
    picks = rng.choice(len(eligible), size=count, replace=False)
    return [eligible[int(i)] for i in picks]


def _eligible(pool: UtterancePool, movie_id: str, lang: LanguageTag, exclude: set[tuple[int, ...]]) -> list[TokenizedUtterance]:
    return [u for u in pool.utterances(movie_id, lang) if u.tokens not in exclude]


def code_switch_slots(
    pair: AlignedContextPair, count: int, rng: np.random.Generator, within: Optional[int] = None
) -> Optional[tuple[int, ...]]:
    """`count` random translated slots among the first `within` positions, None if too few"""
    limit = len(pair.base) if within is None else within
    available = [k for k in pair.translated_slots if k < limit]
    if len(available) < count:
        return None
    return tuple(sorted(int(k) for k in rng.choice(available, size=count, replace=False))) if count else ()


def make_ii(
    contexts: Sequence[Union[Context, AlignedContextPair]],
    pool: UtterancePool,
    p_lprime: float = 0.0,
    seed: int = 0,
    sampler: DistractorSampler = uniform_distractors,
) -> list[InconsistencyInstance]:
    """
    One II instance per context: a uniform random slot is replaced by a
    different utterance of the same movie and language. For mII,
    round(p_lprime * T) aligned slots are swapped to L' first.
    """
    if len(pool) == 0:
        raise DataError("empty utterance pool")
    task = TaskName.MII if p_lprime > 0 else TaskName.II

    instances, skipped = [], 0
    for ordinal, item in enumerate(contexts):
        rng = substream(seed, "ii", ordinal)
        context = item.base if isinstance(item, AlignedContextPair) else item

        if task.multilingual:
            if not isinstance(item, AlignedContextPair):
                raise DataError("mII needs aligned context pairs")
            slots = code_switch_slots(item, round_half_up(p_lprime * len(context)), rng)
            if slots is None:
                skipped += 1
                continue
            context = item.code_switched(slots)

        label = int(rng.integers(len(context)))
        original = context.utterances[label]
        eligible = _eligible(pool, context.movie_id, original.lang, {original.tokens})
        if not eligible:
            raise DataError(f"no replacement for movie {context.movie_id} ({original.lang}) in the pool")
        replacement = sampler(eligible, 1, rng)[0]

        instances.append(
            InconsistencyInstance(
                context.replace_at(label, replacement), label, task, derive_seed(seed, "ii", ordinal), original
            )
        )

    if skipped:
        logger.warning(f"{task}: skipped {skipped} pairs with too few aligned slots")
    return instances


def make_nur(
    contexts: Sequence[Union[Context, AlignedContextPair]],
    pool: UtterancePool,
    distractors: int = DEFAULT_DISTRACTORS,
    p_lprime: float = 0.0,
    seed: int = 0,
    sampler: DistractorSampler = uniform_distractors,
) -> list[RetrievalInstance]:
    """
    One NUR instance per context: the first T-1 utterances, the true T-th one
    and D same-movie distractors, shuffled. For mNUR, round(p_lprime * (T-1))
    context utterances are swapped to L' and each distractor's language is
    drawn uniformly from {L, L'}.
    """
    if distractors < 1:
        raise DataError("need at least one distractor")
    task = TaskName.MNUR if p_lprime > 0 else TaskName.NUR

    instances, skipped = [], 0
    for ordinal, item in enumerate(contexts):
        rng = substream(seed, "nur", ordinal)
        context = item.base if isinstance(item, AlignedContextPair) else item
        langs = [context.utterances[-1].lang]

        if task.multilingual:
            if not isinstance(item, AlignedContextPair):
                raise DataError("mNUR needs aligned context pairs")
            prefix = len(context) - 1
            slots = code_switch_slots(item, round_half_up(p_lprime * prefix), rng, within=prefix)
            if slots is None:
                skipped += 1
                continue
            context = item.code_switched(slots)
            langs = list(item.lang_pair)

        answer = context.utterances[-1]
        exclude = {answer.tokens}
        if task.multilingual and item.translated[-1] is not None:
            # the answer in L' would be a second correct candidate
            exclude.add(item.translated[-1].tokens)
        if len(langs) == 1:
            chosen = sampler(_eligible(pool, context.movie_id, langs[0], exclude), distractors, rng)
        else:
            per_lang = rng.integers(len(langs), size=distractors)
            chosen = []
            for k, lang in enumerate(langs):
                count = int(np.sum(per_lang == k))
                if count:
                    chosen.extend(sampler(_eligible(pool, context.movie_id, lang, exclude), count, rng))

        candidates = [answer, *chosen]
        order = rng.permutation(len(candidates))
        shuffled = tuple(candidates[int(i)] for i in order)
        label = int(np.flatnonzero(order == 0)[0])

        instances.append(
            RetrievalInstance(
                Context(context.utterances[:-1], context.movie_id), shuffled, label, task, derive_seed(seed, "nur", ordinal)
            )
        )

    if skipped:
        logger.warning(f"{task}: skipped {skipped} pairs with too few aligned slots")
    return instances
