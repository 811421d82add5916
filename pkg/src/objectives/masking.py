# objectives/masking.py
import logging
from dataclasses import dataclass
from enum import StrEnum
from typing import Any, Optional, Sequence, Union

import numpy as np

from core.errors import DataError
from core.seeding import round_half_up
from corpus.types import AlignedContextPair, Context, LanguageTag, TokenizedUtterance
from vocab.vocabulary import MASK

logger = logging.getLogger(__name__)


class LossMode(StrEnum):
    MUG = "MUG"  # masked utterance generation, monolingual context
    TMUG = "TMUG"  # translate the L' utterances of a bilingual context
    MMUG = "MMUG"  # generate masked utterances of a multilingual context


def mask_count(proportion: float, length: int) -> int:
    return max(1, round_half_up(proportion * length))


def _check_proportion(name: str, value: float):
    if not 0.0 < value <= 1.0:
        raise DataError(f"{name} must be in (0, 1], got {value}")


def _rng(rng: Optional[np.random.Generator], seed: Optional[int]) -> np.random.Generator:
    if rng is not None:
        return rng
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class MaskPlan:
    """Token-level corruption of one utterance (MUM)"""

    masked_token_positions: tuple[int, ...]
    target_tokens: tuple[int, ...]

    def apply(self, utt: Sequence[int]) -> list[int]:
        masked = list(utt)
        for pos in self.masked_token_positions:
            masked[pos] = MASK
        return masked


def plan_token_masks(
    utt: Sequence[int],
    p_omega: float = 0.15,
    rng: Optional[np.random.Generator] = None,
    seed: Optional[int] = None,
) -> MaskPlan:
    """Mask max(1, round(p_omega * |u|)) distinct positions, uniformly"""
    if len(utt) < 1:
        raise DataError("cannot plan masks for an empty utterance")
    _check_proportion("p_omega", p_omega)

    rng = _rng(rng, seed)
    k = mask_count(p_omega, len(utt))
    positions = tuple(sorted(int(p) for p in rng.choice(len(utt), size=k, replace=False)))
    return MaskPlan(positions, tuple(int(utt[p]) for p in positions))


@dataclass(frozen=True)
class MaskedTarget:
    tokens: tuple[int, ...]
    lang: LanguageTag

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        if not self.tokens:
            raise DataError("masked target is empty")


@dataclass(frozen=True)
class CorruptedContext:
    """
    A context whose masked utterances were replaced by MASK runs.

    `context` is what the encoder sees; `targets[i]` is what the decoder must
    generate at `masked_positions[i]`, in `targets[i].lang`.
    """

    context: Context
    masked_positions: tuple[int, ...]
    targets: tuple[MaskedTarget, ...]
    mode: LossMode
    seed: Optional[int] = None

    def __post_init__(self):
        T = len(self.context)
        positions = tuple(int(p) for p in self.masked_positions)
        object.__setattr__(self, "masked_positions", positions)
        object.__setattr__(self, "targets", tuple(self.targets))

        if not positions:
            raise DataError("a corrupted context needs at least one masked position")
        if list(positions) != sorted(set(positions)) or positions[0] < 0 or positions[-1] >= T:
            raise DataError(f"masked positions {positions} must be sorted, distinct and in [0, {T})")
        if len(self.targets) != len(positions):
            raise DataError("one target per masked position")

        for pos, target in zip(positions, self.targets):
            slot = self.context.utterances[pos]
            if slot.tokens != (MASK,) * len(target.tokens):
                raise DataError(f"slot {pos} is not a MASK run of the target length")

        if self.mode == LossMode.TMUG:
            survivors = {u.lang for k, u in enumerate(self.context.utterances) if k not in positions}
            if len(survivors) > 1:
                raise DataError(f"TMUG survivors must be monolingual, got {sorted(survivors)}")
            if survivors & {t.lang for t in self.targets}:
                raise DataError("TMUG targets must be in a language other than the survivors'")

    @property
    def surviving_langs(self) -> set[LanguageTag]:
        return {u.lang for k, u in enumerate(self.context.utterances) if k not in self.masked_positions}

    def to_record(self) -> dict[str, Any]:
        return {
            "movie_id": self.context.movie_id,
            "context_tokens": [list(u.tokens) for u in self.context.utterances],
            "langs": [u.lang.value for u in self.context.utterances],
            "masked_positions": list(self.masked_positions),
            "targets": [{"tokens": list(t.tokens), "lang": t.lang.value} for t in self.targets],
            "mode": self.mode.value,
            "seed": self.seed,
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "CorruptedContext":
        try:
            context = Context(
                tuple(
                    TokenizedUtterance(tuple(tokens), LanguageTag.parse(lang))
                    for tokens, lang in zip(record["context_tokens"], record["langs"], strict=True)
                ),
                str(record.get("movie_id", "")),
            )
            return cls(
                context=context,
                masked_positions=tuple(record["masked_positions"]),
                targets=tuple(MaskedTarget(tuple(t["tokens"]), LanguageTag.parse(t["lang"])) for t in record["targets"]),
                mode=LossMode(record["mode"]),
                seed=record.get("seed"),
            )
        except (KeyError, TypeError) as e:
            raise DataError(f"malformed corrupted-context record: {e}") from e


def _mask(source: Context, positions: Sequence[int], mode: LossMode, seed: Optional[int]) -> CorruptedContext:
    utterances = list(source.utterances)
    targets = []
    for pos in positions:
        original = source.utterances[pos]
        targets.append(MaskedTarget(original.tokens, original.lang))
        utterances[pos] = TokenizedUtterance((MASK,) * len(original), original.lang)

    return CorruptedContext(
        context=Context(tuple(utterances), source.movie_id),
        masked_positions=tuple(positions),
        targets=tuple(targets),
        mode=mode,
        seed=seed,
    )


def _random_positions(T: int, p_c: float, rng: np.random.Generator) -> list[int]:
    k = mask_count(p_c, T)
    return sorted(int(p) for p in rng.choice(T, size=min(k, T), replace=False))


def corrupt_context(
    ctx: Union[Context, AlignedContextPair],
    mode: "LossMode | str",
    p_c: float = 0.2,
    rng: Optional[np.random.Generator] = None,
    seed: Optional[int] = None,
) -> CorruptedContext:
    """
    Build the encoder input and decoder targets of one dialog-level loss.

    MUG masks max(1, round(p_c * T)) random slots of a monolingual context.
    TMUG masks exactly the L' slots of the code-switched pair, leaving a
    monolingual L context; pairs translated in every slot are rejected. MMUG masks random slots of a multilingual context
    (a pair is code-switched first); each target keeps its own language.
    """
    mode = LossMode(str(mode).upper())
    _check_proportion("p_c", p_c)
    rng = _rng(rng, seed)

    if mode == LossMode.MUG:
        source = ctx.base if isinstance(ctx, AlignedContextPair) else ctx
        if not source.is_monolingual:
            raise DataError("MUG needs a monolingual context")
        return _mask(source, _random_positions(len(source), p_c, rng), mode, seed)

    if mode == LossMode.TMUG:
        if not isinstance(ctx, AlignedContextPair):
            raise DataError("TMUG needs an aligned context pair")
        if not ctx.translated_slots:
            raise DataError("TMUG needs at least one translated slot")
        if len(ctx.translated_slots) == len(ctx.base):
            raise DataError("TMUG needs at least one untranslated slot to translate from")
        if not ctx.base.is_monolingual:
            raise DataError("TMUG needs a monolingual base context")
        return _mask(ctx.code_switched(), ctx.translated_slots, mode, seed)

    source = ctx.code_switched() if isinstance(ctx, AlignedContextPair) else ctx
    if source.is_monolingual:
        raise DataError("MMUG needs a multilingual context")
    return _mask(source, _random_positions(len(source), p_c, rng), mode, seed)


def reconstruct(cc: CorruptedContext) -> Context:
    """Put the targets back into their slots"""
    utterances = list(cc.context.utterances)
    for pos, target in zip(cc.masked_positions, cc.targets):
        utterances[pos] = TokenizedUtterance(target.tokens, target.lang)
    return Context(tuple(utterances), cc.context.movie_id)
