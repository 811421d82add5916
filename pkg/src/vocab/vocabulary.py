# vocab/vocabulary.py
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional

from core.errors import DataError
from corpus.types import LanguageTag

logger = logging.getLogger(__name__)

PAD, UNK, MASK, BOS, EOS = 0, 1, 2, 3, 4
SPECIALS: Dict[str, int] = {"PAD": PAD, "UNK": UNK, "MASK": MASK, "BOS": BOS, "EOS": EOS}
SPECIAL_STRINGS = {name: f"[{name}]" for name in SPECIALS}


def lang_string(lang: LanguageTag) -> str:
    return f"<{lang.value}>"


def tokenize(text: str) -> List[str]:
    """Whitespace word tokenizer, lowercased"""
    return text.lower().split()


@dataclass(frozen=True)
class Vocabulary:
    """Shared multilingual vocabulary, ids are dense in [0, |V|)"""

    id_to_token: tuple[str, ...]
    lang_ids: Mapping[LanguageTag, int]
    token_to_id: Dict[str, int] = field(init=False, repr=False, compare=False)
    _reserved: frozenset = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "id_to_token", tuple(self.id_to_token))
        object.__setattr__(self, "lang_ids", dict(self.lang_ids))

        mapping = {token: i for i, token in enumerate(self.id_to_token)}
        if len(mapping) != len(self.id_to_token):
            raise DataError("vocabulary tokens are not unique")
        for name, idx in SPECIALS.items():
            if self.id_to_token[idx] != SPECIAL_STRINGS[name]:
                raise DataError(f"special {name} must sit at id {idx}")
        for lang, idx in self.lang_ids.items():
            if self.id_to_token[idx] != lang_string(lang):
                raise DataError(f"language token for {lang} must sit at id {idx}")

        object.__setattr__(self, "token_to_id", mapping)
        object.__setattr__(
            self, "_reserved", frozenset(SPECIALS.values()) | frozenset(self.lang_ids.values())
        )

    def __len__(self):
        return len(self.id_to_token)

    @property
    def specials(self) -> Dict[str, int]:
        return dict(SPECIALS)

    def is_regular(self, token_id: int) -> bool:
        return 0 <= token_id < len(self) and token_id not in self._reserved

    def to_json(self) -> Dict:
        return {
            "specials": dict(SPECIALS),
            "lang_ids": {lang.value: idx for lang, idx in sorted(self.lang_ids.items(), key=lambda kv: kv[1])},
            "tokens": list(self.id_to_token),
        }

    def save(self, path: "str | Path"):
        Path(path).write_text(json.dumps(self.to_json(), ensure_ascii=False, indent=1) + "\n", encoding="utf-8")

    @classmethod
    def from_json(cls, data: Mapping) -> "Vocabulary":
        try:
            if dict(data["specials"]) != SPECIALS:
                raise DataError(f"unexpected special ids: {data['specials']}")
            lang_ids = {LanguageTag.parse(k): int(v) for k, v in data["lang_ids"].items()}
            return cls(tuple(data["tokens"]), lang_ids)
        except (KeyError, TypeError) as e:
            raise DataError(f"malformed vocabulary json: {e}") from e

    @classmethod
    def load(cls, path: "str | Path") -> "Vocabulary":
        path = Path(path)
        if not path.exists():
            raise DataError(f"vocabulary file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise DataError(f"vocabulary file {path} is not valid json: {e}") from e
        return cls.from_json(data)


def build_vocab(
    corpus: Iterable[str],
    max_size: int,
    pinned_lang_ids: Optional[Mapping[str, int]] = None,
) -> Vocabulary:
    """
    Build the shared vocabulary from raw utterance strings.

    Tokens are ranked by (frequency desc, token asc) and kept until |V| reaches
    max_size. Language tokens go right after the specials unless pinned, in
    which case regular tokens fill the ids around them and any gap below a
    pinned id is padded with [unusedN] entries.
    """
    langs = list(LanguageTag)
    if max_size <= len(SPECIALS) + len(langs):
        raise DataError(f"max_size must exceed {len(SPECIALS) + len(langs)} (specials + languages)")

    reserved_strings = set(SPECIAL_STRINGS.values()) | {lang_string(lang) for lang in langs}
    counts = Counter(
        token for text in corpus for token in tokenize(text) if token not in reserved_strings
    )
    ranked = [token for token, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))]

    pinned = {LanguageTag.parse(k): int(v) for k, v in (pinned_lang_ids or {}).items()}
    if len(set(pinned.values())) != len(pinned) or any(v < len(SPECIALS) for v in pinned.values()):
        raise DataError(f"pinned language ids must be distinct and >= {len(SPECIALS)}: {pinned_lang_ids}")

    table: Dict[int, str] = {idx: SPECIAL_STRINGS[name] for name, idx in SPECIALS.items()}
    lang_ids: Dict[LanguageTag, int] = {}
    for lang, idx in pinned.items():
        table[idx] = lang_string(lang)
        lang_ids[lang] = idx

    next_id = len(SPECIALS)

    def _next_free() -> int:
        nonlocal next_id
        while next_id in table:
            next_id += 1
        return next_id

    for lang in langs:
        if lang not in lang_ids:
            idx = _next_free()
            table[idx] = lang_string(lang)
            lang_ids[lang] = idx

    budget = max_size - len(table)
    for token in ranked[: max(budget, 0)]:
        table[_next_free()] = token

    size = max(table) + 1
    unused = 0
    for idx in range(size):
        if idx not in table:
            table[idx] = f"[unused{unused}]"
            unused += 1

    if unused:
        logger.warning(f"padded vocabulary with {unused} unused ids below pinned language ids")

    vocab = Vocabulary(tuple(table[i] for i in range(size)), lang_ids)
    logger.info(f"Built vocabulary: {len(vocab)} ids ({len(ranked)} distinct corpus tokens)")
    return vocab


def encode(vocab: Vocabulary, text: str) -> List[int]:
    """Token ids for text; unknown words (and reserved strings) become UNK"""
    ids = []
    for token in tokenize(text):
        idx = vocab.token_to_id.get(token, UNK)
        ids.append(idx if vocab.is_regular(idx) else UNK)
    return ids


def decode(vocab: Vocabulary, ids: Iterable[int]) -> str:
    tokens = []
    for idx in ids:
        idx = int(idx)
        if not 0 <= idx < len(vocab):
            raise DataError(f"token id {idx} outside vocabulary of size {len(vocab)}")
        tokens.append(vocab.id_to_token[idx])
    return " ".join(tokens)


def language_token(vocab: Vocabulary, lang: "str | LanguageTag") -> int:
    """Id of the decoder's first input, the target-language token"""
    tag = LanguageTag.parse(lang)
    if tag not in vocab.lang_ids:
        raise DataError(f"language {tag} not registered in vocabulary")
    return vocab.lang_ids[tag]
