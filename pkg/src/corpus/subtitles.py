# corpus/subtitles.py
import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple

from core.errors import DataError
from corpus.types import AlignmentLink, LanguageTag, TimedUtterance

logger = logging.getLogger(__name__)

SUBTITLE_FILE = re.compile(r"^(?P<movie>.+)\.(?P<lang>[a-z]{2})\.jsonl$")
ALIGN_FILE = re.compile(r"^(?P<movie>.+)\.(?P<src>[a-z]{2})-(?P<tgt>[a-z]{2})\.align\.jsonl$")


class ParsedStream(NamedTuple):
    utterances: list[TimedUtterance]
    skipped: int


class ParsedLinks(NamedTuple):
    links: list[AlignmentLink]
    skipped: int


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _records(stream: Iterable[bytes], source: str):
    """Yield (line_no, dict | None) for every non-blank line; None marks a malformed line"""
    try:
        for line_no, raw in enumerate(stream, start=1):
            try:
                line = raw.decode("utf-8") if isinstance(raw, bytes) else raw
            except UnicodeDecodeError:
                logger.debug(f"{source}:{line_no}: not utf-8")
                yield line_no, None
                continue

            if not line.strip():
                continue

            try:
                record = json.loads(line)
            except json.JSONDecodeError:
                logger.debug(f"{source}:{line_no}: not json")
                yield line_no, None
                continue

            yield line_no, record if isinstance(record, dict) else None
    except OSError as e:
        raise DataError(f"failed reading {source}: {e}") from e


def parse_subtitle_stream(stream: Iterable[bytes], lang: "str | LanguageTag", movie_id: str) -> ParsedStream:
    """
    Parse a JSONL subtitle stream (one {start_ms, end_ms, text} object per line).

    Malformed lines (bad json, missing/mistyped fields, end_ms < start_ms,
    empty text) are counted and skipped. The result is ordered by start_ms; a
    stream that needed reordering is reported in the log.
    """
    lang = LanguageTag.parse(lang)
    source = f"{movie_id}.{lang}"

    utterances: list[TimedUtterance] = []
    skipped = 0

    for line_no, record in _records(stream, source):
        if record is None:
            skipped += 1
            continue

        start, end, text = record.get("start_ms"), record.get("end_ms"), record.get("text")
        speaker = record.get("speaker")
        if not (_is_int(start) and _is_int(end) and isinstance(text, str)):
            logger.debug(f"{source}:{line_no}: missing or mistyped fields")
            skipped += 1
            continue

        try:
            utterances.append(
                TimedUtterance(
                    text=text,
                    start_ms=start,
                    end_ms=end,
                    movie_id=movie_id,
                    lang=lang,
                    speaker=str(speaker) if speaker is not None else None,
                )
            )
        except DataError as e:
            logger.debug(f"{source}:{line_no}: {e}")
            skipped += 1

    ordered = sorted(utterances, key=lambda u: u.start_ms)
    if ordered != utterances:
        logger.warning(f"{source}: records were not in start_ms order, sorted {len(ordered)} utterances")

    if skipped:
        logger.info(f"{source}: skipped {skipped} malformed lines")

    return ParsedStream(ordered, skipped)


def parse_alignment_stream(stream: Iterable[bytes], source: str = "<alignment>") -> ParsedLinks:
    """Parse {src, tgt, conf} JSONL alignment links, counting malformed lines"""
    links: list[AlignmentLink] = []
    skipped = 0

    for line_no, record in _records(stream, source):
        if record is None:
            skipped += 1
            continue

        src, tgt, conf = record.get("src"), record.get("tgt"), record.get("conf")
        if not (_is_int(src) and _is_int(tgt) and isinstance(conf, (int, float)) and not isinstance(conf, bool)):
            skipped += 1
            continue

        try:
            links.append(AlignmentLink(src_index=src, tgt_index=tgt, confidence=float(conf)))
        except DataError as e:
            logger.debug(f"{source}:{line_no}: {e}")
            skipped += 1

    return ParsedLinks(links, skipped)


@dataclass(frozen=True)
class MovieStream:
    movie_id: str
    lang: LanguageTag
    path: Path


@dataclass(frozen=True)
class AlignmentFile:
    movie_id: str
    src_lang: LanguageTag
    tgt_lang: LanguageTag
    path: Path


def discover_corpus(corpus_dir: "str | Path") -> tuple[list[MovieStream], list[AlignmentFile]]:
    """Find `<movie>.<lang>.jsonl` and `<movie>.<A>-<B>.align.jsonl` files, sorted"""
    corpus_dir = Path(corpus_dir)
    if not corpus_dir.is_dir():
        raise DataError(f"corpus directory not found: {corpus_dir}")

    streams, alignments = [], []
    for path in sorted(corpus_dir.iterdir()):
        if not path.is_file():
            continue

        if m := ALIGN_FILE.match(path.name):
            alignments.append(
                AlignmentFile(m["movie"], LanguageTag.parse(m["src"]), LanguageTag.parse(m["tgt"]), path)
            )
        elif m := SUBTITLE_FILE.match(path.name):
            try:
                lang = LanguageTag.parse(m["lang"])
            except DataError:
                logger.warning(f"ignoring {path.name}: unsupported language {m['lang']}")
                continue
            streams.append(MovieStream(m["movie"], lang, path))

    streams.sort(key=lambda s: (s.movie_id, s.lang.value))
    alignments.sort(key=lambda a: (a.movie_id, a.src_lang.value, a.tgt_lang.value))
    return streams, alignments


def _parse_file(stream: MovieStream) -> ParsedStream:
    try:
        with open(stream.path, "rb") as f:
            return parse_subtitle_stream(f, stream.lang, stream.movie_id)
    except OSError as e:
        raise DataError(f"failed reading {stream.path}: {e}") from e


def load_movie_streams(
    streams: list[MovieStream], workers: int = 4
) -> list[tuple[MovieStream, ParsedStream]]:
    """Parse every (movie, language) stream, in parallel, merged in (movie_id, lang) order"""
    if workers <= 1 or len(streams) <= 1:
        return [(s, _parse_file(s)) for s in streams]

    with ThreadPoolExecutor(max_workers=workers) as executor:
        parsed = list(executor.map(_parse_file, streams))

    return list(zip(streams, parsed))


def load_alignment_file(alignment: AlignmentFile) -> ParsedLinks:
    try:
        with open(alignment.path, "rb") as f:
            return parse_alignment_stream(f, source=alignment.path.name)
    except OSError as e:
        raise DataError(f"failed reading {alignment.path}: {e}") from e
