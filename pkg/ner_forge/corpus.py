"""CoNLL reading, tag-scheme validation and conversion, entity span extraction.

Two tag schemes are supported:

IOB2 (BIO):
    John   lives in New   York  City  .
    B-PER  O     O  B-LOC I-LOC I-LOC O

BIOES:
    John   lives in New   York  City  .
    S-PER  O     O  B-LOC I-LOC E-LOC O
"""

from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple

from ner_forge.errors import CorpusError, TagSchemeError

log = logging.getLogger("ner_forge")

OUTSIDE = "O"
DOCSTART = "-DOCSTART-"

TAG_RE = re.compile(r"^(?:O|([BIES])-(\S+))$")
COLUMN_SEP = re.compile(r"[ \t]+")


def split_columns(line: str) -> List[str]:
    """Columns separated by runs of spaces or tabs; other whitespace is kept inside a column."""
    stripped = line.strip(" \t\r\n")
    return COLUMN_SEP.split(stripped) if stripped else []


class TagScheme(enum.Enum):
    BIO = "BIO"
    BIOES = "BIOES"

    @property
    def prefixes(self) -> str:
        return "BI" if self is TagScheme.BIO else "BIES"


@dataclass(frozen=True)
class Token:
    surface: str
    tag: str

    def __post_init__(self):
        if not self.surface or any(ch.isspace() for ch in self.surface):
            raise ValueError(f"invalid token surface {self.surface!r}")


@dataclass(frozen=True)
class Sentence:
    tokens: Tuple[Token, ...]

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("a sentence needs at least one token")

    @classmethod
    def from_pairs(cls, surfaces: Sequence[str], tags: Sequence[str]) -> "Sentence":
        if len(surfaces) != len(tags):
            raise ValueError("surfaces and tags differ in length")
        return cls(tuple(Token(s, t) for s, t in zip(surfaces, tags)))

    def __len__(self):
        return len(self.tokens)

    @property
    def surfaces(self) -> List[str]:
        return [tok.surface for tok in self.tokens]

    @property
    def tags(self) -> List[str]:
        return [tok.tag for tok in self.tokens]

    def with_tags(self, tags: Sequence[str]) -> "Sentence":
        return Sentence.from_pairs(self.surfaces, tags)


@dataclass(frozen=True)
class EntitySpan:
    start: int
    end: int
    etype: str


@dataclass(frozen=True)
class Dataset:
    sentences: Tuple[Sentence, ...]
    scheme: TagScheme = TagScheme.BIO
    tag_set: Tuple[str, ...] = field(init=False)
    entity_types: Tuple[str, ...] = field(init=False)

    def __post_init__(self):
        tags = {OUTSIDE}
        for sentence in self.sentences:
            tags.update(sentence.tags)
        object.__setattr__(self, "tag_set", tuple(sorted(tags)))
        object.__setattr__(self, "entity_types", tuple(sorted({t[2:] for t in tags if t != OUTSIDE})))

    def __len__(self):
        return len(self.sentences)

    def __iter__(self) -> Iterator[Sentence]:
        return iter(self.sentences)

    def __getitem__(self, index):
        return self.sentences[index]

    @property
    def num_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)

    def merged(self, other: "Dataset") -> "Dataset":
        if other.scheme is not self.scheme:
            other = other.converted(self.scheme)
        return Dataset(self.sentences + other.sentences, self.scheme)

    def converted(self, scheme: TagScheme) -> "Dataset":
        if scheme is self.scheme:
            return self
        return Dataset(
            tuple(s.with_tags(convert_scheme(s.tags, self.scheme, scheme)) for s in self.sentences),
            scheme,
        )


def split_tag(tag: str) -> Tuple[str, Optional[str]]:
    """B-PER -> (B, PER); O -> (O, None)."""
    if tag == OUTSIDE:
        return OUTSIDE, None
    return tag[0], tag[2:]


def tag_matches_scheme(tag: str, scheme: TagScheme) -> bool:
    match = TAG_RE.match(tag)
    if match is None:
        return False
    return match.group(1) is None or match.group(1) in scheme.prefixes


def read_conll(path, scheme: TagScheme = TagScheme.BIO, tagged: bool = True) -> Dataset:
    """Read a whitespace-column CoNLL file.

    The first column is the token and the last one its tag; anything in
    between is ignored. With ``tagged=False`` the tag column is optional and
    every token is read as ``O``.
    """
    path = Path(path)
    sentences: List[Sentence] = []
    current: List[Token] = []
    ill_formed = 0

    def flush():
        nonlocal ill_formed
        if current:
            sentence = Sentence(tuple(current))
            if tagged and not validate_sequence(sentence.tags, scheme):
                ill_formed += 1
            sentences.append(sentence)
            current.clear()

    try:
        handle = open(path, encoding="utf-8", newline=None)
    except OSError as err:
        raise CorpusError(f"cannot open corpus ({err.strerror})", path) from err
    with handle:
        try:
            for lineno, line in enumerate(handle, start=1):
                columns = split_columns(line)
                if not columns:
                    flush()
                    continue
                if columns[0] == DOCSTART:
                    continue
                if tagged:
                    if len(columns) < 2:
                        raise CorpusError("expected at least 2 columns", path, lineno, line.rstrip("\r\n"))
                    tag = columns[-1]
                    if not tag_matches_scheme(tag, scheme):
                        raise CorpusError(f"tag not valid in {scheme.value}", path, lineno, tag)
                else:
                    tag = OUTSIDE
                current.append(Token(columns[0], tag))
        except UnicodeDecodeError as err:
            raise CorpusError("file is not valid UTF-8", path) from err
    flush()

    if not sentences:
        raise CorpusError("no sentences found", path)
    if ill_formed:
        log.warning("%s: %d sentence(s) with ill-formed %s sequences", path, ill_formed, scheme.value)
    log.info("Read %d sentences (%d tokens) from %s", len(sentences), sum(map(len, sentences)), path)
    return Dataset(tuple(sentences), scheme if tagged else TagScheme.BIO)


def write_conll(sentences: Iterable[Sentence], handle) -> None:
    for sentence in sentences:
        for token in sentence.tokens:
            handle.write(f"{token.surface} {token.tag}\n")
        handle.write("\n")


def validate_sequence(tags: Sequence[str], scheme: TagScheme) -> bool:
    open_type: Optional[str] = None
    for tag in tags:
        if not tag_matches_scheme(tag, scheme):
            return False
        prefix, etype = split_tag(tag)
        if scheme is TagScheme.BIO:
            if prefix == "I" and open_type != etype:
                return False
            open_type = etype
            continue
        # BIOES: I/E only continue an open chunk, everything else needs none open
        if prefix in ("I", "E"):
            if open_type != etype:
                return False
            open_type = etype if prefix == "I" else None
        else:
            if open_type is not None:
                return False
            open_type = etype if prefix == "B" else None
    return scheme is TagScheme.BIO or open_type is None


def repair_bio(tags: Sequence[str]) -> List[str]:
    """Promote dangling I-X (no B-X/I-X right before it) to B-X."""
    repaired = []
    prev = OUTSIDE
    for tag in tags:
        prefix, etype = split_tag(tag)
        if prefix == "I":
            prev_prefix, prev_type = split_tag(prev)
            if prev_prefix not in ("B", "I") or prev_type != etype:
                tag = f"B-{etype}"
        repaired.append(tag)
        prev = tag
    return repaired


def _chunks(tags: Sequence[str]) -> List[EntitySpan]:
    # accepts valid BIO or BIOES; a chunk opens on B/S and continues on I/E
    spans = []
    start, etype = None, None
    for i, tag in enumerate(tags):
        prefix, tag_type = split_tag(tag)
        continues = prefix in ("I", "E") and etype == tag_type and start is not None
        if not continues and start is not None:
            spans.append(EntitySpan(start, i - 1, etype))
            start, etype = None, None
        if prefix in ("B", "S", "I", "E") and start is None:
            start, etype = i, tag_type
        if prefix in ("S", "E") and start is not None:
            spans.append(EntitySpan(start, i, etype))
            start, etype = None, None
    if start is not None:
        spans.append(EntitySpan(start, len(tags) - 1, etype))
    return spans


def spans_to_tags(spans: Iterable[EntitySpan], length: int, scheme: TagScheme = TagScheme.BIO) -> List[str]:
    tags = [OUTSIDE] * length
    for span in spans:
        if scheme is TagScheme.BIOES and span.start == span.end:
            tags[span.start] = f"S-{span.etype}"
            continue
        tags[span.start] = f"B-{span.etype}"
        for i in range(span.start + 1, span.end + 1):
            tags[i] = f"I-{span.etype}"
        if scheme is TagScheme.BIOES:
            tags[span.end] = f"E-{span.etype}"
    return tags


def convert_scheme(tags: Sequence[str], from_scheme: TagScheme, to_scheme: TagScheme) -> List[str]:
    if not validate_sequence(tags, from_scheme):
        raise TagSchemeError(f"not a valid {from_scheme.value} sequence: {' '.join(tags)}")
    if from_scheme is to_scheme:
        return list(tags)
    return spans_to_tags(_chunks(tags), len(tags), to_scheme)


def extract_spans(tags: Sequence[str]) -> List[EntitySpan]:
    """Maximal typed chunks of a BIO sequence, after dangling-I repair."""
    return _chunks(repair_bio(tags))
