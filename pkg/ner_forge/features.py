"""Per-token casing categories and character index encodings."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Tuple

from ner_forge.config import CHAR_PAD, CHAR_UNKNOWN, CNN_KERNEL
from ner_forge.corpus import Dataset
from ner_forge.errors import DataError


class CaseCategory(enum.IntEnum):
    ALL_CAPS = 0
    UPPER_INITIAL = 1
    LOWERCASE = 2
    MIXED_CAPS = 3
    NOINFO = 4
    PAD = 5

    @property
    def label(self) -> str:
        return _CASE_LABELS[self]


_CASE_LABELS = {
    CaseCategory.ALL_CAPS: "allCaps",
    CaseCategory.UPPER_INITIAL: "upperInitial",
    CaseCategory.LOWERCASE: "lowercase",
    CaseCategory.MIXED_CAPS: "mixedCaps",
    CaseCategory.NOINFO: "noinfo",
    CaseCategory.PAD: "padCase",
}


def case_of(surface: str) -> CaseCategory:
    # precedence: noinfo, allCaps, lowercase, upperInitial, mixedCaps
    letters = [ch for ch in surface if ch.isalpha()]
    if not letters:
        return CaseCategory.NOINFO
    if all(ch.isupper() for ch in letters):
        return CaseCategory.ALL_CAPS
    if all(ch.islower() for ch in letters):
        return CaseCategory.LOWERCASE
    if surface[0].isupper() and all(ch.islower() for ch in letters[1:]):
        return CaseCategory.UPPER_INITIAL
    return CaseCategory.MIXED_CAPS


@dataclass(frozen=True)
class CharVocab:
    """Character indices; 0 is padding and 1 unknown, real characters start at 2."""

    chars: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "_index", {ch: i + 2 for i, ch in enumerate(self.chars)})

    def __len__(self):
        return len(self.chars)

    @property
    def size(self) -> int:
        return len(self.chars) + 2

    @property
    def index(self) -> Mapping[str, int]:
        return self._index

    def encode(self, ch: str) -> int:
        return self._index.get(ch, CHAR_UNKNOWN)


def build_char_vocab(data: Dataset) -> CharVocab:
    if len(data) == 0:
        raise DataError("cannot build a character vocabulary from an empty dataset")
    seen: Dict[str, None] = {}
    for sentence in data:
        for surface in sentence.surfaces:
            for ch in surface:
                seen.setdefault(ch)
    return CharVocab(tuple(seen))


def encode_chars(surface: str, vocab: CharVocab, min_len: int = CNN_KERNEL) -> List[int]:
    ids = [vocab.encode(ch) for ch in surface]
    return ids + [CHAR_PAD] * (min_len - len(ids))


def case_ids(surfaces: Iterable[str]) -> List[int]:
    return [int(case_of(s)) for s in surfaces]
