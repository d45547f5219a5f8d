"""Pretrained word vectors in word2vec/GloVe text layout, and coverage reports.

Lookup policy is exact match first, then the lowercased surface, then a zero
vector. The same policy drives the model inputs and the coverage counts.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ner_forge.corpus import Dataset, split_columns
from ner_forge.errors import DataError, EmbeddingError

log = logging.getLogger("ner_forge")


class EmbeddingStore:
    """Read-only map from surface word to a fixed-dimension vector."""

    def __init__(self, name: str, words: Sequence[str], vectors: np.ndarray):
        vectors = np.ascontiguousarray(vectors, dtype=np.float32)
        if vectors.ndim != 2 or vectors.shape[0] == 0 or vectors.shape[1] == 0:
            raise EmbeddingError(f"embedding matrix must be non-empty and 2-D, got shape {vectors.shape}")
        if len(words) != vectors.shape[0]:
            raise EmbeddingError("word list and vector rows differ in length")
        vectors.flags.writeable = False
        self.name = name
        self.vectors = vectors
        self._index: Dict[str, int] = {}
        for row, word in enumerate(words):
            self._index.setdefault(word, row)
        self._zero = np.zeros(self.dim, dtype=np.float32)
        self._zero.flags.writeable = False

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def vocab(self) -> Mapping[str, int]:
        return self._index

    def __len__(self):
        return len(self._index)

    def __contains__(self, word: str) -> bool:
        return word in self._index

    def row_of(self, surface: str) -> Optional[int]:
        row = self._index.get(surface)
        if row is None:
            row = self._index.get(surface.lower())
        return row

    def lookup(self, surface: str) -> Tuple[np.ndarray, bool]:
        row = self.row_of(surface)
        if row is None:
            return self._zero, False
        return self.vectors[row], True

    def lookup_many(self, surfaces: Sequence[str]) -> Tuple[np.ndarray, np.ndarray]:
        """Stacked vectors [n x dim] (a fresh array) and the found mask."""
        rows = [self.row_of(s) for s in surfaces]
        found = np.array([r is not None for r in rows], dtype=bool)
        out = np.zeros((len(surfaces), self.dim), dtype=np.float32)
        if found.any():
            out[found] = self.vectors[[r for r in rows if r is not None]]
        return out, found

    def checksum(self) -> str:
        digest = hashlib.sha256()
        digest.update(self.vectors.tobytes())
        for word in self._index:
            digest.update(word.encode("utf-8"))
        return digest.hexdigest()


def lookup(store: EmbeddingStore, surface: str) -> Tuple[np.ndarray, bool]:
    return store.lookup(surface)


def _is_header(parts: List[str]) -> bool:
    return len(parts) == 2 and all(p.isdigit() for p in parts)


def load_text_embeddings(path, name: Optional[str] = None) -> EmbeddingStore:
    path = Path(path)
    words: List[str] = []
    rows: List[np.ndarray] = []
    seen = set()
    dim = None
    try:
        handle = open(path, encoding="utf-8", errors="strict")
    except OSError as err:
        raise EmbeddingError(f"cannot open embeddings ({err.strerror})", path) from err
    with handle:
        for lineno, line in enumerate(handle, start=1):
            parts = split_columns(line)
            if not parts:
                continue
            if lineno == 1 and _is_header(parts):
                continue
            word, values = parts[0], parts[1:]
            if dim is None:
                if not values:
                    raise EmbeddingError("line has no vector values", path, lineno)
                dim = len(values)
            elif len(values) != dim:
                raise EmbeddingError(f"dimension mismatch: expected {dim}, found {len(values)}", path, lineno)
            if word in seen:
                continue
            try:
                vector = np.asarray(values, dtype=np.float32)
            except ValueError as err:
                raise EmbeddingError(f"unparseable float ({err})", path, lineno) from err
            seen.add(word)
            words.append(word)
            rows.append(vector)
    if not rows:
        raise EmbeddingError("no vectors found", path)
    store = EmbeddingStore(name or path.stem, words, np.vstack(rows))
    log.info("Loaded %d vectors of dim %d from %s", len(store), store.dim, path)
    return store


@dataclass(frozen=True)
class CoverageReport:
    dataset_name: str
    split_name: str
    covered_tokens: int
    total_tokens: int

    @property
    def ratio(self) -> float:
        return self.covered_tokens / self.total_tokens

    def as_row(self) -> dict:
        return {
            "dataset": self.dataset_name,
            "split": self.split_name,
            "covered": self.covered_tokens,
            "total": self.total_tokens,
            "ratio": round(self.ratio, 5),
        }


def coverage_report(store: EmbeddingStore, data: Dataset, dataset_name: str = "", split_name: str = "") -> CoverageReport:
    """Share of token occurrences (not types) the store resolves."""
    total = data.num_tokens
    if total == 0:
        raise DataError("coverage of an empty dataset is undefined")
    covered = 0
    for sentence in data:
        covered += sum(store.row_of(s) is not None for s in sentence.surfaces)
    report = CoverageReport(dataset_name, split_name, covered, total)
    log.info("Coverage %s/%s: %d/%d = %.3f%%", dataset_name, split_name, covered, total, 100 * report.ratio)
    return report


def coverage_frame(reports: Sequence[CoverageReport]) -> pd.DataFrame:
    return pd.DataFrame([r.as_row() for r in reports], columns=["dataset", "split", "covered", "total", "ratio"])
