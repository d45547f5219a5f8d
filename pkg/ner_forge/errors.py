"""Exception hierarchy. Every error knows the CLI exit code it maps to."""

from __future__ import annotations

from typing import Iterable, Optional

from ner_forge.config import EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC


class NerForgeError(Exception):
    exit_code = EXIT_CONFIG


class ConfigError(NerForgeError):
    exit_code = EXIT_CONFIG


class DataError(NerForgeError):
    exit_code = EXIT_DATA


class CorpusError(DataError):
    def __init__(self, message: str, path=None, line: Optional[int] = None, tag: Optional[str] = None):
        self.message = message
        self.path = path
        self.line = line
        self.tag = tag
        super().__init__(str(self))

    def __str__(self):
        where = ""
        if self.path is not None:
            where += f" in file {self.path}"
        if self.line is not None:
            where += f" on line {self.line}"
        what = f": '{self.tag}'" if self.tag is not None else ""
        return f"{self.message}{where}{what}"


class TagSchemeError(DataError):
    pass


class EmbeddingError(DataError):
    def __init__(self, message: str, path=None, line: Optional[int] = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += f" in {path}"
        if line is not None:
            where += f" at line {line}"
        super().__init__(f"{message}{where}")


class OutputError(DataError):
    def __init__(self, path, reason: str):
        self.path = path
        super().__init__(f"cannot write {path} ({reason})")


class ModelFormatError(DataError):
    pass


class DimensionError(DataError):
    pass


class UnknownTagError(DataError):
    def __init__(self, tags: Iterable[str]):
        self.tags = sorted(set(tags))
        super().__init__("tags unknown to the model: " + ", ".join(self.tags))


class ShapeError(NerForgeError, ValueError):
    exit_code = EXIT_NUMERIC


class NonFiniteLossError(NerForgeError):
    exit_code = EXIT_NUMERIC

    def __init__(self, epoch: int, batch: int, lr: float, loss: float):
        self.epoch = epoch
        self.batch = batch
        self.lr = lr
        self.loss = loss
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch} (lr={lr:.6g})")


class GradCheckError(NerForgeError):
    exit_code = EXIT_NUMERIC


class SearchError(NerForgeError):
    exit_code = EXIT_NUMERIC
