"""Mini-batch training, validation split, epoch selection and random search."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ner_forge import autodiff as ad
from ner_forge.config import (
    BATCH_SIZE,
    CLIP_NORM,
    DEFAULT_SEED,
    DROPOUT,
    LEARNING_RATE,
    LR_DECAY,
    LSTM_STATE,
    MAX_EPOCHS,
    SEARCH_BATCH_SIZE,
    SEARCH_DROPOUT,
    SEARCH_EPOCHS,
    SEARCH_LEARNING_RATE,
    SEARCH_LR_DECAY,
    SEARCH_LSTM_STATES,
    THREADS_ENV,
    VALIDATION_SPLIT,
)
from ner_forge.corpus import Dataset, TagScheme
from ner_forge.embeddings import EmbeddingStore
from ner_forge.errors import ConfigError, DataError, NerForgeError, NonFiniteLossError, SearchError, UnknownTagError
from ner_forge.evaluation import evaluate
from ner_forge.model import TaggerModel, build_model, encode_batch, forward_encoded, predict_batch
from ner_forge.seeding import rng_stream

log = logging.getLogger("ner_forge")

METRICS_COLUMNS = ["epoch", "loss", "val_f1", "lr"]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = LEARNING_RATE
    po: float = LR_DECAY
    batch_size: int = BATCH_SIZE
    epochs: int = MAX_EPOCHS
    dropout: float = DROPOUT
    validation_split: float = VALIDATION_SPLIT
    seed: int = DEFAULT_SEED
    clip: float = CLIP_NORM
    lstm_state: int = LSTM_STATE

    def __post_init__(self):
        if not 0.0 < self.validation_split < 1.0:
            raise ConfigError(f"validation_split must be in (0, 1), got {self.validation_split}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be at least 1, got {self.batch_size}")
        if not self.lr > 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if not self.po >= 0:
            raise ConfigError(f"po must be non-negative, got {self.po}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be non-negative, got {self.epochs}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if not self.clip > 0:
            raise ConfigError(f"clip must be positive, got {self.clip}")
        if self.lstm_state < 1:
            raise ConfigError(f"lstm_state must be positive, got {self.lstm_state}")


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    loss: float
    val_f1: float
    lr: float


def lr_schedule(lr: float, po: float, epoch: int) -> float:
    """Decayed learning rate for a 0-based epoch: lr / (1 + po * epoch)."""
    return lr / (1 + po * epoch)


def split_train_validation(data: Dataset, fraction: float, seed: int) -> Tuple[Dataset, Dataset]:
    """Seeded shuffle; the last ceil(fraction * N) sentences become validation."""
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"validation fraction must be in (0, 1), got {fraction}")
    n = len(data)
    n_valid = math.ceil(round(fraction * n, 9))
    if n_valid == 0 or n_valid == n:
        raise DataError(f"splitting {n} sentences at {fraction} leaves one side empty")
    order = rng_stream(seed, "split").permutation(n)
    sentences = [data.sentences[i] for i in order]
    return (
        Dataset(tuple(sentences[: n - n_valid]), data.scheme),
        Dataset(tuple(sentences[n - n_valid:]), data.scheme),
    )


def _check_tags(model: TaggerModel, data: Dataset) -> None:
    unknown = set(data.tag_set) - set(model.config.tags)
    if unknown:
        raise UnknownTagError(unknown)


def validation_f1(model: TaggerModel, data: Dataset, store: EmbeddingStore) -> float:
    return evaluate(data, predict_batch(model, data.sentences, store)).f1


def train(
    model: TaggerModel,
    data: Dataset,
    store: EmbeddingStore,
    config: TrainConfig = TrainConfig(),
    progress: Optional[Callable[[EpochMetrics], None]] = None,
) -> Tuple[TaggerModel, List[EpochMetrics]]:
    """Train on a split of ``data`` and return the best-validation-F1 snapshot.

    ``model`` is trained in place; the returned model is an independent copy
    holding the parameters of the best epoch (earlier epoch on ties).
    """
    if len(data) == 0:
        raise DataError("cannot train on an empty dataset")
    data = data.converted(TagScheme.BIO)
    _check_tags(model, data)
    if config.epochs == 0:
        return model.copy(), []

    train_set, valid_set = split_train_validation(data, config.validation_split, config.seed)
    log.info("Training on %d sentences, validating on %d", len(train_set), len(valid_set))
    shuffle_rng = rng_stream(config.seed, "shuffle")
    dropout_rng = rng_stream(config.seed, "dropout")
    params = model.parameters()
    state = ad.AdamState.for_parameters(params)

    best_f1, best = -1.0, model.snapshot()
    history: List[EpochMetrics] = []
    for epoch in range(config.epochs):
        lr = lr_schedule(config.lr, config.po, epoch)
        order = shuffle_rng.permutation(len(train_set))
        losses = []
        for batch_no, start in enumerate(range(0, len(order), config.batch_size)):
            sentences = [train_set.sentences[i] for i in order[start:start + config.batch_size]]
            batch = encode_batch(model, sentences, store, with_gold=True)
            model.zero_grad()
            with ad.Tape() as tape:
                scores = forward_encoded(model, batch, training=True, rng=dropout_rng, dropout=config.dropout)
                loss = ad.masked_nll(scores, batch.gold, batch.mask)
                value = loss.item()
                if not math.isfinite(value):
                    raise NonFiniteLossError(epoch, batch_no, lr, value)
                tape.backward(loss)
            ad.adam_step(params, ad.gradients(params), state, lr, config.clip)
            losses.append(value)

        f1 = validation_f1(model, valid_set, store)
        metrics = EpochMetrics(epoch, float(np.mean(losses)), f1, lr)
        history.append(metrics)
        log.info("epoch %d: loss=%.4f val_f1=%.2f lr=%.6g", epoch, metrics.loss, 100 * f1, lr)
        if progress is not None:
            progress(metrics)
        if f1 > best_f1:
            best_f1, best = f1, model.snapshot()
    return model.with_parameters(best), history


def metrics_frame(history: Sequence[EpochMetrics]) -> pd.DataFrame:
    return pd.DataFrame([asdict(m) for m in history], columns=METRICS_COLUMNS)


@dataclass(frozen=True)
class SearchSpace:
    lstm_states: Tuple[int, ...] = SEARCH_LSTM_STATES
    dropout: Tuple[float, float] = SEARCH_DROPOUT
    batch_size: Tuple[int, int] = SEARCH_BATCH_SIZE
    lr: Tuple[float, float] = SEARCH_LEARNING_RATE
    epochs: Tuple[int, int] = SEARCH_EPOCHS
    po: Tuple[float, float] = SEARCH_LR_DECAY

    def __post_init__(self):
        if not self.lstm_states:
            raise ConfigError("lstm_states needs at least one choice")
        for name in ("dropout", "batch_size", "lr", "epochs", "po"):
            low, high = getattr(self, name)
            if low > high:
                raise ConfigError(f"search range {name} is empty: ({low}, {high})")
        if self.lr[0] <= 0:
            raise ConfigError("lr range must be positive for log-uniform sampling")

    def sample(self, rng: np.random.Generator, seed: int, base: TrainConfig = TrainConfig()) -> TrainConfig:
        """One draw over ``base``; lr is log-uniform, integers are inclusive on both ends.

        Fields the space does not sample (validation split, clip) keep their base values.
        """
        log_lr = rng.uniform(np.log10(self.lr[0]), np.log10(self.lr[1]))
        return replace(
            base,
            lstm_state=int(rng.choice(self.lstm_states)),
            dropout=float(rng.uniform(*self.dropout)),
            batch_size=int(rng.integers(self.batch_size[0], self.batch_size[1] + 1)),
            lr=float(np.power(10.0, log_lr)),
            epochs=int(rng.integers(self.epochs[0], self.epochs[1] + 1)),
            po=float(rng.uniform(*self.po)),
            seed=seed,
        )


@dataclass
class TrialResult:
    index: int
    config: TrainConfig
    best_f1: float = float("nan")
    metrics: List[EpochMetrics] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def sample_trials(
    space: SearchSpace, trials: int, seed: int, base: TrainConfig = TrainConfig()
) -> List[TrainConfig]:
    if trials < 1:
        raise ConfigError(f"trials must be at least 1, got {trials}")
    rng = rng_stream(seed, "search")
    configs = []
    for _ in range(trials):
        trial_seed = int(rng.integers(0, 2**31 - 1))
        configs.append(space.sample(rng, trial_seed, base))
    return configs


def rank_trials(results: Sequence[TrialResult]) -> List[TrialResult]:
    """Successful trials by best validation F1, earlier trial first on ties."""
    return sorted((r for r in results if r.ok), key=lambda r: (-r.best_f1, r.index))


def worker_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        threads = int(raw)
    except ValueError as err:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from err
    return max(threads, 1)


def run_trial(index: int, config: TrainConfig, data: Dataset, store: EmbeddingStore) -> TrialResult:
    result = TrialResult(index, config)
    try:
        model = build_model(data, store, config.seed, lstm_state=config.lstm_state, dropout=config.dropout)
        _, history = train(model, data, store, config)
    except NerForgeError as err:
        log.warning("trial %d failed: %s", index, err)
        result.error = str(err)
        return result
    result.metrics = history
    result.best_f1 = max((m.val_f1 for m in history), default=0.0)
    log.info("trial %d: best val_f1=%.2f (%s)", index, 100 * result.best_f1, config)
    return result


def random_search(
    space: SearchSpace,
    trials: int,
    data: Dataset,
    store: EmbeddingStore,
    seed: int = DEFAULT_SEED,
    base: TrainConfig = TrainConfig(),
) -> Tuple[TrainConfig, List[TrialResult]]:
    """Train one model per sampled config; return the winner and every trial."""
    configs = sample_trials(space, trials, seed, base)
    threads = min(worker_threads(), len(configs))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda ic: run_trial(ic[0], ic[1], data, store), enumerate(configs)))
    else:
        results = [run_trial(i, c, data, store) for i, c in enumerate(configs)]
    ranked = rank_trials(results)
    if not ranked:
        raise SearchError(f"all {len(results)} trials failed")
    return ranked[0].config, results


def search_frame(results: Sequence[TrialResult]) -> pd.DataFrame:
    rows = []
    for r in results:
        row = {"trial": r.index}
        row.update(asdict(r.config))
        row.update({"best_val_f1": r.best_f1, "error": r.error or ""})
        rows.append(row)
    return pd.DataFrame(rows)
