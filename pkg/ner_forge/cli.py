"""Command-line entry point: train, eval, predict, coverage, grad-check, search.

Exit codes: 0 success, 1 usage/config, 2 data, 3 numeric.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

from ner_forge.autodiff import grad_check
from ner_forge.config import (
    BATCH_SIZE,
    CLIP_NORM,
    DEFAULT_SEED,
    DROPOUT,
    EXIT_CONFIG,
    EXIT_OK,
    GRADCHECK_TOLERANCE,
    LEARNING_RATE,
    LOG_FORMAT,
    LR_DECAY,
    LSTM_STATE,
    MAX_EPOCHS,
    VALIDATION_SPLIT,
)
from ner_forge.corpus import Sentence, TagScheme, read_conll, write_conll
from ner_forge.embeddings import coverage_frame, coverage_report, load_text_embeddings
from ner_forge.errors import ConfigError, NerForgeError, OutputError, UnknownTagError
from ner_forge.evaluation import evaluate, token_scores
from ner_forge.model import build_model, load_model, predict_batch, save_model, toy_gradcheck_problem
from ner_forge.training import (
    SearchSpace,
    TrainConfig,
    metrics_frame,
    random_search,
    search_frame,
    train,
)

log = logging.getLogger("ner_forge")


class UsageError(ConfigError):
    pass


class ArgumentParser(argparse.ArgumentParser):
    """argparse that reports usage problems as exit code 1."""

    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


# Required paths per subcommand
REQUIRED = {
    "train": ("train", "embeddings", "model"),
    "eval": ("test",),
    "predict": ("input", "embeddings", "model"),
    "coverage": ("embeddings",),
    "grad-check": (),
    "search": ("train", "embeddings"),
}


@dataclass
class RunConfig:
    subcommand: str
    train: Optional[Path] = None
    dev: Optional[Path] = None
    test: Optional[Path] = None
    input: Optional[Path] = None
    predictions: Optional[Path] = None
    embeddings: Optional[Path] = None
    embeddings_name: Optional[str] = None
    model: Optional[Path] = None
    metrics_out: Optional[Path] = None
    output: Optional[Path] = None
    dataset_name: str = ""
    scheme: TagScheme = TagScheme.BIO
    merge_dev: bool = False
    token_level: bool = False
    trials: int = 10
    tolerance: float = GRADCHECK_TOLERANCE
    training: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        missing = [name for name in REQUIRED[self.subcommand] if getattr(self, name) is None]
        if self.subcommand == "eval" and self.predictions is None:
            missing += [name for name in ("model", "embeddings") if getattr(self, name) is None]
        if self.subcommand == "coverage" and not any((self.train, self.dev, self.test)):
            missing.append("train/dev/test")
        if missing:
            raise UsageError(f"{self.subcommand}: missing required " + ", ".join(f"--{m.replace('_', '-')}" for m in missing))
        if self.merge_dev and self.dev is None:
            raise UsageError("--merge-dev needs --dev")
        if self.trials < 1:
            raise UsageError("--trials must be at least 1")
        if self.subcommand == "train" and self.metrics_out is None:
            self.metrics_out = self.model.with_suffix(".metrics.csv")

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        def path(name):
            value = getattr(args, name, None)
            return Path(value) if value else None

        training = TrainConfig(
            lr=args.lr,
            po=args.po,
            batch_size=args.batch_size,
            epochs=args.max_epochs,
            dropout=args.dropout,
            validation_split=args.validation_split,
            seed=args.seed,
            clip=args.clip,
            lstm_state=args.lstm_state,
        )
        return cls(
            subcommand=args.command,
            train=path("train"),
            dev=path("dev"),
            test=path("test"),
            input=path("input"),
            predictions=path("predictions"),
            embeddings=path("embeddings"),
            embeddings_name=args.embeddings_name,
            model=path("model"),
            metrics_out=path("metrics_out"),
            output=path("output"),
            dataset_name=args.dataset_name,
            scheme=TagScheme(args.scheme),
            merge_dev=args.merge_dev,
            token_level=args.token_level,
            trials=args.trials,
            tolerance=args.tolerance,
            training=training,
        )


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="ner-forge", description="BiLSTM-CNN-Char named entity tagger.")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging.")
    parser.add_argument("-q", "--quiet", action="store_true", help="Warnings and errors only.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    def data_args(p):
        p.add_argument("--train", help="Training CoNLL file")
        p.add_argument("--dev", help="Development CoNLL file")
        p.add_argument("--test", help="Test CoNLL file")
        p.add_argument("--scheme", default="BIO", choices=[s.value for s in TagScheme], help="Tag scheme of the input files")
        p.add_argument("--dataset-name", default="", help="Label used in reports")

    def embedding_args(p):
        p.add_argument("--embeddings", help="Word vectors in text format")
        p.add_argument("--embeddings-name", help="Name recorded in the model file (default: file stem)")

    def training_args(p):
        p.add_argument("--max-epochs", type=int, default=MAX_EPOCHS)
        p.add_argument("--dropout", type=float, default=DROPOUT)
        p.add_argument("--lr", type=float, default=LEARNING_RATE)
        p.add_argument("--po", type=float, default=LR_DECAY, help="Learning-rate decay coefficient")
        p.add_argument("--batch-size", type=int, default=BATCH_SIZE)
        p.add_argument("--validation-split", type=float, default=VALIDATION_SPLIT)
        p.add_argument("--clip", type=float, default=CLIP_NORM, help="Global gradient-norm clip")
        p.add_argument("--lstm-state", type=int, default=LSTM_STATE)
        p.add_argument("--merge-dev", action="store_true", help="Train on train+dev")
        p.add_argument("--metrics-out", help="Per-epoch metrics CSV")

    def search_args(p):
        # sampled hyperparameters are not flags here; see SearchSpace
        p.add_argument("--validation-split", type=float, default=VALIDATION_SPLIT)
        p.add_argument("--clip", type=float, default=CLIP_NORM, help="Global gradient-norm clip")
        p.add_argument("--merge-dev", action="store_true", help="Train on train+dev")

    p = sub.add_parser("train", help="Train a tagger")
    data_args(p)
    embedding_args(p)
    training_args(p)
    p.add_argument("--model", help="Output model file")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)

    p = sub.add_parser("eval", help="Entity-level evaluation on a test file")
    data_args(p)
    embedding_args(p)
    p.add_argument("--model", help="Model file")
    p.add_argument("--predictions", help="Score this prediction CoNLL file instead of running a model")
    p.add_argument("--token-level", action="store_true", help="Also report token-level F1 over non-O tags")
    p.add_argument("--output", help="Write the CSV here instead of stdout")

    p = sub.add_parser("predict", help="Tag a CoNLL file")
    embedding_args(p)
    p.add_argument("--input", help="CoNLL file; tag column optional and ignored")
    p.add_argument("--model", help="Model file")
    p.add_argument("--output", help="Write predictions here instead of stdout")

    p = sub.add_parser("coverage", help="Embedding coverage per split")
    data_args(p)
    embedding_args(p)
    p.add_argument("--output", help="Write the CSV here instead of stdout")

    p = sub.add_parser("grad-check", help="Finite-difference check of the toy tagger")
    p.add_argument("--tolerance", type=float, default=GRADCHECK_TOLERANCE)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("search", help="Random hyperparameter search")
    data_args(p)
    embedding_args(p)
    search_args(p)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--output", help="Write the trial CSV here instead of stdout")
    return parser


_DEFAULTS = {
    "train": None, "dev": None, "test": None, "input": None, "predictions": None,
    "embeddings": None, "embeddings_name": None, "model": None, "metrics_out": None,
    "output": None, "dataset_name": "", "scheme": "BIO", "merge_dev": False,
    "token_level": False, "trials": 10, "tolerance": GRADCHECK_TOLERANCE,
    "max_epochs": MAX_EPOCHS, "dropout": DROPOUT, "lr": LEARNING_RATE, "po": LR_DECAY,
    "batch_size": BATCH_SIZE, "validation_split": VALIDATION_SPLIT, "clip": CLIP_NORM,
    "lstm_state": LSTM_STATE, "seed": DEFAULT_SEED,
}


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    args = build_parser().parse_args(argv)
    for name, value in _DEFAULTS.items():
        if not hasattr(args, name):
            setattr(args, name, value)
    return args


def _check_output_dirs(*paths: Optional[Path]) -> None:
    for path in paths:
        if path is not None and not path.parent.is_dir():
            raise OutputError(path, f"directory {path.parent} does not exist")


def _write_text(text: str, path: Optional[Path]) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as err:
        raise OutputError(path, err.strerror or str(err)) from err


def _write_frame(frame, path: Optional[Path], float_format: Optional[str] = None) -> None:
    _write_text(frame.to_csv(index=False, float_format=float_format, lineterminator="\n"), path)


def _load_store(run: RunConfig):
    return load_text_embeddings(run.embeddings, run.embeddings_name)


def _training_data(run: RunConfig):
    data = read_conll(run.train, run.scheme)
    if run.merge_dev:
        dev = read_conll(run.dev, run.scheme)
        data = data.merged(dev)
        log.info("Merged train and dev: %d sentences", len(data))
    return data


def cmd_train(run: RunConfig) -> int:
    _check_output_dirs(run.model, run.metrics_out)
    store = _load_store(run)
    data = _training_data(run)
    config = run.training
    log.info("Training set size: %d sentences", len(data))
    model = build_model(data, store, config.seed, lstm_state=config.lstm_state, dropout=config.dropout)
    best, history = train(model, data, store, config)
    save_model(best, run.model)
    _write_frame(metrics_frame(history), run.metrics_out)
    return EXIT_OK


def _check_known_tags(model, data) -> None:
    unknown = set(data.converted(TagScheme.BIO).tag_set) - set(model.config.tags)
    if unknown:
        raise UnknownTagError(unknown)


def cmd_eval(run: RunConfig) -> int:
    _check_output_dirs(run.output)
    gold = read_conll(run.test, run.scheme)
    if run.predictions is not None:
        predicted_data = read_conll(run.predictions, TagScheme.BIO)
        predicted = [s.tags for s in predicted_data]
    else:
        store = _load_store(run)
        model = load_model(run.model, store)
        _check_known_tags(model, gold)
        predicted = predict_batch(model, gold.sentences, store)
    report = evaluate(gold, predicted)
    frame = report.to_frame()
    if run.token_level:
        tok = token_scores(gold, predicted)
        frame.loc[len(frame)] = ["TOKEN", tok.tp, tok.fp, tok.fn, 100 * tok.precision, 100 * tok.recall, 100 * tok.f1]
    log.info("Entity F1 %.2f (P %.2f, R %.2f), token accuracy %.4f",
             100 * report.f1, 100 * report.precision, 100 * report.recall, report.token_accuracy)
    _write_frame(frame, run.output, "%.2f")
    return EXIT_OK


def cmd_predict(run: RunConfig) -> int:
    _check_output_dirs(run.output)
    store = _load_store(run)
    model = load_model(run.model, store)
    data = read_conll(run.input, tagged=False)
    predictions = predict_batch(model, data.sentences, store)
    tagged: List[Sentence] = [s.with_tags(tags) for s, tags in zip(data, predictions)]
    if run.output is None:
        write_conll(tagged, sys.stdout)
        return EXIT_OK
    try:
        with open(run.output, "w", encoding="utf-8", newline="\n") as handle:
            write_conll(tagged, handle)
    except OSError as err:
        raise OutputError(run.output, err.strerror or str(err)) from err
    return EXIT_OK


def cmd_coverage(run: RunConfig) -> int:
    _check_output_dirs(run.output)
    store = _load_store(run)
    name = run.dataset_name or store.name
    reports = []
    for split in ("train", "dev", "test"):
        path = getattr(run, split)
        if path is not None:
            reports.append(coverage_report(store, read_conll(path, run.scheme), name, split))
    _write_frame(coverage_frame(reports), run.output)
    return EXIT_OK


def cmd_gradcheck(run: RunConfig) -> int:
    build, loss_fn = toy_gradcheck_problem(run.training.seed)
    report = grad_check(build, loss_fn, run.tolerance)
    worst = report.worst(1)[0]
    print(f"{'PASS' if report.passed else 'FAIL'} {len(report.checks)} coordinates, "
          f"worst rel error {worst.rel_error:.3g} ({worst.parameter})")
    report.raise_for_failure()
    return EXIT_OK


def cmd_search(run: RunConfig) -> int:
    _check_output_dirs(run.output)
    store = _load_store(run)
    data = _training_data(run)
    best, results = random_search(SearchSpace(), run.trials, data, store, run.training.seed, base=run.training)
    _write_frame(search_frame(results), run.output)
    log.info("Best trial config: %s", best)
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "coverage": cmd_coverage,
    "grad-check": cmd_gradcheck,
    "search": cmd_search,
}


def setup_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_args(argv)
        setup_logging(args.verbose, args.quiet)
        run = RunConfig.from_args(args)
        return COMMANDS[run.subcommand](run)
    except UsageError as err:
        build_parser().print_usage(sys.stderr)
        print(str(err), file=sys.stderr)
        return err.exit_code
    except NerForgeError as err:
        log.error("%s", err)
        return err.exit_code
    except SystemExit as err:
        # --help
        return int(err.code or 0) if isinstance(err.code, int) else EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
