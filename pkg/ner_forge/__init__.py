"""Biomedical named entity recognition with a BiLSTM-CNN-Char tagger."""

from ner_forge.corpus import Dataset, EntitySpan, Sentence, TagScheme, Token, read_conll
from ner_forge.embeddings import EmbeddingStore, coverage_report, load_text_embeddings
from ner_forge.evaluation import EvalReport, evaluate
from ner_forge.model import TaggerConfig, TaggerModel, init_model, load_model, predict_tags, save_model
from ner_forge.training import TrainConfig, random_search, train

__all__ = [
    "Dataset",
    "EmbeddingStore",
    "EntitySpan",
    "EvalReport",
    "Sentence",
    "TagScheme",
    "TaggerConfig",
    "TaggerModel",
    "Token",
    "TrainConfig",
    "coverage_report",
    "evaluate",
    "init_model",
    "load_text_embeddings",
    "load_model",
    "predict_tags",
    "random_search",
    "read_conll",
    "save_model",
    "train",
]
