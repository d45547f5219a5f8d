from pathlib import Path

import numpy as np
import pytest

from ner_forge.corpus import Dataset, Sentence, write_conll
from ner_forge.embeddings import EmbeddingStore
from ner_forge.model import build_model

CHEMICALS = ["Aspirin", "Cisplatin", "Ibuprofen", "Heparin"]
DISEASES = [("lung", "cancer"), ("heart", "failure"), ("renal", "disease")]
FILLER = ["the", "patient", "was", "given", "for", "after", "treatment", "of", "with", "a", "history"]
EMBEDDING_DIM = 8


def synthetic_sentences(n=50, seed=0):
    """Sentences where every word has a fixed tag: chemicals, two-word diseases, filler."""
    rng = np.random.default_rng(seed)
    sentences = []
    for i in range(n):
        chem = CHEMICALS[rng.integers(len(CHEMICALS))]
        first, second = DISEASES[rng.integers(len(DISEASES))]
        kind = i % 3
        if kind == 0:
            words = ["The", "patient", "was", "given", chem, "for", first, second, "."]
            tags = ["O", "O", "O", "O", "B-Chemical", "O", "B-Disease", "I-Disease", "O"]
        elif kind == 1:
            words = [chem, "treatment", "after", "a", "history", "of", first, second]
            tags = ["B-Chemical", "O", "O", "O", "O", "O", "B-Disease", "I-Disease"]
        else:
            words = ["treatment", "with", chem, "."]
            tags = ["O", "O", "B-Chemical", "O"]
        sentences.append(Sentence.from_pairs(words, tags))
    return sentences


def vocabulary():
    words = [w.lower() for w in CHEMICALS] + [w for pair in DISEASES for w in pair] + FILLER + ["."]
    return sorted(set(words))


def embedding_text(words, dim=EMBEDDING_DIM, seed=1, header=False):
    rng = np.random.default_rng(seed)
    lines = [f"{len(words)} {dim}"] if header else []
    for word in words:
        lines.append(word + " " + " ".join(f"{v:.6f}" for v in rng.normal(size=dim)))
    return "\n".join(lines) + "\n"


def write_text(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


@pytest.fixture
def corpus():
    return Dataset(tuple(synthetic_sentences()))


@pytest.fixture
def store():
    words = vocabulary()
    rng = np.random.default_rng(1)
    return EmbeddingStore("synthetic", words, rng.normal(size=(len(words), EMBEDDING_DIM)))


@pytest.fixture
def tiny_model(corpus, store):
    return build_model(corpus, store, 7, lstm_state=6, char_emb_dim=4, cnn_filters=5, case_emb_dim=2, dropout=0.0)


@pytest.fixture
def corpus_file(tmp_path):
    path = tmp_path / "train.conll"
    with open(path, "w", encoding="utf-8") as handle:
        write_conll(synthetic_sentences(), handle)
    return path


@pytest.fixture
def dev_file(tmp_path):
    path = tmp_path / "dev.conll"
    with open(path, "w", encoding="utf-8") as handle:
        write_conll(synthetic_sentences(n=10, seed=5), handle)
    return path


@pytest.fixture
def embeddings_file(tmp_path):
    return write_text(tmp_path / "vectors.txt", embedding_text(vocabulary()))
