"""BiLSTM-CNN-Char tagger.

Each token is represented by its frozen word vector, a trainable casing
embedding and a char-CNN vector. A BiLSTM runs over the sentence; the forward
and backward states are decoded by separate linear layers whose logits are
summed before a single log-softmax. Decoding is greedy with BIO repair.
"""

from __future__ import annotations

import io
import json
import logging
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ner_forge import autodiff as ad
from ner_forge.config import (
    CASE_EMB_DIM,
    CHAR_EMB_DIM,
    CNN_FILTERS,
    CNN_KERNEL,
    DROPOUT,
    FORGET_BIAS,
    LSTM_STATE,
    MODEL_FORMAT_VERSION,
    MODEL_MAGIC,
    NUM_CASE_CATEGORIES,
)
from ner_forge.corpus import OUTSIDE, Dataset, Sentence, TagScheme, repair_bio
from ner_forge.embeddings import EmbeddingStore
from ner_forge.errors import ConfigError, DimensionError, ModelFormatError, OutputError
from ner_forge.features import CaseCategory, CharVocab, build_char_vocab, case_ids, encode_chars
from ner_forge.seeding import rng_stream

log = logging.getLogger("ner_forge")

PARAMETER_ORDER = (
    "char_embedding",
    "cnn_filters",
    "cnn_bias",
    "case_embedding",
    "lstm_fwd_W",
    "lstm_fwd_U",
    "lstm_fwd_b",
    "lstm_bwd_W",
    "lstm_bwd_U",
    "lstm_bwd_b",
    "decode_fwd_W",
    "decode_fwd_b",
    "decode_bwd_W",
    "decode_bwd_b",
)


@dataclass(frozen=True)
class TaggerConfig:
    word_dim: int
    tags: Tuple[str, ...]
    char_vocab_size: int
    char_emb_dim: int = CHAR_EMB_DIM
    cnn_filters: int = CNN_FILTERS
    cnn_kernel: int = CNN_KERNEL
    case_emb_dim: int = CASE_EMB_DIM
    lstm_state: int = LSTM_STATE
    dropout: float = DROPOUT

    def __post_init__(self):
        object.__setattr__(self, "tags", tuple(self.tags))
        dims = ("word_dim", "char_vocab_size", "char_emb_dim", "cnn_filters", "cnn_kernel", "case_emb_dim", "lstm_state")
        for name in dims:
            if int(getattr(self, name)) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.tags or OUTSIDE not in self.tags or len(set(self.tags)) != len(self.tags):
            raise ConfigError("tag list must be unique and contain 'O'")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")

    @classmethod
    def for_dataset(cls, data: Dataset, store: EmbeddingStore, **overrides) -> "TaggerConfig":
        return cls(
            word_dim=store.dim,
            tags=data.converted(TagScheme.BIO).tag_set,
            char_vocab_size=build_char_vocab(data).size,
            **overrides,
        )

    @property
    def num_tags(self) -> int:
        return len(self.tags)

    @property
    def input_dim(self) -> int:
        return self.word_dim + self.case_emb_dim + self.cnn_filters


def _glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _parameter_specs(config: TaggerConfig):
    """(name, shape, init, fan_in, fan_out) in file order."""
    k, dc, nf, s, d, K = (
        config.cnn_kernel,
        config.char_emb_dim,
        config.cnn_filters,
        config.lstm_state,
        config.input_dim,
        config.num_tags,
    )
    specs = [
        ("char_embedding", (config.char_vocab_size, dc), "glorot", config.char_vocab_size, dc),
        ("cnn_filters", (k, dc, nf), "glorot", k * dc, k * nf),
        ("cnn_bias", (nf,), "zeros", 0, 0),
        ("case_embedding", (NUM_CASE_CATEGORIES, config.case_emb_dim), "glorot", NUM_CASE_CATEGORIES, config.case_emb_dim),
    ]
    for direction in ("fwd", "bwd"):
        specs += [
            (f"lstm_{direction}_W", (d, 4 * s), "glorot", d, 4 * s),
            (f"lstm_{direction}_U", (s, 4 * s), "glorot", s, 4 * s),
            (f"lstm_{direction}_b", (4 * s,), "forget_bias", 0, 0),
        ]
    for direction in ("fwd", "bwd"):
        specs += [
            (f"decode_{direction}_W", (s, K), "glorot", s, K),
            (f"decode_{direction}_b", (K,), "zeros", 0, 0),
        ]
    return specs


@dataclass
class TaggerModel:
    config: TaggerConfig
    char_vocab: CharVocab
    params: Dict[str, ad.Parameter]
    embedding_name: str = ""
    seed: int = 0
    tag_index: Dict[str, int] = field(init=False)

    def __post_init__(self):
        self.tag_index = {t: i for i, t in enumerate(self.config.tags)}
        if list(self.params) != list(PARAMETER_ORDER):
            raise ModelFormatError("parameters missing or out of order")

    @property
    def dtype(self):
        return self.params["char_embedding"].dtype

    def parameters(self) -> List[ad.Parameter]:
        return list(self.params.values())

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def lstm(self, direction: str) -> ad.LSTMWeights:
        p = self.params
        return ad.LSTMWeights(p[f"lstm_{direction}_W"], p[f"lstm_{direction}_U"], p[f"lstm_{direction}_b"])

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def with_parameters(self, arrays: Dict[str, np.ndarray]) -> "TaggerModel":
        params = {name: ad.Parameter(name, arrays[name].copy(), p.init) for name, p in self.params.items()}
        return TaggerModel(self.config, self.char_vocab, params, self.embedding_name, self.seed)

    def copy(self) -> "TaggerModel":
        return self.with_parameters(self.snapshot())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()


def init_model(
    config: TaggerConfig,
    seed: int,
    char_vocab: Optional[CharVocab] = None,
    embedding_name: str = "",
    dtype=np.float32,
) -> TaggerModel:
    """Glorot-uniform matrices, zero biases, LSTM forget-gate bias 1."""
    if char_vocab is None:
        char_vocab = CharVocab(())
    if char_vocab.size > config.char_vocab_size:
        raise ConfigError(f"character vocabulary ({char_vocab.size}) larger than configured {config.char_vocab_size}")
    rng = rng_stream(seed, "init")
    params: Dict[str, ad.Parameter] = {}
    s = config.lstm_state
    for name, shape, init, fan_in, fan_out in _parameter_specs(config):
        if init == "glorot":
            data = _glorot(rng, shape, fan_in, fan_out)
        else:
            data = np.zeros(shape)
            if init == "forget_bias":
                data[s:2 * s] = FORGET_BIAS
        params[name] = ad.Parameter(name, data.astype(dtype), init)
    return TaggerModel(config, char_vocab, params, embedding_name, seed)


def build_model(data: Dataset, store: EmbeddingStore, seed: int, **overrides) -> TaggerModel:
    """Fresh model sized for a training set: BIO tag list, its char vocabulary, the store's dim."""
    config = TaggerConfig.for_dataset(data, store, **overrides)
    return init_model(config, seed, build_char_vocab(data), store.name)


@dataclass
class EncodedBatch:
    word_vectors: np.ndarray  # B x T x word_dim
    case_ids: np.ndarray  # B x T
    char_ids: np.ndarray  # B x T x L
    char_lengths: np.ndarray  # B x T
    mask: np.ndarray  # B x T
    gold: Optional[np.ndarray] = None  # B x T

    @property
    def shape(self) -> Tuple[int, int]:
        return self.mask.shape


def encode_batch(
    model: TaggerModel,
    sentences: Sequence[Sentence],
    store: EmbeddingStore,
    with_gold: bool = False,
    length: Optional[int] = None,
) -> EncodedBatch:
    """Pad sentences to the longest one (or ``length``) and words to the longest word."""
    if store.dim != model.config.word_dim:
        raise DimensionError(f"embedding dim {store.dim} does not match model word_dim {model.config.word_dim}")
    k = model.config.cnn_kernel
    B = len(sentences)
    T = max(len(s) for s in sentences)
    if length is not None:
        T = max(T, length)
    L = max(k, max(len(w) for s in sentences for w in s.surfaces))

    word_vectors = np.zeros((B, T, store.dim), dtype=model.dtype)
    case = np.full((B, T), int(CaseCategory.PAD), dtype=np.int64)
    chars = np.zeros((B, T, L), dtype=np.int64)
    char_lengths = np.full((B, T), k, dtype=np.int64)
    mask = np.zeros((B, T), dtype=bool)
    gold = np.zeros((B, T), dtype=np.int64) if with_gold else None

    for b, sentence in enumerate(sentences):
        n = len(sentence)
        surfaces = sentence.surfaces
        vectors, _ = store.lookup_many(surfaces)
        word_vectors[b, :n] = vectors
        mask[b, :n] = True
        case[b, :n] = case_ids(surfaces)
        for t, surface in enumerate(surfaces):
            ids = encode_chars(surface, model.char_vocab, k)
            chars[b, t, : len(ids)] = ids
            char_lengths[b, t] = len(ids)
        if with_gold:
            gold[b, :n] = [model.tag_index[tag] for tag in sentence.tags]
    return EncodedBatch(word_vectors, case, chars, char_lengths, mask, gold)


def forward_encoded(
    model: TaggerModel,
    batch: EncodedBatch,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
    dropout: Optional[float] = None,
) -> ad.Value:
    """Log-probabilities [B x T x K] for an encoded batch."""
    p = model.params
    rate = model.config.dropout if dropout is None else dropout
    B, T = batch.shape

    char_vectors = ad.embedding(p["char_embedding"], batch.char_ids)
    flat = ad.reshape(char_vectors, (B * T,) + char_vectors.shape[2:])
    char_features = ad.conv1d_maxpool(flat, p["cnn_filters"], p["cnn_bias"], batch.char_lengths.reshape(-1))
    char_features = ad.reshape(char_features, (B, T, model.config.cnn_filters))

    words = ad.constant(batch.word_vectors, dtype=model.dtype)
    casing = ad.embedding(p["case_embedding"], batch.case_ids)
    inputs = ad.dropout(ad.concat([words, casing, char_features], axis=-1), rate, training, rng)

    hf, hb = ad.bilstm(inputs, model.lstm("fwd"), model.lstm("bwd"), batch.mask)
    hf = ad.dropout(hf, rate, training, rng)
    hb = ad.dropout(hb, rate, training, rng)
    logits = ad.add(
        ad.affine(hf, p["decode_fwd_W"], p["decode_fwd_b"]),
        ad.affine(hb, p["decode_bwd_W"], p["decode_bwd_b"]),
    )
    return ad.log_softmax(logits)


def forward_batch(model, sentences, store, training=False, rng=None, dropout=None) -> Tuple[ad.Value, np.ndarray]:
    batch = encode_batch(model, sentences, store)
    return forward_encoded(model, batch, training, rng, dropout), batch.mask


def forward_scores(
    model: TaggerModel,
    sentence: Sentence,
    store: EmbeddingStore,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> ad.Value:
    """Log-probabilities [T x K] for one sentence."""
    scores, _ = forward_batch(model, [sentence], store, training, rng)
    return ad.take(scores, 0, axis=0)


def decode(model: TaggerModel, scores: np.ndarray) -> List[str]:
    """Greedy argmax (lowest tag index on ties), then BIO repair."""
    return repair_bio([model.config.tags[i] for i in np.argmax(scores, axis=-1)])


def predict_tags(model: TaggerModel, sentence: Sentence, store: EmbeddingStore) -> List[str]:
    return decode(model, forward_scores(model, sentence, store).data)


def predict_batch(
    model: TaggerModel,
    sentences: Sequence[Sentence],
    store: EmbeddingStore,
    batch_size: int = 32,
) -> List[List[str]]:
    predictions: List[List[str]] = []
    for start in range(0, len(sentences), batch_size):
        chunk = sentences[start:start + batch_size]
        scores, _ = forward_batch(model, chunk, store)
        for b, sentence in enumerate(chunk):
            predictions.append(decode(model, scores.data[b, : len(sentence)]))
    return predictions


# Model file: magic, u16 version, u32 metadata length, JSON metadata, then
# per tensor: u16 name length, name, u8 rank, u32 dims, little-endian float32.


def _metadata(model: TaggerModel) -> dict:
    return {
        "config": asdict(model.config),
        "char_vocab": list(model.char_vocab.chars),
        "embedding": {"name": model.embedding_name, "dim": model.config.word_dim},
        "seed": model.seed,
        "parameters": list(PARAMETER_ORDER),
    }


def save_model(model: TaggerModel, path) -> None:
    meta = json.dumps(_metadata(model), sort_keys=True, ensure_ascii=False).encode("utf-8")
    handle = io.BytesIO()
    handle.write(MODEL_MAGIC)
    handle.write(struct.pack("<HI", MODEL_FORMAT_VERSION, len(meta)))
    handle.write(meta)
    for name in PARAMETER_ORDER:
        data = model.params[name].data
        encoded = name.encode("utf-8")
        handle.write(struct.pack("<H", len(encoded)))
        handle.write(encoded)
        handle.write(struct.pack("<B", data.ndim))
        handle.write(struct.pack(f"<{data.ndim}I", *data.shape))
        handle.write(np.ascontiguousarray(data, dtype="<f4").tobytes())
    try:
        Path(path).write_bytes(handle.getvalue())
    except OSError as err:
        raise OutputError(path, err.strerror or str(err)) from err
    log.info("Saved model (%d parameters) to %s", model.num_parameters(), path)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, size: int) -> bytes:
        if self.pos + size > len(self.blob):
            raise ModelFormatError("model file is truncated")
        chunk = self.blob[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_model(path, store: EmbeddingStore) -> TaggerModel:
    try:
        blob = Path(path).read_bytes()
    except OSError as err:
        raise ModelFormatError(f"cannot read model file {path} ({err.strerror})") from err
    reader = _Reader(blob)
    if reader.take(len(MODEL_MAGIC)) != MODEL_MAGIC:
        raise ModelFormatError(f"{path} is not a model file (bad magic)")
    version, meta_len = reader.unpack("<HI")
    if version != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version}")
    try:
        meta = json.loads(reader.take(meta_len).decode("utf-8"))
        config = TaggerConfig(**meta["config"])
        embedding_name, embedding_dim = meta["embedding"]["name"], meta["embedding"]["dim"]
        char_vocab, seed = CharVocab(tuple(meta["char_vocab"])), meta["seed"]
    except (ValueError, KeyError, TypeError, ConfigError) as err:
        raise ModelFormatError(f"corrupt model metadata ({err})") from err
    if embedding_dim != store.dim:
        raise DimensionError(
            f"model expects {embedding_dim}-dim embeddings ({embedding_name}), store {store.name} has {store.dim}"
        )
    params: Dict[str, ad.Parameter] = {}
    inits = {name: init for name, _, init, _, _ in _parameter_specs(config)}
    for expected in PARAMETER_ORDER:
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        if name != expected:
            raise ModelFormatError(f"expected tensor {expected}, found {name}")
        (rank,) = reader.unpack("<B")
        shape = reader.unpack(f"<{rank}I")
        count = int(np.prod(shape)) if rank else 1
        data = np.frombuffer(reader.take(4 * count), dtype="<f4").astype(np.float32).reshape(shape)
        params[name] = ad.Parameter(name, data, inits.get(name, ""))
    if reader.pos != len(blob):
        raise ModelFormatError("trailing bytes after the last tensor")
    model = TaggerModel(config, char_vocab, params, embedding_name, seed)
    log.info("Loaded model from %s (%d tags)", path, config.num_tags)
    return model


def toy_gradcheck_problem(seed: int = 0):
    """64-bit toy tagger (word dim 5, state 4, 3 tags, 3 tokens) and its loss."""
    sentence = Sentence.from_pairs(["Aspirin", "relieves", "pain"], ["B-D", "I-D", "O"])
    rng = np.random.default_rng(seed)
    words = sorted({w.lower() for w in sentence.surfaces})
    store = EmbeddingStore("toy", words, rng.normal(size=(len(words), 5)))
    data = Dataset((sentence,))
    config = TaggerConfig(
        word_dim=5,
        tags=("O", "B-D", "I-D"),
        char_vocab_size=build_char_vocab(data).size,
        char_emb_dim=3,
        cnn_filters=4,
        case_emb_dim=2,
        lstm_state=4,
        dropout=0.0,
    )

    def build() -> TaggerModel:
        return init_model(config, seed, build_char_vocab(data), store.name, dtype=np.float64)

    def loss_fn(model: TaggerModel) -> ad.Value:
        batch = encode_batch(model, [sentence], store, with_gold=True)
        return ad.masked_nll(forward_encoded(model, batch), batch.gold, batch.mask)

    return build, loss_fn
