"""Model assembly, training loop, and checkpoint serialization.

The full architecture stacks: subword features, a bidirectional recurrent
encoder, a tanh hidden projection, single-head self-attention with a
residual connection, and a linear emission layer feeding a linear-chain
CRF. Baseline variants strip parts of that stack:

    lstm_softmax        unigram features, unidirectional encoder, softmax
    bilstm_softmax      unigram features, bidirectional encoder, softmax
    bilstm_crf          unigram features, CRF output
    bilstm_crf_char     + token composer over unigrams
    bilstm_crf_bigram   + bigram windows
    bilstm_crf_trigram  + trigram windows
    sgnws               + 4-gram windows and self-attention

Training is per-sentence gradient descent with Adamax, global-norm
clipping, and epoch-level model selection on dev tag F. Everything is
deterministic given (config, seed, corpus). Training mutates parameters
and is single-threaded by contract; predict only reads them, so a loaded
model is safe for concurrent callers.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass

import numpy as np

from . import crf as crf_mod
from .corpus import N_TAGS, WHITESPACE, DatasetSplit, Sentence, ids_to_tags, tag_ids
from .errors import BadConfig, BadMagic, EmptyCorpus, LengthMismatch, ShapeMismatch, VocabMismatch
from .metrics import tag_prf
from .nncore import (
    AdamaxState,
    AttentionParams,
    DenseParams,
    LstmParams,
    adamax_step,
    bilstm_backward,
    bilstm_forward,
    clip_global_norm,
    dense_backward,
    dense_forward,
    log_softmax,
    lstm_backward,
    lstm_forward,
    self_attention,
    self_attention_backward,
    softmax,
    variational_dropout,
)
from .subword import NgramVocab, SubwordEmbedder, char_features_backward, char_features_cached

Array = np.ndarray

CHECKPOINT_MAGIC = b"CSEG"
CHECKPOINT_VERSION = 1

# variant -> (n-gram orders, token composer, bidirectional, crf output)
VARIANTS: dict[str, tuple[tuple[int, ...], bool, bool, bool]] = {
    "lstm_softmax": ((1,), False, False, False),
    "bilstm_softmax": ((1,), False, True, False),
    "bilstm_crf": ((1,), False, True, True),
    "bilstm_crf_char": ((1,), True, True, True),
    "bilstm_crf_bigram": ((1, 2), True, True, True),
    "bilstm_crf_trigram": ((1, 2, 3), True, True, True),
    "sgnws": ((1, 2, 3, 4), True, True, True),
}


@dataclass
class ModelConfig:
    """Hyper-parameters and variant switches; None booleans resolve to the
    variant's default so baselines never silently inherit CRF-only flags."""

    variant: str = "sgnws"
    d_emb: int = 64
    hidden: int = 200
    num_layers: int = 1
    attn_width: int = 0  # 0 -> encoder output width
    dropout: float = 0.25
    lr: float = 0.025
    lr_decay: float = 1.0  # per-epoch multiplier, 1.0 = constant rate
    grad_clip: float = 5.0
    epochs: int = 40
    optimizer: str = "adamax"
    batch_size: int = 1
    seed: int = 0
    use_attention: bool | None = None
    use_4grams: bool = True
    use_start_scores: bool | None = None
    constrained_decode: bool | None = None

    def is_crf(self) -> bool:
        return VARIANTS[self.variant][3]

    def resolve(self) -> "ModelConfig":
        """Fill variant-dependent defaults and validate the result."""
        if self.variant not in VARIANTS:
            raise BadConfig(f"unknown variant {self.variant!r}")
        cfg = dataclasses.replace(self)
        crf = cfg.is_crf()
        if cfg.use_attention is None:
            cfg.use_attention = cfg.variant == "sgnws"
        if cfg.use_start_scores is None:
            cfg.use_start_scores = crf
        if cfg.constrained_decode is None:
            cfg.constrained_decode = crf
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise BadConfig(f"unknown variant {self.variant!r}")
        for name in ("d_emb", "hidden", "num_layers", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise BadConfig(f"{name} must be >= 1")
        if self.lr <= 0 or self.grad_clip <= 0 or self.lr_decay <= 0:
            raise BadConfig("lr, grad_clip and lr_decay must be positive")
        if not (0.0 <= self.dropout < 1.0):
            raise BadConfig("dropout must lie in [0, 1)")
        if self.attn_width < 0:
            raise BadConfig("attn_width must be >= 0")
        if self.optimizer != "adamax":
            raise BadConfig(f"unsupported optimizer {self.optimizer!r}")
        crf = self.is_crf()
        if self.use_attention and self.variant != "sgnws":
            raise BadConfig(f"use_attention is only valid for variant sgnws, not {self.variant}")
        if self.use_start_scores and not crf:
            raise BadConfig(f"use_start_scores needs a CRF variant, not {self.variant}")
        if self.constrained_decode and not crf:
            raise BadConfig(f"constrained_decode needs a CRF variant, not {self.variant}")

    def feature_orders(self) -> tuple[int, ...]:
        orders, _, _, _ = VARIANTS[self.variant]
        if self.variant == "sgnws" and not self.use_4grams:
            orders = (1, 2, 3)
        return orders

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise BadConfig(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class ForwardCache:
    feat: object
    mask_in: Array | None
    enc_caches: list
    mask_out: Array | None
    dense_cache: object
    attn_cache: object | None
    out_cache: object


class Model:
    """A built network bound to one vocabulary."""

    def __init__(self, config: ModelConfig, vocab: NgramVocab):
        config = config.resolve()
        self.config = config
        self.vocab = vocab
        self.vocab_hash = vocab.sha256()
        rng = np.random.default_rng([config.seed, 0])

        orders = config.feature_orders()
        _, use_composer, bidirectional, use_crf = VARIANTS[config.variant]
        self.bidirectional = bidirectional
        self.embedder = SubwordEmbedder.init(
            vocab, config.d_emb, orders=orders, use_composer=use_composer, rng=rng
        )
        enc_out = 2 * config.hidden if bidirectional else config.hidden
        self.encoder: list[tuple[LstmParams, LstmParams | None]] = []
        d_in = self.embedder.feature_width
        for _ in range(config.num_layers):
            fwd = LstmParams.init(d_in, config.hidden, rng)
            bwd = LstmParams.init(d_in, config.hidden, rng) if bidirectional else None
            self.encoder.append((fwd, bwd))
            d_in = enc_out
        width = config.attn_width if config.attn_width > 0 else enc_out
        self.hidden_proj = DenseParams.init(enc_out, width, rng)
        self.attn = AttentionParams.init(width, rng) if config.use_attention else None
        self.out_proj = DenseParams.init(width, N_TAGS, rng)
        self.crf = crf_mod.CrfParams.init(N_TAGS, rng) if use_crf else None
        if self.crf is not None and not config.use_start_scores:
            self.crf.start[:] = 0.0

    # -- parameter bookkeeping ------------------------------------------------

    def tensors(self, trainable_only: bool = True) -> dict[str, Array]:
        out = dict(self.embedder.tensors())
        for i, (fwd, bwd) in enumerate(self.encoder):
            out.update(fwd.tensors(f"enc{i}.fwd."))
            if bwd is not None:
                out.update(bwd.tensors(f"enc{i}.bwd."))
        out.update(self.hidden_proj.tensors("dense."))
        if self.attn is not None:
            out.update(self.attn.tensors("attn."))
        out.update(self.out_proj.tensors("out."))
        if self.crf is not None:
            out["crf.transitions"] = self.crf.transitions
            if self.config.use_start_scores or not trainable_only:
                out["crf.start"] = self.crf.start
        return out

    def parameter_count(self) -> int:
        return sum(int(v.size) for v in self.tensors(trainable_only=False).values())

    # -- forward / backward ----------------------------------------------------

    def _dropout_rng(self, seed: int | None) -> np.random.Generator | None:
        return None if seed is None else np.random.default_rng(seed)

    def emissions(self, text: str, mode: str = "eval", seed: int | None = None) -> tuple[Array, ForwardCache]:
        rng = self._dropout_rng(seed)
        F, feat_cache = char_features_cached(text, self.vocab, self.embedder)
        drop = self.config.dropout
        X, mask_in = variational_dropout(F, drop, mode, rng)
        enc_caches = []
        cur = X
        for fwd, bwd in self.encoder:
            if bwd is None:
                cur, cache = lstm_forward(fwd, cur)
            else:
                cur, cache = bilstm_forward(fwd, bwd, cur)
            enc_caches.append(cache)
        cur, mask_out = variational_dropout(cur, drop, mode, rng)
        D, dense_cache = dense_forward(self.hidden_proj, cur, activation="tanh")
        attn_cache = None
        Z = D
        if self.attn is not None:
            Z, attn_cache = self_attention(self.attn, D)
        E, out_cache = dense_forward(self.out_proj, Z)
        return E, ForwardCache(
            feat=feat_cache, mask_in=mask_in, enc_caches=enc_caches, mask_out=mask_out,
            dense_cache=dense_cache, attn_cache=attn_cache, out_cache=out_cache,
        )

    def _backward(self, cache: ForwardCache, dE: Array) -> dict[str, Array]:
        grads: dict[str, Array] = {}
        dZ, g = dense_backward(self.out_proj, cache.out_cache, dE)
        grads.update({f"out.{k}": v for k, v in g.items()})
        if self.attn is not None:
            dZ, g = self_attention_backward(self.attn, cache.attn_cache, dZ)
            grads.update({f"attn.{k}": v for k, v in g.items()})
        dY, g = dense_backward(self.hidden_proj, cache.dense_cache, dZ)
        grads.update({f"dense.{k}": v for k, v in g.items()})
        if cache.mask_out is not None:
            dY = dY * cache.mask_out
        for i in range(len(self.encoder) - 1, -1, -1):
            fwd, bwd = self.encoder[i]
            if bwd is None:
                dY, g_f = lstm_backward(fwd, cache.enc_caches[i], dY)
                grads.update({f"enc{i}.fwd.{k}": v for k, v in g_f.items()})
            else:
                dY, g_f, g_b = bilstm_backward(fwd, bwd, cache.enc_caches[i], dY)
                grads.update({f"enc{i}.fwd.{k}": v for k, v in g_f.items()})
                grads.update({f"enc{i}.bwd.{k}": v for k, v in g_b.items()})
        if cache.mask_in is not None:
            dY = dY * cache.mask_in
        grads.update(char_features_backward(cache.feat, dY, self.embedder))
        return grads

    def loss(self, text: str, gold: np.ndarray, mode: str = "train", seed: int | None = None) -> tuple[float, dict[str, Array]]:
        """Sentence loss and gradients for every trainable tensor.

        CRF variants use the sequence negative log-likelihood; softmax
        variants use mean per-position cross-entropy.
        """
        if len(text) != len(gold):
            raise LengthMismatch(f"{len(text)} characters vs {len(gold)} tags")
        E, cache = self.emissions(text, mode=mode, seed=seed)
        if self.crf is not None:
            value, cg = crf_mod.nll_loss(E, gold, self.crf)
            dE = cg.emissions
            grads = self._backward(cache, dE)
            grads["crf.transitions"] = cg.transitions
            if self.config.use_start_scores:
                grads["crf.start"] = cg.start
        else:
            L = len(text)
            logp = log_softmax(E, axis=-1)
            value = float(-np.mean(logp[np.arange(L), gold]))
            dE = softmax(E, axis=-1)
            dE[np.arange(L), gold] -= 1.0
            dE /= L
            grads = self._backward(cache, dE)
        return value, grads

    # -- inference --------------------------------------------------------------

    def predict(self, text: str) -> str:
        """Tag string for one normalized sentence."""
        if not text:
            return ""
        E, _ = self.emissions(text, mode="eval")
        if self.crf is not None:
            mask = None
            if self.config.constrained_decode:
                mask = crf_mod.grammar_mask([c in WHITESPACE for c in text])
            path, _ = crf_mod.viterbi_decode(E, self.crf, mask)
            return ids_to_tags(path)
        return ids_to_tags(np.argmax(E, axis=-1))


def build(config: ModelConfig, vocab: NgramVocab) -> Model:
    return Model(config, vocab)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_p: float
    dev_r: float
    dev_f: float

    def to_json(self) -> str:
        return json.dumps(
            {"epoch": self.epoch, "loss": round(self.train_loss, 6),
             "dev_p": round(self.dev_p, 6), "dev_r": round(self.dev_r, 6),
             "dev_f": round(self.dev_f, 6)},
            sort_keys=True,
        )


def _dev_metrics(model: Model, dev: list[tuple[Sentence, str]]) -> tuple[float, float, float]:
    gold = [tags for _, tags in dev]
    pred = [model.predict(s.text) for s, _ in dev]
    rep = tag_prf(gold, pred)
    return rep.micro.p, rep.micro.r, rep.micro.f


def train(model: Model, split: DatasetSplit, progress=None) -> list[EpochRecord]:
    """Run the full regimen and leave the best-dev parameters in the model.

    Per epoch: seeded shuffle, per-batch backprop, global-norm clipping,
    Adamax update; then dev evaluation. Dev must be non-empty up front so
    model selection is always defined.
    """
    cfg = model.config
    if not split.train:
        raise EmptyCorpus("training split is empty")
    if not split.dev:
        raise EmptyCorpus("dev split is empty")
    params = model.tensors()
    opt = AdamaxState.init(params, lr=cfg.lr)
    rng = np.random.default_rng([cfg.seed, 1])
    log: list[EpochRecord] = []
    best_f = -1.0
    best_state: dict[str, Array] | None = None

    train_ids = [(s, tag_ids(t)) for s, t in split.train]
    for epoch in range(cfg.epochs):
        opt.lr = cfg.lr * (cfg.lr_decay ** epoch)
        order = rng.permutation(len(train_ids))
        total = 0.0
        batch: dict[str, Array] | None = None
        batch_n = 0
        for si in order:
            sent, gold = train_ids[si]
            seed = int(rng.integers(0, 2**63 - 1))
            value, grads = model.loss(sent.text, gold, mode="train", seed=seed)
            total += value
            if batch is None:
                batch = grads
                batch_n = 1
            else:
                for k, v in grads.items():
                    batch[k] += v
                batch_n += 1
            if batch_n >= cfg.batch_size:
                _apply(opt, params, batch, batch_n, cfg.grad_clip)
                batch, batch_n = None, 0
        if batch is not None:
            _apply(opt, params, batch, batch_n, cfg.grad_clip)
        dev_p, dev_r, dev_f = _dev_metrics(model, split.dev)
        rec = EpochRecord(
            epoch=epoch, train_loss=total / len(train_ids),
            dev_p=dev_p, dev_r=dev_r, dev_f=dev_f,
        )
        log.append(rec)
        if progress is not None:
            progress(rec)
        if dev_f > best_f:
            best_f = dev_f
            best_state = {k: v.copy() for k, v in model.tensors(trainable_only=False).items()}
    if best_state is not None:
        current = model.tensors(trainable_only=False)
        for k, v in best_state.items():
            current[k][...] = v
    return log


def _apply(opt: AdamaxState, params: dict[str, Array], batch: dict[str, Array], n: int, clip: float) -> None:
    if n > 1:
        for v in batch.values():
            v /= n
    clip_global_norm(batch, clip)
    adamax_step(opt, params, batch)


# ---------------------------------------------------------------------------
# checkpoint format
#
#   bytes 0..3   magic "CSEG"
#   bytes 4..7   format version, uint32 little-endian
#   bytes 8..15  header length, uint64 little-endian
#   header       UTF-8 JSON, sorted keys: {"config", "metadata",
#                "tensors": [{"name", "shape", "offset"}...], "vocab_sha256"}
#   data         raw float64 little-endian tensors, C order, at the byte
#                offsets given in the directory (relative to data start)
# ---------------------------------------------------------------------------

@dataclass
class CheckpointData:
    config: dict
    metadata: dict
    vocab_sha256: str
    tensors: dict[str, Array]


def write_checkpoint(path, config: dict, vocab_sha256: str, metadata: dict, tensors: dict[str, Array]) -> None:
    names = sorted(tensors)
    directory = []
    offset = 0
    blobs = []
    for name in names:
        arr = np.ascontiguousarray(tensors[name], dtype=np.float64)
        blob = arr.astype("<f8").tobytes()
        directory.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(blob)
        offset += len(blob)
    header = {
        "config": config,
        "metadata": metadata,
        "tensors": directory,
        "vocab_sha256": vocab_sha256,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<Q", len(header_bytes)))
        f.write(header_bytes)
        for blob in blobs:
            f.write(blob)


def read_checkpoint(path) -> CheckpointData:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise BadMagic(f"not a checkpoint (magic {magic!r})")
        head = f.read(12)
        if len(head) != 12:
            raise BadMagic("truncated checkpoint header")
        version, header_len = struct.unpack("<IQ", head)
        if version != CHECKPOINT_VERSION:
            raise BadMagic(f"unsupported checkpoint version {version}")
        header_bytes = f.read(header_len)
        if len(header_bytes) != header_len:
            raise BadMagic("truncated checkpoint header")
        try:
            header = json.loads(header_bytes.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise BadMagic(f"corrupt checkpoint header: {exc}") from None
        data = f.read()
    try:
        directory = header["tensors"]
        config = header["config"]
        metadata = header["metadata"]
        vocab_sha256 = header["vocab_sha256"]
        entries = [(e["name"], tuple(e["shape"]), int(e["offset"])) for e in directory]
    except (KeyError, TypeError) as exc:
        raise BadMagic(f"malformed checkpoint header: {exc}") from None
    tensors: dict[str, Array] = {}
    for name, shape, start in entries:
        count = int(np.prod(shape)) if shape else 1
        end = start + 8 * count
        if start < 0 or end > len(data):
            raise ShapeMismatch(f"tensor {name} runs past end of file")
        arr = np.frombuffer(data[start:end], dtype="<f8").reshape(shape).copy()
        if not np.all(np.isfinite(arr)):
            raise ShapeMismatch(f"tensor {name} contains non-finite values")
        tensors[name] = arr
    return CheckpointData(
        config=config,
        metadata=metadata,
        vocab_sha256=vocab_sha256,
        tensors=tensors,
    )


def save_model(model: Model, path, metadata: dict | None = None) -> None:
    write_checkpoint(
        path,
        config=model.config.to_dict(),
        vocab_sha256=model.vocab_hash,
        metadata=metadata or {},
        tensors=model.tensors(trainable_only=False),
    )


def load_model(path, vocab: NgramVocab) -> Model:
    """Rebuild a model from a checkpoint, verifying shapes and vocabulary."""
    data = read_checkpoint(path)
    if vocab.sha256() != data.vocab_sha256:
        raise VocabMismatch(
            f"checkpoint was trained with vocab {data.vocab_sha256[:12]}..., "
            f"got {vocab.sha256()[:12]}..."
        )
    config = ModelConfig.from_dict(data.config)
    model = Model(config, vocab)
    expected = model.tensors(trainable_only=False)
    if set(expected) != set(data.tensors):
        missing = set(expected) ^ set(data.tensors)
        raise ShapeMismatch(f"tensor directory mismatch: {sorted(missing)}")
    for name, arr in data.tensors.items():
        if expected[name].shape != arr.shape:
            raise ShapeMismatch(f"tensor {name}: {arr.shape} vs expected {expected[name].shape}")
        expected[name][...] = arr
    return model
