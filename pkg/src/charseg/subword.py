"""Character n-gram vocabularies and per-character input features.

Each whitespace-delimited token is decomposed into unigram, bigram,
trigram and 4-gram windows anchored at every character position; windows
that run past the token end are right-padded with a filler symbol that is
an ordinary vocabulary entry with its own learned embedding. A token-level
vector comes from a small bidirectional LSTM over the per-position window
embeddings (final forward state concatenated with the backward state at
the first position). The per-character feature row concatenates that
character's window embeddings with its token's composed vector; whitespace
characters get a dedicated space embedding, filler windows, and a zero
token vector.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .corpus import WHITESPACE, _token_spans
from .errors import BadEscape, BadTag, EmptyCorpus, LengthMismatch, UninitializedEmbedder
from .nncore import LstmCache, LstmParams, lstm_backward, lstm_forward, uniform_init

Array = np.ndarray

FILLER = ""  # private-use codepoint, cannot collide with normalized text

PAD_ID = 0    # filler windows at whitespace positions
UNK_ID = 1
SPACE_ID = 2  # unigram table only

DEFAULT_ORDERS = (1, 2, 3, 4)
DEFAULT_MIN_FREQ = {1: 1, 2: 2, 3: 2, 4: 2}

_VOCAB_HEADER = "#charseg-vocab\t1"

_NG_ESCAPE = {"\\": "\\\\", "\t": "\\t", " ": "\\s", FILLER: "\\p"}
_NG_UNESCAPE = {"\\\\": "\\", "\\t": "\t", "\\s": " ", "\\p": FILLER}


def extract_ngrams(token: str, n: int) -> list[str]:
    """Sliding windows of width n; a too-short token yields one padded window."""
    if not token:
        raise ValueError("empty token")
    if len(token) < n:
        return [token + FILLER * (n - len(token))]
    return [token[i : i + n] for i in range(len(token) - n + 1)]


def anchored_ngrams(token: str, n: int) -> list[str]:
    """One window per character position, right-padded at the token end."""
    return [(token[i : i + n] + FILLER * n)[:n] for i in range(len(token))]


def _first_free(n: int) -> int:
    return SPACE_ID + 1 if n == 1 else UNK_ID + 1


@dataclass
class NgramVocab:
    """Frozen n-gram to id maps with reserved PAD/UNK (and SPACE for unigrams)."""

    orders: tuple[int, ...]
    maps: dict[int, dict[str, int]]
    freqs: dict[int, dict[str, int]]
    min_freq: dict[int, int]

    def size(self, n: int) -> int:
        return _first_free(n) + len(self.maps[n])

    def lookup(self, n: int, gram: str) -> int:
        return self.maps[n].get(gram, UNK_ID)

    def unigram_id(self, ch: str) -> int:
        if ch in WHITESPACE:
            return SPACE_ID
        return self.maps[1].get(ch, UNK_ID)

    def anchored_ids(self, token: str, n: int) -> np.ndarray:
        if n == 1:
            return np.array([self.unigram_id(c) for c in token], dtype=np.int64)
        m = self.maps[n]
        return np.array([m.get(g, UNK_ID) for g in anchored_ngrams(token, n)], dtype=np.int64)

    # -- serialization -------------------------------------------------------

    def _serialize(self) -> str:
        lines = [_VOCAB_HEADER]
        for n in self.orders:
            lines.append(f"#min_freq\t{n}\t{self.min_freq[n]}")
        for n in self.orders:
            for gram, gid in sorted(self.maps[n].items(), key=lambda kv: kv[1]):
                esc = "".join(_NG_ESCAPE.get(c, c) for c in gram)
                lines.append(f"{n}\t{esc}\t{gid}\t{self.freqs[n].get(gram, 0)}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(self._serialize())

    def sha256(self) -> str:
        return hashlib.sha256(self._serialize().encode("utf-8")).hexdigest()

    @classmethod
    def load(cls, path) -> "NgramVocab":
        maps: dict[int, dict[str, int]] = {}
        freqs: dict[int, dict[str, int]] = {}
        min_freq: dict[int, int] = {}
        with open(path, "r", encoding="utf-8", newline="\n") as f:
            header = f.readline().rstrip("\n")
            if header != _VOCAB_HEADER:
                raise BadTag(1, f"bad vocab header {header!r}")
            for line_no, line in enumerate(f, start=2):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    if line.startswith("#min_freq\t"):
                        _, n_str, mf = line.split("\t")
                        min_freq[int(n_str)] = int(mf)
                        continue
                    parts = line.split("\t")
                    if len(parts) != 4:
                        raise ValueError("wrong field count")
                    n = int(parts[0])
                    gram = _unescape_ngram(parts[1], line_no)
                    gid = int(parts[2])
                    maps.setdefault(n, {})[gram] = gid
                    freqs.setdefault(n, {})[gram] = int(parts[3])
                except ValueError as exc:
                    raise BadTag(line_no, f"expected <n>\\t<ngram>\\t<id>\\t<freq>: {exc}") from None
        orders = tuple(sorted(min_freq))
        for n in orders:
            maps.setdefault(n, {})
            freqs.setdefault(n, {})
        return cls(orders=orders, maps=maps, freqs=freqs, min_freq=min_freq)


def _unescape_ngram(text: str, line_no: int) -> str:
    out = []
    i = 0
    while i < len(text):
        if text[i] == "\\":
            piece = text[i : i + 2]
            if piece not in _NG_UNESCAPE:
                raise BadEscape(line_no, f"bad escape {piece!r}")
            out.append(_NG_UNESCAPE[piece])
            i += 2
        else:
            out.append(text[i])
            i += 1
    return "".join(out)


def build_vocab(
    sentences: Iterable[str],
    min_freq: dict[int, int] | None = None,
    orders: tuple[int, ...] = DEFAULT_ORDERS,
) -> NgramVocab:
    """Count anchored windows over all tokens, keep those at or above the
    per-order frequency threshold, and assign dense ids in first-seen order."""
    min_freq = dict(DEFAULT_MIN_FREQ if min_freq is None else min_freq)
    counts: dict[int, Counter] = {n: Counter() for n in orders}
    first_seen: dict[int, dict[str, int]] = {n: {} for n in orders}
    tick = 0
    n_tokens = 0
    for text in sentences:
        for a, b in _token_spans(text):
            token = text[a:b]
            n_tokens += 1
            for n in orders:
                for gram in anchored_ngrams(token, n):
                    counts[n][gram] += 1
                    if gram not in first_seen[n]:
                        first_seen[n][gram] = tick
                        tick += 1
    if n_tokens == 0:
        raise EmptyCorpus("no tokens in corpus")
    maps: dict[int, dict[str, int]] = {}
    freqs: dict[int, dict[str, int]] = {}
    for n in orders:
        kept = [g for g, c in counts[n].items() if c >= min_freq.get(n, 1)]
        kept.sort(key=lambda g: first_seen[n][g])
        base = _first_free(n)
        maps[n] = {g: base + i for i, g in enumerate(kept)}
        freqs[n] = {g: counts[n][g] for g in kept}
    return NgramVocab(orders=tuple(orders), maps=maps, freqs=freqs, min_freq=min_freq)


# ---------------------------------------------------------------------------
# embedder: per-order tables plus the token-level bidirectional composer
# ---------------------------------------------------------------------------

@dataclass
class SubwordEmbedder:
    dim: int
    orders: tuple[int, ...]
    use_composer: bool
    tables: dict[int, Array]           # order -> (vocab size, dim)
    fwd: LstmParams | None = None
    bwd: LstmParams | None = None

    @classmethod
    def init(
        cls,
        vocab: NgramVocab,
        dim: int,
        orders: tuple[int, ...] | None = None,
        use_composer: bool = True,
        rng: np.random.Generator | None = None,
    ) -> "SubwordEmbedder":
        if rng is None:
            rng = np.random.default_rng(0)
        orders = tuple(orders if orders is not None else vocab.orders)
        for n in orders:
            if n not in vocab.maps:
                raise UninitializedEmbedder(f"vocab has no order-{n} table")
        tables = {n: uniform_init(rng, vocab.size(n), dim) for n in orders}
        fwd = bwd = None
        if use_composer:
            fwd = LstmParams.init(len(orders) * dim, dim, rng)
            bwd = LstmParams.init(len(orders) * dim, dim, rng)
        return cls(dim=dim, orders=orders, use_composer=use_composer, tables=tables, fwd=fwd, bwd=bwd)

    @property
    def ngram_width(self) -> int:
        return len(self.orders) * self.dim

    @property
    def feature_width(self) -> int:
        return self.ngram_width + (2 * self.dim if self.use_composer else 0)

    def check_vocab(self, vocab: NgramVocab) -> None:
        for n in self.orders:
            if n not in vocab.maps:
                raise UninitializedEmbedder(f"vocab has no order-{n} table")
            if self.tables[n].shape != (vocab.size(n), self.dim):
                raise UninitializedEmbedder(
                    f"order-{n} table {self.tables[n].shape} does not match vocab size {vocab.size(n)}"
                )

    def tensors(self, prefix: str = "") -> dict[str, Array]:
        out = {f"{prefix}emb.{n}": self.tables[n] for n in self.orders}
        if self.use_composer:
            out.update(self.fwd.tensors(f"{prefix}composer.fwd."))
            out.update(self.bwd.tensors(f"{prefix}composer.bwd."))
        return out


@dataclass
class ComposerCache:
    ids: dict[int, np.ndarray]  # order -> (token length,)
    X: Array                    # (token length, ngram_width)
    fwd: LstmCache
    bwd: LstmCache


def _token_input(token: str, vocab: NgramVocab, embedder: SubwordEmbedder) -> tuple[dict[int, np.ndarray], Array]:
    ids = {n: vocab.anchored_ids(token, n) for n in embedder.orders}
    X = np.hstack([embedder.tables[n][ids[n]] for n in embedder.orders])
    return ids, X


def _compose(token: str, vocab: NgramVocab, embedder: SubwordEmbedder) -> tuple[Array, ComposerCache]:
    ids, X = _token_input(token, vocab, embedder)
    H_f, cache_f = lstm_forward(embedder.fwd, X)
    H_b, cache_b = lstm_forward(embedder.bwd, X[::-1])
    vec = np.concatenate([H_f[-1], H_b[-1]])
    return vec, ComposerCache(ids=ids, X=X, fwd=cache_f, bwd=cache_b)


def compose_subword(token: str, vocab: NgramVocab, embedder: SubwordEmbedder) -> Array:
    """Token vector: forward state after the last position, backward state
    at the first position, concatenated."""
    if not token:
        raise ValueError("empty token")
    if not embedder.use_composer or embedder.fwd is None:
        raise UninitializedEmbedder("embedder was built without a composer")
    embedder.check_vocab(vocab)
    vec, _ = _compose(token, vocab, embedder)
    return vec


@dataclass
class FeatureCache:
    text: str
    ids: dict[int, np.ndarray]              # order -> (L,) ids per character row
    spans: list[tuple[int, int]]
    composers: list[ComposerCache] | None   # one per span, None without composer
    width: int


def char_features(text: str, vocab: NgramVocab, embedder: SubwordEmbedder) -> Array:
    F, _ = char_features_cached(text, vocab, embedder)
    return F


def char_features_cached(text: str, vocab: NgramVocab, embedder: SubwordEmbedder) -> tuple[Array, FeatureCache]:
    """Feature matrix (L x feature width) plus the cache for backprop."""
    embedder.check_vocab(vocab)
    L = len(text)
    dim = embedder.dim
    spans = _token_spans(text)
    ids = {n: np.full(L, PAD_ID if n > 1 else SPACE_ID, dtype=np.int64) for n in embedder.orders}
    for a, b in spans:
        token = text[a:b]
        for n in embedder.orders:
            ids[n][a:b] = vocab.anchored_ids(token, n)
    F = np.zeros((L, embedder.feature_width))
    col = 0
    for n in embedder.orders:
        F[:, col : col + dim] = embedder.tables[n][ids[n]]
        col += dim
    composers = None
    if embedder.use_composer:
        composers = []
        for a, b in spans:
            vec, cc = _compose(text[a:b], vocab, embedder)
            F[a:b, col:] = vec
            composers.append(cc)
    return F, FeatureCache(text=text, ids=ids, spans=spans, composers=composers, width=embedder.feature_width)


def char_features_backward(cache: FeatureCache, dF: Array, embedder: SubwordEmbedder) -> dict[str, Array]:
    """Scatter feature gradients into embedding tables and composer weights."""
    if dF.shape != (len(cache.text), cache.width):
        raise LengthMismatch(f"feature grad {dF.shape} vs cache ({len(cache.text)}, {cache.width})")
    dim = embedder.dim
    grads: dict[str, Array] = {f"emb.{n}": np.zeros_like(embedder.tables[n]) for n in embedder.orders}
    col = 0
    for n in embedder.orders:
        np.add.at(grads[f"emb.{n}"], cache.ids[n], dF[:, col : col + dim])
        col += dim
    if embedder.use_composer:
        comp_grads_f = {k: np.zeros_like(v) for k, v in embedder.fwd.tensors().items()}
        comp_grads_b = {k: np.zeros_like(v) for k, v in embedder.bwd.tensors().items()}
        for (a, b), cc in zip(cache.spans, cache.composers):
            d_vec = dF[a:b, col:].sum(axis=0)
            zero = np.zeros_like(cc.fwd.H)
            dX_f, g_f = lstm_backward(embedder.fwd, cc.fwd, zero, dh_last=d_vec[:dim])
            dX_b_rev, g_b = lstm_backward(embedder.bwd, cc.bwd, zero, dh_last=d_vec[dim:])
            dX = dX_f + dX_b_rev[::-1]
            for k in comp_grads_f:
                comp_grads_f[k] += g_f[k]
                comp_grads_b[k] += g_b[k]
            c2 = 0
            for n in embedder.orders:
                np.add.at(grads[f"emb.{n}"], cc.ids[n], dX[:, c2 : c2 + dim])
                c2 += dim
        for k, v in comp_grads_f.items():
            grads[f"composer.fwd.{k}"] = v
        for k, v in comp_grads_b.items():
            grads[f"composer.bwd.{k}"] = v
    return grads
