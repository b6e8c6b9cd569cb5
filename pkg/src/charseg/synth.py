"""Synthetic language generation for tests and desk-scale experiments."""

from __future__ import annotations

import numpy as np

from .corpus import DatasetSplit, Sentence, tags_from_segmentation

DEFAULT_ALPHABET = "abcdefghijklmnopqrst"  # 20 letters


def make_lexicon(
    n_words: int = 60,
    alphabet: str = DEFAULT_ALPHABET,
    min_len: int = 2,
    max_len: int = 7,
    seed: int = 0,
) -> list[str]:
    rng = np.random.default_rng(seed)
    letters = list(alphabet)
    words: list[str] = []
    seen: set[str] = set()
    while len(words) < n_words:
        k = int(rng.integers(min_len, max_len + 1))
        w = "".join(rng.choice(letters, size=k))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def make_sentences(
    lexicon: list[str],
    n_sentences: int,
    min_tokens: int = 5,
    max_tokens: int = 9,
    seed: int = 0,
    separators: tuple[str, ...] = (" ",),
) -> list[str]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_sentences):
        k = int(rng.integers(min_tokens, max_tokens + 1))
        words = [lexicon[int(i)] for i in rng.integers(0, len(lexicon), size=k)]
        seps = [separators[int(i)] for i in rng.integers(0, len(separators), size=k - 1)]
        parts = [words[0]]
        for sep, w in zip(seps, words[1:]):
            parts.append(sep)
            parts.append(w)
        out.append("".join(parts))
    return out


def labeled_pairs(lines: list[str]) -> list[tuple[Sentence, str]]:
    pairs = []
    for line in lines:
        s = Sentence.from_text(line)
        pairs.append((s, tags_from_segmentation(s)))
    return pairs


def make_fused_pairs(
    lexicon: list[str],
    n_sentences: int,
    min_tokens: int = 5,
    max_tokens: int = 9,
    space_prob: float = 0.0,
    seed: int = 0,
) -> list[tuple[Sentence, str]]:
    """Sentences with omitted spaces: words run together, boundaries known
    only from construction. Exercises segmentation that cannot lean on
    whitespace; space_prob > 0 keeps an occasional real space."""
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(n_sentences):
        k = int(rng.integers(min_tokens, max_tokens + 1))
        words = [lexicon[int(i)] for i in rng.integers(0, len(lexicon), size=k)]
        text = []
        spans = []
        pos = 0
        for j, w in enumerate(words):
            if j > 0 and rng.random() < space_prob:
                text.append(" ")
                pos += 1
            text.append(w)
            spans.append((pos, pos + len(w)))
            pos += len(w)
        s = Sentence(text="".join(text), token_spans=tuple(spans))
        pairs.append((s, tags_from_segmentation(s)))
    return pairs


def make_split(
    n_train: int = 100,
    n_dev: int = 20,
    n_test: int = 0,
    lexicon_seed: int = 0,
    sentence_seed: int = 1,
    n_words: int = 60,
) -> DatasetSplit:
    """Disjointly seeded train/dev/test over one shared lexicon."""
    lexicon = make_lexicon(n_words=n_words, seed=lexicon_seed)
    lines = make_sentences(lexicon, n_train + n_dev + n_test, seed=sentence_seed)
    pairs = labeled_pairs(lines)
    return DatasetSplit(
        train=pairs[:n_train],
        dev=pairs[n_train : n_train + n_dev],
        test=pairs[n_train + n_dev :],
    )
