"""Linear-chain CRF over the five boundary tags.

Path score = start[y_1] + sum_t emissions[t, y_t] + sum_{t>=2} trans[y_{t-1}, y_t].
The log-partition runs the forward recursion in the log domain; the loss
gradient is expected feature counts minus gold counts from forward-backward
marginals; decoding is max-product with backpointers. A hard constraint
mask (log-domain 0/-inf addends) can restrict start/end tags, transitions,
and per-position tags; training normally runs unconstrained while decoding
applies the boundary-grammar mask.

Tie-breaking for equal-score paths is fixed: the decoder picks the lowest
tag index at the final position and at every backpointer, which selects
the path that is lexicographically smallest when read from the end. The
brute-force oracle implements the identical rule.

All functions are pure given their inputs and safe to call concurrently
across sentences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import N_TAGS, TAG_TO_ID
from .errors import GoldPathForbidden, InstanceTooLarge, LengthMismatch, NoAllowedPath
from .nncore import logsumexp

Array = np.ndarray

NEG_INF = -np.inf


@dataclass
class CrfParams:
    """Tag transition matrix (row = previous tag, column = next tag) and a
    start-score vector for the first position."""

    transitions: Array  # (K, K)
    start: Array        # (K,)

    @classmethod
    def init(cls, n_tags: int, rng: np.random.Generator | None = None, scale: float = 0.1) -> "CrfParams":
        if rng is None:
            return cls(transitions=np.zeros((n_tags, n_tags)), start=np.zeros(n_tags))
        return cls(
            transitions=rng.uniform(-scale, scale, size=(n_tags, n_tags)),
            start=rng.uniform(-scale, scale, size=n_tags),
        )

    @property
    def n_tags(self) -> int:
        return self.start.shape[0]

    def tensors(self, prefix: str = "") -> dict[str, Array]:
        return {f"{prefix}transitions": self.transitions, f"{prefix}start": self.start}


@dataclass
class ConstraintMask:
    """Log-domain addends: 0 keeps an entry, -inf forbids it."""

    start: Array       # (K,)
    end: Array         # (K,)
    transitions: Array # (K, K)
    positions: Array   # (L, K)

    @classmethod
    def from_bool(cls, start: Array, end: Array, transitions: Array, positions: Array) -> "ConstraintMask":
        def addend(b: Array) -> Array:
            return np.where(b, 0.0, NEG_INF)

        return cls(
            start=addend(start), end=addend(end),
            transitions=addend(transitions), positions=addend(positions),
        )


# allowed tag bigrams of the boundary grammar; X->X is included so inputs
# with adjacent whitespace characters always keep at least one legal path
_ALLOWED_PAIRS = [
    ("B", "I"), ("B", "E"),
    ("I", "I"), ("I", "E"),
    ("E", "B"), ("E", "S"), ("E", "X"),
    ("S", "B"), ("S", "S"), ("S", "X"),
    ("X", "B"), ("X", "S"), ("X", "X"),
]
_ALLOWED_START = ["B", "S", "X"]
_ALLOWED_END = ["E", "S", "X"]


def grammar_mask(whitespace: list[bool] | np.ndarray) -> ConstraintMask:
    """Boundary-grammar constraints for a sentence.

    Whitespace positions are forced to X, other positions must not be X,
    and only transitions consistent with ``(X | S | B I* E)*`` survive.
    """
    K = N_TAGS
    L = len(whitespace)
    start = np.zeros(K, dtype=bool)
    for t in _ALLOWED_START:
        start[TAG_TO_ID[t]] = True
    end = np.zeros(K, dtype=bool)
    for t in _ALLOWED_END:
        end[TAG_TO_ID[t]] = True
    trans = np.zeros((K, K), dtype=bool)
    for a, b in _ALLOWED_PAIRS:
        trans[TAG_TO_ID[a], TAG_TO_ID[b]] = True
    positions = np.ones((L, K), dtype=bool)
    x_id = TAG_TO_ID["X"]
    for i, ws in enumerate(whitespace):
        if ws:
            positions[i, :] = False
            positions[i, x_id] = True
        else:
            positions[i, x_id] = False
    return ConstraintMask.from_bool(start, end, trans, positions)


def _masked(emissions: Array, params: CrfParams, mask: ConstraintMask | None):
    """Apply the mask addends; returns (emissions', start', trans', end')."""
    if mask is None:
        L, K = emissions.shape
        return emissions, params.start, params.transitions, np.zeros(K)
    return (
        emissions + mask.positions,
        params.start + mask.start,
        params.transitions + mask.transitions,
        mask.end,
    )


def sequence_score(emissions: Array, tags: np.ndarray, params: CrfParams) -> float:
    """Unnormalized log score of one tag path."""
    L, K = emissions.shape
    if len(tags) != L:
        raise LengthMismatch(f"{L} emission rows vs {len(tags)} tags")
    score = params.start[tags[0]] + emissions[0, tags[0]]
    for t in range(1, L):
        score = score + params.transitions[tags[t - 1], tags[t]]
        score = score + emissions[t, tags[t]]
    return float(score)


def log_partition(emissions: Array, params: CrfParams, mask: ConstraintMask | None = None) -> float:
    """log sum over all (allowed) tag paths of exp(path score)."""
    emis, start, trans, end = _masked(emissions, params, mask)
    L, K = emis.shape
    alpha = start + emis[0]
    for t in range(1, L):
        alpha = logsumexp(alpha[:, None] + trans, axis=0) + emis[t]
    total = float(logsumexp(alpha + end, axis=0))
    if not np.isfinite(total):
        raise NoAllowedPath("constraint mask leaves no complete path")
    return total


@dataclass
class CrfGrads:
    emissions: Array
    transitions: Array
    start: Array


def nll_loss(
    emissions: Array,
    gold: np.ndarray,
    params: CrfParams,
    mask: ConstraintMask | None = None,
) -> tuple[float, CrfGrads]:
    """Negative log-likelihood of the gold path and its analytic gradients.

    Gradients are expected feature counts minus gold counts, from
    forward-backward marginals. The gradient at any masked-out entry is
    exactly zero because its marginal probability is zero.
    """
    emis, start, trans, end = _masked(emissions, params, mask)
    L, K = emis.shape
    if len(gold) != L:
        raise LengthMismatch(f"{L} emission rows vs {len(gold)} tags")

    gold_score = start[gold[0]] + emis[0, gold[0]]
    for t in range(1, L):
        gold_score = gold_score + trans[gold[t - 1], gold[t]] + emis[t, gold[t]]
    gold_score = gold_score + end[gold[L - 1]]
    if not np.isfinite(gold_score):
        raise GoldPathForbidden("gold path excluded by the constraint mask")

    alpha = np.empty((L, K))
    alpha[0] = start + emis[0]
    for t in range(1, L):
        alpha[t] = logsumexp(alpha[t - 1][:, None] + trans, axis=0) + emis[t]
    log_z = float(logsumexp(alpha[L - 1] + end, axis=0))
    if not np.isfinite(log_z):
        raise NoAllowedPath("constraint mask leaves no complete path")

    beta = np.empty((L, K))
    beta[L - 1] = end
    for t in range(L - 2, -1, -1):
        beta[t] = logsumexp(trans + (emis[t + 1] + beta[t + 1])[None, :], axis=1)

    with np.errstate(invalid="ignore"):
        gamma = np.exp(alpha + beta - log_z)  # exp(-inf) = 0 at forbidden entries
    d_emissions = gamma.copy()
    d_emissions[np.arange(L), gold] -= 1.0

    d_trans = np.zeros((K, K))
    for t in range(1, L):
        pair = alpha[t - 1][:, None] + trans + (emis[t] + beta[t])[None, :] - log_z
        d_trans += np.exp(pair)
        d_trans[gold[t - 1], gold[t]] -= 1.0

    d_start = gamma[0].copy()
    d_start[gold[0]] -= 1.0

    loss = log_z - float(gold_score)
    return loss, CrfGrads(emissions=d_emissions, transitions=d_trans, start=d_start)


def viterbi_decode(
    emissions: Array, params: CrfParams, mask: ConstraintMask | None = None
) -> tuple[np.ndarray, float]:
    """Highest-scoring tag path via max-product dynamic programming."""
    emis, start, trans, end = _masked(emissions, params, mask)
    L, K = emis.shape
    delta = start + emis[0]
    backptr = np.zeros((L, K), dtype=np.int64)
    for t in range(1, L):
        cand = delta[:, None] + trans              # (prev, next)
        backptr[t] = np.argmax(cand, axis=0)       # first max = lowest tag index
        delta = cand[backptr[t], np.arange(K)] + emis[t]
    final = delta + end
    best_last = int(np.argmax(final))
    best_score = float(final[best_last])
    if not np.isfinite(best_score):
        raise NoAllowedPath("constraint mask leaves no complete path")
    path = np.empty(L, dtype=np.int64)
    path[L - 1] = best_last
    for t in range(L - 1, 0, -1):
        path[t - 1] = backptr[t, path[t]]
    return path, best_score


def brute_force_paths(
    emissions: Array,
    params: CrfParams,
    mask: ConstraintMask | None = None,
    max_paths: int = 10_000_000,
) -> tuple[np.ndarray, float, float]:
    """Exhaustive enumeration oracle: (best path, best score, log partition).

    Scores accumulate in the same term order as the dynamic programs so
    structurally tied paths compare bit-identically. Among equal-score
    paths the winner is the one lexicographically smallest from the end,
    matching viterbi_decode's backpointer rule.
    """
    emis, start, trans, end = _masked(emissions, params, mask)
    L, K = emis.shape
    n_paths = K ** L
    if n_paths > max_paths:
        raise InstanceTooLarge(f"{K}^{L} = {n_paths} paths exceeds {max_paths}")

    best_score = NEG_INF
    best_path: np.ndarray | None = None
    log_z_blocks: list[float] = []
    block = 1 << 18
    for lo in range(0, n_paths, block):
        idx = np.arange(lo, min(lo + block, n_paths), dtype=np.int64)
        digits = np.empty((idx.size, L), dtype=np.int64)
        rem = idx.copy()
        for t in range(L - 1, -1, -1):
            digits[:, t] = rem % K
            rem //= K
        scores = start[digits[:, 0]] + emis[0, digits[:, 0]]
        for t in range(1, L):
            scores = scores + trans[digits[:, t - 1], digits[:, t]]
            scores = scores + emis[t, digits[:, t]]
        scores = scores + end[digits[:, L - 1]]
        finite = scores[np.isfinite(scores)]
        if finite.size:
            m = float(np.max(finite))
            log_z_blocks.append(m + np.log(np.sum(np.exp(finite - m))))
        block_max = float(np.max(scores)) if scores.size else NEG_INF
        if np.isfinite(block_max) and block_max >= best_score:
            tied = digits[scores == block_max]
            cand = min(tuple(row[::-1]) for row in tied)
            cand_path = np.array(cand[::-1], dtype=np.int64)
            if block_max > best_score or (
                best_path is not None and tuple(cand_path[::-1]) < tuple(best_path[::-1])
            ):
                best_score = block_max
                best_path = cand_path
    if best_path is None:
        raise NoAllowedPath("constraint mask leaves no complete path")
    arr = np.array(log_z_blocks)
    m = float(np.max(arr))
    log_z = m + float(np.log(np.sum(np.exp(arr - m))))
    return best_path, best_score, log_z
