#!/usr/bin/env python3
"""Seed-averaged variant comparison on the synthetic dev set.

Trains each requested variant over several seeds and prints mean best
dev P/R/F, smallest model first. With --fused, the corpus omits spaces
between words so the comparison reflects genuine boundary recovery
rather than whitespace copying.
"""

import argparse

import numpy as np

from charseg.corpus import DatasetSplit
from charseg.model import Model, ModelConfig, train
from charseg.subword import build_vocab
from charseg.synth import make_fused_pairs, make_lexicon, make_split

DEFAULT_VARIANTS = ("lstm_softmax", "bilstm_softmax", "bilstm_crf", "bilstm_crf_char",
                    "bilstm_crf_bigram", "bilstm_crf_trigram", "sgnws")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--variants", nargs="+", default=list(DEFAULT_VARIANTS))
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--train", type=int, default=100)
    ap.add_argument("--dev", type=int, default=20)
    ap.add_argument("--d-emb", type=int, default=16)
    ap.add_argument("--hidden", type=int, default=24)
    ap.add_argument("--epochs", type=int, default=8)
    ap.add_argument("--fused", action="store_true")
    args = ap.parse_args()

    if args.fused:
        lexicon = make_lexicon(n_words=60, seed=0)
        pairs = make_fused_pairs(lexicon, args.train + args.dev, space_prob=0.15, seed=1)
        split = DatasetSplit(train=pairs[: args.train], dev=pairs[args.train :], test=[])
    else:
        split = make_split(n_train=args.train, n_dev=args.dev)
    vocab = build_vocab([s.text for s, _ in split.train])

    print(f"{'variant':<20} {'dev P':>8} {'dev R':>8} {'dev F':>8}")
    for variant in args.variants:
        ps, rs, fs = [], [], []
        for seed in args.seeds:
            cfg = ModelConfig(variant=variant, d_emb=args.d_emb, hidden=args.hidden,
                              epochs=args.epochs, seed=seed)
            model = Model(cfg, vocab)
            log = train(model, split)
            best = max(log, key=lambda r: r.dev_f)
            ps.append(best.dev_p)
            rs.append(best.dev_r)
            fs.append(best.dev_f)
        print(f"{variant:<20} {np.mean(ps):8.4f} {np.mean(rs):8.4f} {np.mean(fs):8.4f}")


if __name__ == "__main__":
    main()
