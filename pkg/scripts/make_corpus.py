#!/usr/bin/env python3
"""Generate a synthetic raw corpus for pipeline experiments.

Writes plain UTF-8 text, one sentence per line. With --fused, word
boundaries are omitted with the given probability of keeping a space,
which mimics the space-omission setting; the matching gold labeled file
is written next to it since whitespace no longer marks the boundaries.
"""

import argparse
from pathlib import Path

from charseg.corpus import write_labeled
from charseg.synth import make_fused_pairs, make_lexicon, make_sentences


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out", help="output text file")
    ap.add_argument("--sentences", type=int, default=200)
    ap.add_argument("--words", type=int, default=60)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--fused", action="store_true")
    ap.add_argument("--space-prob", type=float, default=0.15,
                    help="probability of a real space between fused words")
    args = ap.parse_args()

    lexicon = make_lexicon(n_words=args.words, seed=args.seed)
    out = Path(args.out)
    if args.fused:
        pairs = make_fused_pairs(lexicon, args.sentences, space_prob=args.space_prob,
                                 seed=args.seed + 1)
        out.write_text("\n".join(s.text for s, _ in pairs) + "\n", encoding="utf-8")
        gold = out.with_suffix(".gold.tsv")
        write_labeled(gold, pairs)
        print(f"wrote {args.sentences} fused sentences to {out}, gold tags to {gold}")
    else:
        lines = make_sentences(lexicon, args.sentences, seed=args.seed + 1)
        out.write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(f"wrote {args.sentences} sentences to {out}")


if __name__ == "__main__":
    main()
