#!/usr/bin/env python3
"""Reference BLEU-1..4 via sacrebleu, for cross-checking glossforge eval.

    python3 tools/bleu_oracle.py HYP REF

Files hold one whitespace-tokenized gloss per line. Prints one JSON object
with cumulative BLEU-n (no smoothing, no retokenization).
"""

import json
import sys

from sacrebleu.metrics import BLEU


def read(path):
    with open(path, encoding="utf-8") as f:
        return [" ".join(line.split()) for line in f.read().splitlines()]


def main():
    hyp, ref = read(sys.argv[1]), read(sys.argv[2])
    out = {}
    for n in range(1, 5):
        bleu = BLEU(max_ngram_order=n, smooth_method="none", tokenize="none")
        out[f"bleu_{n}"] = bleu.corpus_score(hyp, [ref]).score
    print(json.dumps(out))


if __name__ == "__main__":
    main()
