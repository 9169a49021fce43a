#!/usr/bin/env python3
"""Writes a hypothesis/reference pair for BLEU tests under tests/data/eval/.

References are the glosses of data/fixtures/corpus_100.jsonl. Hypotheses are
deterministic corruptions: dropped, swapped and replaced tokens.

    python3 tools/make_eval_fixture.py
"""

import json
import os
import random

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
FILLER = ["ঘর", "বই", "জল", "গাছ", "চলছে", "শেষ"]


def corrupt(rng, toks):
    toks = list(toks)
    roll = rng.random()
    if roll < 0.25 and len(toks) > 1:
        del toks[rng.randrange(len(toks))]
    elif roll < 0.45 and len(toks) > 1:
        i = rng.randrange(len(toks) - 1)
        toks[i], toks[i + 1] = toks[i + 1], toks[i]
    elif roll < 0.7:
        toks[rng.randrange(len(toks))] = rng.choice(FILLER)
    elif roll < 0.8:
        toks.append(rng.choice(FILLER))
    return toks


def main():
    rng = random.Random(7)
    with open(os.path.join(ROOT, "data/fixtures/corpus_100.jsonl"), encoding="utf-8") as f:
        pairs = [json.loads(line) for line in f if line.strip()][:60]
    out = os.path.join(ROOT, "tests/data/eval")
    os.makedirs(out, exist_ok=True)
    hyps = [corrupt(rng, p["gloss"]) for p in pairs]
    with open(os.path.join(out, "ref.txt"), "w", encoding="utf-8") as f:
        f.writelines(" ".join(p["gloss"]) + "\n" for p in pairs)
    with open(os.path.join(out, "hyp.txt"), "w", encoding="utf-8") as f:
        f.writelines(" ".join(h) + "\n" for h in hyps)
    # JSONL copies, hypotheses in reverse order to exercise id alignment
    with open(os.path.join(out, "ref.jsonl"), "w", encoding="utf-8") as f:
        f.writelines(json.dumps({"id": p["id"], "gloss": p["gloss"]}, ensure_ascii=False) + "\n" for p in pairs)
    with open(os.path.join(out, "hyp.jsonl"), "w", encoding="utf-8") as f:
        for p, h in reversed(list(zip(pairs, hyps))):
            f.write(json.dumps({"id": p["id"], "gloss": " ".join(h)}, ensure_ascii=False) + "\n")


if __name__ == "__main__":
    main()
