#!/usr/bin/env python3
"""Regenerates the synthetic fixtures under data/fixtures/.

The fixtures are small, verb-final Bangla sentences built from a fixed
vocabulary so that every tense rule and masking path has something to act
on. They are not real annotated data. Output is deterministic.

    python3 tools/make_fixtures.py [--out data/fixtures]
"""

import argparse
import json
import os
import random
import unicodedata

import networkx as nx


def nfc(s):
    return unicodedata.normalize("NFC", s)


TENSE_SUFFIX = {
    "present": "ি",
    "past": "লাম",
    "future": "ব",
    "present_continuous": "ছি",
    "past_continuous": "ছিলাম",
}

TENSE_GLOSS_AUX = {
    "present": [],
    "past": ["শেষ"],
    "future": ["হবে"],
    "present_continuous": ["চলছে"],
    "past_continuous": ["চলছিল"],
}

TENSE_WEIGHTS = [
    ("present", 30),
    ("past", 30),
    ("future", 25),
    ("present_continuous", 10),
    ("past_continuous", 5),
]

VERB_OBJECTS = {
    "পড়": ["বই", "চিঠি", "খবর", "গল্প", "কবিতা", "পত্রিকা"],
    "লিখ": ["চিঠি", "গল্প", "কবিতা", "নাম", "উত্তর", "প্রবন্ধ"],
    "দেখ": ["ছবি", "সিনেমা", "পাখি", "নদী", "খেলা", "নাটক"],
    "কর": ["কাজ", "রান্না", "পড়াশোনা", "বাজার", "সাহায্য", "ব্যায়াম"],
    "শুন": ["গান", "খবর", "গল্প", "কথা", "রেডিও"],
    "খেল": ["ফুটবল", "ক্রিকেট", "দাবা", "লুডু"],
    "ধর": ["মাছ", "বল", "হাত"],
    "রাখ": ["টাকা", "বই", "কলম"],
    "কিন": ["বই", "কলম", "জামা", "ফল", "চাল", "মাছ"],
    "বল": ["কথা", "সত্য", "গল্প"],
    "শিখ": ["গান", "ইংরেজি", "সাঁতার", "অঙ্ক"],
    "খুঁজ": ["চাবি", "কলম", "বই"],
}

SUBJECTS = ["আমি", "আমরা"]
PLACES = [
    (None, None),
    ("বাড়িতে", "বাড়ি"),
    ("স্কুলে", "স্কুল"),
    ("অফিসে", "অফিস"),
    ("মাঠে", "মাঠ"),
    ("বাজারে", "বাজার"),
]
TIMES = [(None, None), ("আজ", "আজ")]

# Nominal sentences with no finite verb; tense detection yields unknown.
NOMINAL = [
    ("আমার নাম রহিম।", ["আমার", "নাম", "রহিম"]),
    ("আমার বাড়ি ঢাকায়।", ["আমার", "বাড়ি", "ঢাকা"]),
    ("তোমার বই কোথায়?", ["তোমার", "বই", "কোথায়"]),
    ("আজ খুব গরম।", ["আজ", "খুব", "গরম"]),
    ("আমার ভাই ডাক্তার।", ["আমার", "ভাই", "ডাক্তার"]),
    ("আমাদের স্কুল বড়।", ["আমাদের", "স্কুল", "বড়"]),
]


def all_combos():
    combos = []
    for root in sorted(VERB_OBJECTS):
        for obj in VERB_OBJECTS[root]:
            for subj in SUBJECTS:
                for place in PLACES:
                    for time in TIMES:
                        for tense, _ in TENSE_WEIGHTS:
                            combos.append((time, subj, place, obj, root, tense))
    return combos


def render(combo):
    (time, time_g), subj, (place, place_g), obj, root, tense = combo
    words, gloss = [], []
    if time:
        words.append(time)
        gloss.append(time_g)
    words.append(subj)
    gloss.append(subj)
    if place:
        words.append(place)
        gloss.append(place_g)
    words.append(obj)
    gloss.append(obj)
    words.append(root + TENSE_SUFFIX[tense] + "।")
    gloss.append(root)
    gloss.extend(TENSE_GLOSS_AUX[tense])
    return nfc(" ".join(words)), [nfc(g) for g in gloss]


def pick(rng, combos, n, used):
    weights = dict(TENSE_WEIGHTS)
    pool = [c for c in combos if render(c)[0] not in used]
    w = [weights[c[5]] for c in pool]
    out = []
    seen = set()
    while len(out) < n:
        c = rng.choices(pool, weights=w, k=1)[0]
        s, _ = render(c)
        if s in seen or s in used:
            continue
        seen.add(s)
        out.append(c)
    return out


def write_corpus(path, rng, n, prefix, nominal_count, used):
    combos = pick(rng, all_combos(), n - nominal_count, used)
    records = []
    for c in combos:
        s, g = render(c)
        records.append({"sentence": s, "gloss": g, "tense": c[5]})
    for s, g in NOMINAL[:nominal_count]:
        records.append({"sentence": nfc(s), "gloss": [nfc(t) for t in g], "tense": None})
    rng.shuffle(records)
    width = len(str(n))
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for i, r in enumerate(records, 1):
            obj = {
                "id": f"{prefix}-{i:0{width}d}",
                "sentence": r["sentence"],
                "gloss": r["gloss"],
                "provenance": "manual",
                "tense": r["tense"],
                "source_pair_id": None,
                "meta": {},
            }
            f.write(json.dumps(obj, ensure_ascii=False, separators=(",", ":")) + "\n")
            used.add(r["sentence"])
    return records


def write_sources(path, rng, n, used):
    combos = pick(rng, all_combos(), n, used)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for c in combos:
            s, _ = render(c)
            used.add(s)
            f.write(s + "\n")


def contingency(rows, cols, diag):
    """Integer matrix with the given marginals and diagonal."""
    k = len(rows)
    g = nx.DiGraph()
    for i in range(k):
        g.add_edge("s", f"r{i}", capacity=rows[i] - diag[i])
        g.add_edge(f"c{i}", "t", capacity=cols[i] - diag[i])
        for j in range(k):
            if i != j:
                g.add_edge(f"r{i}", f"c{j}", capacity=10**6, weight=abs(i - j))
    flow = nx.max_flow_min_cost(g, "s", "t")
    m = [[0] * k for _ in range(k)]
    for i in range(k):
        m[i][i] = diag[i]
        for j in range(k):
            if i != j:
                m[i][j] = flow[f"r{i}"].get(f"c{j}", 0)
    assert [sum(r) for r in m] == rows
    assert [sum(m[i][j] for i in range(k)) for j in range(k)] == cols
    return m


def write_table1(outdir, rng):
    """Dual-rater journal whose summary statistics match the agreement table
    used in the acceptance suite: 150 samples, 112/114 understandable,
    binary kappa 0.7489, unweighted quality kappa 0.3496."""
    n = 150
    quality_a = [26, 32, 39, 28, 25]
    quality_b = [16, 25, 34, 31, 44]
    diag = [9, 14, 19, 16, 14]
    m = contingency(quality_a, quality_b, diag)
    pairs = []
    for i in range(5):
        for j in range(5):
            pairs += [(i + 1, j + 1)] * m[i][j]
    assert len(pairs) == n
    # Binary contingency: yes/yes 106, yes/no 6, no/yes 8, no/no 30.
    # Higher combined quality gets the "yes" judgments first.
    order = sorted(range(n), key=lambda k: -(pairs[k][0] + pairs[k][1]))
    labels = [None] * n
    cells = [(True, True)] * 106 + [(True, False)] * 6 + [(False, True)] * 8 + [(False, False)] * 30
    # Disagreeing cells go to the middle of the ranking.
    mid = [(True, False)] * 6 + [(False, True)] * 8
    ranked = [(True, True)] * 100 + mid + [(True, True)] * 6 + [(False, False)] * 30
    assert sorted(ranked) == sorted(cells)
    for pos, k in enumerate(order):
        labels[k] = ranked[pos]
    perm = list(range(n))
    rng.shuffle(perm)

    corpus_path = os.path.join(outdir, "table1_corpus.jsonl")
    combos = pick(rng, all_combos(), n, set())
    ids = [f"rag-t1-{i:03d}" for i in range(1, n + 1)]
    with open(corpus_path, "w", encoding="utf-8", newline="\n") as f:
        for pid, c in zip(ids, combos):
            s, g = render(c)
            obj = {
                "id": pid,
                "sentence": s,
                "gloss": g,
                "provenance": "rag",
                "tense": c[5],
                "source_pair_id": None,
                "meta": {"mode": "few_shot"},
            }
            f.write(json.dumps(obj, ensure_ascii=False, separators=(",", ":")) + "\n")
    with open(os.path.join(outdir, "table1_samples.txt"), "w", encoding="utf-8") as f:
        for pid in ids:
            f.write(pid + "\n")
    with open(os.path.join(outdir, "table1_journal.jsonl"), "w", encoding="utf-8", newline="\n") as f:
        for step, k in enumerate(perm):
            for rater, idx in (("signer-1", 0), ("signer-2", 1)):
                rec = {
                    "sample_id": ids[k],
                    "rater_id": rater,
                    "understandable": labels[k][idx],
                    "quality": pairs[k][idx],
                    "created_at": f"2025-03-{1 + step // 30:02d}T{9 + (step % 30) // 4:02d}:{(step * 7) % 60:02d}:00Z",
                }
                f.write(json.dumps(rec, ensure_ascii=False, separators=(",", ":")) + "\n")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data", "fixtures"))
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    used = set()
    write_corpus(os.path.join(args.out, "corpus_1000.jsonl"), random.Random(1000), 1000, "bsgp", 6, used)
    write_sources(os.path.join(args.out, "sources_2000.txt"), random.Random(2000), 2000, used)

    used_small = set()
    write_corpus(os.path.join(args.out, "corpus_100.jsonl"), random.Random(100), 100, "mini", 2, used_small)
    write_sources(os.path.join(args.out, "sources_200.txt"), random.Random(200), 200, used_small)

    write_table1(args.out, random.Random(150))


if __name__ == "__main__":
    main()
