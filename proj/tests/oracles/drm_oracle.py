#!/usr/bin/env python3
"""Independent recomputation of the DRM relevance score and the dense ranking.

score = 0.5 * jaccard(content tokens) + 0.5 * (1 + cos(hashed bag of words)) / 2

Words are maximal runs of [A-Za-z0-9_] or non-ASCII bytes, ASCII-lowercased.
Hashing: FNV-1a 64 of the word bytes, bucket = low 8 bits, sign = top bit.

  drm_oracle.py --write FILE   regenerate the fixture consumed by the C++ tests
  drm_oracle.py --check FILE   recompute and compare against FILE
"""

import json
import math
import sys

STOPWORDS = set("""
a about an and are as at be been but by can did do does for from had has have he her his how i in into
is it its of on or our she so that the their them then there these they this those to was we were what
when where which while who whom why will with would you your not
""".split())

QUERY = "What symptom does SFTSV infection present with?"
SENTENCES = [
    ("s00", "SFTSV infection presents with fever and thrombocytopenia in most hospital cohorts."),
    ("s01", "Without supportive care, SFTSV infection causes multi-organ failure."),
    ("s02", "SFTSV infection is transmitted by Haemaphysalis longicornis ticks during the spring months."),
    ("s03", "Dengue fever presents with headache and retro-orbital pain during the febrile phase."),
    ("s04", "Case fatality varied between provinces."),
    ("s05", "What symptom does SFTSV infection present with?"),
    ("s06", "Fièvre et thrombopénie sont fréquentes."),
    ("s07", "the of and"),
    ("s08", "Symptom onset: 7-14 days after a tick_bite."),
    ("s09", "!!!"),
]
PAIRS = [
    ("fever", "fever"),
    ("the of and", "the of and"),
    ("!!!", "???"),
    ("!!!", "!!!"),
    ("alpha beta", "gamma delta"),
    ("Malaria causes severe anemia", "malaria CAUSES anemia"),
]


def words(text):
    out, cur = [], bytearray()
    for b in text.encode("utf-8"):
        if (48 <= b <= 57) or (65 <= b <= 90) or (97 <= b <= 122) or b == 95 or b >= 0x80:
            cur.append(b + 32 if 65 <= b <= 90 else b)
        elif cur:
            out.append(bytes(cur))
            cur = bytearray()
    if cur:
        out.append(bytes(cur))
    return out


def content(text):
    return {w for w in words(text) if w.decode("utf-8", "surrogateescape") not in STOPWORDS}


def fnv1a64(data):
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def embed(text):
    v = [0.0] * 256
    for w in words(text):
        h = fnv1a64(w)
        v[h & 0xFF] += -1.0 if h >> 63 else 1.0
    return v


def cosine(a, b):
    dot = na = nb = 0.0
    for x, y in zip(a, b):
        dot += x * y
        na += x * x
        nb += y * y
    if na == 0.0 and nb == 0.0:
        return 1.0
    if na == 0.0 or nb == 0.0:
        return 0.0
    return max(-1.0, min(1.0, dot / math.sqrt(na * nb)))


def fold_ws(text):
    return " ".join(text.split()).encode("utf-8").lower()


def drm(q, e):
    a, b = content(q), content(e)
    if not a and not b:
        jac = 1.0 if fold_ws(q) == fold_ws(e) else 0.0
    else:
        inter = len(a & b)
        jac = inter / (len(a) + len(b) - inter)
    ea, eb = embed(q), embed(e)
    cos = cosine(ea, eb)
    if not any(ea) and not any(eb) and jac == 0.0:
        cos = 0.0
    return max(0.0, min(1.0, 0.5 * jac + 0.5 * (cos + 1.0) / 2.0))


def compute():
    qv = embed(QUERY)
    dense = sorted(((cosine(qv, embed(t)), sid) for sid, t in SENTENCES), key=lambda x: (-x[0], x[1]))
    return {
        "query": QUERY,
        "sentences": [{"id": sid, "text": t, "drm": drm(QUERY, t)} for sid, t in SENTENCES],
        "pairs": [{"a": a, "b": b, "drm": drm(a, b)} for a, b in PAIRS],
        "dense_order": [sid for _, sid in dense],
        "dense_scores": [s for s, _ in dense],
    }


def main():
    if len(sys.argv) != 3 or sys.argv[1] not in ("--write", "--check"):
        print(__doc__)
        return 2
    got = compute()
    if sys.argv[1] == "--write":
        with open(sys.argv[2], "w", encoding="utf-8") as f:
            json.dump(got, f, indent=2, ensure_ascii=False)
            f.write("\n")
        return 0
    with open(sys.argv[2], encoding="utf-8") as f:
        want = json.load(f)
    if got != want:
        print("fixture is stale: rerun with --write")
        return 1
    print("drm oracle fixture up to date")
    return 0


if __name__ == "__main__":
    sys.exit(main())
