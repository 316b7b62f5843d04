"""Triage records with the error counts and similarity spread reported for
one generation model on a 5,794-sentence test set.

    python3 generate.py
"""
import json
import random

EVALUATED = 5794
CRITICAL, CRITICAL_HIGH = 299, 293      # high: similarity >= 0.93
NON_CRITICAL, NON_CRITICAL_HIGH = 46, 44  # high: similarity >= 0.97
CRITICAL_REASONS = [
    ["numeric-alteration"],
    ["word-change"],
    ["repetition"],
    ["numeric-alteration", "repetition"],
    ["numeric-alteration", "word-change"],
]


def main():
    rng = random.Random(6)
    ids = rng.sample(range(EVALUATED), CRITICAL + NON_CRITICAL)
    records = []
    for k, sid in enumerate(ids):
        if k < CRITICAL:
            lo = 0.93 if k < CRITICAL_HIGH else 0.6
            hi = 1.0 if k < CRITICAL_HIGH else 0.929
            records.append({"sentence_id": f"test-{sid:05d}", "severity": "critical",
                            "reasons": rng.choice(CRITICAL_REASONS),
                            "similarity": round(rng.uniform(lo, hi), 4)})
        else:
            j = k - CRITICAL
            lo = 0.97 if j < NON_CRITICAL_HIGH else 0.9
            hi = 0.9999 if j < NON_CRITICAL_HIGH else 0.969
            records.append({"sentence_id": f"test-{sid:05d}", "severity": "non-critical",
                            "reasons": ["formatting-only"],
                            "similarity": round(rng.uniform(lo, hi), 4)})
    records.sort(key=lambda r: r["sentence_id"])
    with open("ptt5.jsonl", "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r, separators=(",", ":")) + "\n")
    with open("ptt5.meta.json", "w", encoding="utf-8") as f:
        json.dump({"evaluated": EVALUATED}, f)
        f.write("\n")


if __name__ == "__main__":
    main()
