#!/usr/bin/env python3
"""Writes the 20-document synthetic corpus: space.json, manifest.jsonl,
predictions.jsonl. Probabilities are multiples of 1/64 so every vector sums
to exactly 1 in binary floating point."""
import json
import random

CLASSES = ["letter", "form", "email", "invoice"]
rng = random.Random(20240611)


def vector(label, informative):
    weights = [rng.randint(0, 6) for _ in CLASSES]
    if informative:
        weights[label] += rng.randint(8, 30)
    total = sum(weights)
    if total == 0:
        weights[label] = 1
        total = 1
    # spread the remainder of 64 so the sum is exactly 64
    scaled = [w * 64 // total for w in weights]
    scaled[label if informative else rng.randrange(len(CLASSES))] += 64 - sum(scaled)
    return [s / 64 for s in scaled]


docs, preds = [], []
for i in range(20):
    doc_id = f"d{i:02d}"
    label = rng.randrange(len(CLASSES))
    n = rng.randint(1, 6)
    rec = {"doc_id": doc_id, "label": label, "pages": [f"pages/{doc_id}_p{p}.png" for p in range(n)]}
    if i < 12:
        rec["bundle_id"] = f"b{i // 4}"
    else:
        rec["stream_id"] = f"s{(i - 12) // 4}"
        rec["stream_position"] = (i - 12) % 4
    if i % 5 == 0:
        rec["page_labels"] = [label] * n
    docs.append(rec)
    for p in range(n):
        preds.append({"doc_id": doc_id, "level": "page", "page_index": p,
                      "probs": vector(label, rng.random() < 0.45)})
    preds.append({"doc_id": doc_id, "level": "document", "probs": vector(label, rng.random() < 0.6)})

with open("space.json", "w") as f:
    json.dump({"kind": "document_level", "classes": CLASSES}, f)
    f.write("\n")
with open("manifest.jsonl", "w") as f:
    for rec in docs:
        f.write(json.dumps(rec) + "\n")
with open("predictions.jsonl", "w") as f:
    for rec in preds:
        f.write(json.dumps(rec) + "\n")
