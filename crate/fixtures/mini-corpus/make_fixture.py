"""Regenerates fixture.jsonl for the mini corpus.

Vectors are planted in four dimensions: the expected word sits on the first
axis and each response at a chosen cosine from it.
"""

import hashlib
import json
import math

BACKEND, TAGGER, MODEL = "sidecar", "default", "default"
CONTEXTS = {
    "g1": "Ontem o menino {{BLANK}} até a escola.",
    "g2": "O cachorro {{BLANK}} atrás do gato.",
    "g5": "Nós {{BLANK}} juntos todas as manhãs.",
    "g3": "Ela {{BLANK}} depressa para casa.",
    "g4": "O atleta {{BLANK}} a maratona inteira.",
}
POS = {
    "g1": {},
    "g2": {},
    "g5": {},
    "g3": {"correu": "VERB", "andou": "VERB", "mesa": "NOUN"},
    "g4": {"correu": "VERB", "comeu": "VERB", "está": "AUX"},
}
# g1, g2 and g5 are only needed when scoring similarities for calibration
COSINES = {
    "g1": {"correu": 1.0},
    "g2": {"correu": 1.0, "coreu": 0.93},
    "g5": {"corremos": 1.0, "corremso": 0.91},
    "g3": {"correu": 1.0, "andou": 0.70, "mesa": 0.15},
    "g4": {"correu": 1.0, "comeu": 0.40, "está": 0.652},
}


def key(model, context, word):
    filled = context.replace("{{BLANK}}", word)
    digest = hashlib.sha256(filled.encode("utf-8")).hexdigest()
    return {"backend": BACKEND, "model": model, "mode": "contextual",
            "sentence_digest": digest, "word": word}


def at_cosine(c):
    return [c, math.sqrt(1.0 - c * c), 0.0, 0.0]


records = []
for gap, context in CONTEXTS.items():
    for word, tag in POS[gap].items():
        records.append({"key": key(TAGGER, context, word), "pos": tag, "vector": None})
    for word, cos in COSINES[gap].items():
        records.append({"key": key(MODEL, context, word), "pos": None, "vector": at_cosine(cos)})

with open("fixture.jsonl", "w", encoding="utf-8") as out:
    for r in records:
        out.write(json.dumps(r, ensure_ascii=False, separators=(",", ":")) + "\n")
