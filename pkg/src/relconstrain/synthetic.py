"""Templated synthetic QFS data for offline tests and demos.

Every content word of a document also fills a slot of the summary
template, so whichever document tokens end up as constraints, a summary
containing all of them is reachable under a model trained on the
training split.
"""

from __future__ import annotations

import random
from pathlib import Path

from .pipeline import QfsExample, write_jsonl

SUBJECTS = ["companies", "governments", "unions", "regulators", "investors", "charities"]
TOPICS = ["water", "energy", "housing", "schools", "prisons", "railways"]
VERBS = ["violate", "protect", "ignore", "support", "weaken", "fund"]
ADJECTIVES = ["environmental", "financial", "legal", "ethical", "social", "technical"]
OBJECTS = ["standards", "rights", "budgets", "rules", "safeguards", "contracts"]
POLICIES = ["privatized", "regulated", "subsidized", "nationalized"]

QUERY = "{topic}: should {topic} be {policy}?"
DOCUMENT = "the {subj} of {topic} will {verb} the {adj} {obj}, and that is all."
SUMMARY = "{subj} of {topic} {verb} {adj} {obj}."


def make_example(rng: random.Random, ex_id: str) -> QfsExample:
    slots = {
        "subj": rng.choice(SUBJECTS),
        "topic": rng.choice(TOPICS),
        "verb": rng.choice(VERBS),
        "adj": rng.choice(ADJECTIVES),
        "obj": rng.choice(OBJECTS),
        "policy": rng.choice(POLICIES),
    }
    return QfsExample(ex_id, QUERY.format(**slots), DOCUMENT.format(**slots), SUMMARY.format(**slots))


def make_splits(seed: int = 13, n_train: int = 300, n_dev: int = 8, n_test: int = 20) -> dict[str, list[QfsExample]]:
    rng = random.Random(seed)
    return {
        name: [make_example(rng, f"{name}-{i:04d}") for i in range(n)]
        for name, n in (("train", n_train), ("dev", n_dev), ("test", n_test))
    }


def write_splits(directory: str | Path, **kwargs) -> dict[str, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, examples in make_splits(**kwargs).items():
        paths[name] = directory / f"{name}.jsonl"
        write_jsonl(paths[name], ({"id": e.id, "query": e.query, "document": e.document, "summary": e.summary}
                                  for e in examples))
    return paths
