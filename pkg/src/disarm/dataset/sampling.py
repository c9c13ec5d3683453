"""Negative sampling, instance construction and test-scenario assignment."""

from __future__ import annotations

import logging
from dataclasses import replace
from typing import Iterable, Sequence

from ..text import word_tokens
from .candidates import EntityLexicon
from .records import HARMFUL, NOT_HARMFUL, MemeRecord, TargetInstance

log = logging.getLogger(__name__)

NEGATIVES_PER_POSITIVE = 2


def lexical_similarity(meme_text: str, entity: str) -> float:
    """Jaccard overlap of the normalised word-token sets (1.0 for two empty sets)."""
    a, b = set(word_tokens(meme_text)), set(word_tokens(entity))
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def sample_negatives(meme: MemeRecord, lexicon: EntityLexicon, k: int = NEGATIVES_PER_POSITIVE) -> list[str]:
    """Top-``k`` lexicon entities by similarity to the meme text, excluding its harmful targets.

    Ties go to the lexicographically smaller name.
    """
    harmful = {lexicon.canonical(t) for t in meme.harmful_targets}
    pool = [name for name in lexicon.names if name not in harmful]
    if not pool:
        log.warning("meme %s: no eligible negative entities in the lexicon", meme.id)
        return []
    ranked = sorted(pool, key=lambda name: (-lexical_similarity(meme.ocr_text, name), name))
    return ranked[:k]


def build_training_instances(records: Iterable[MemeRecord], lexicon: EntityLexicon,
                             scenario: str = "train") -> list[TargetInstance]:
    """One positive per harmful target plus two sampled negatives per positive."""
    out = []
    for rec in records:
        targets = sorted({lexicon.canonical(t) for t in rec.harmful_targets})
        out.extend(TargetInstance(rec.id, t, HARMFUL, scenario) for t in targets)
        if targets:
            negs = sample_negatives(rec, lexicon, NEGATIVES_PER_POSITIVE * len(targets))
            out.extend(TargetInstance(rec.id, n, NOT_HARMFUL, scenario) for n in negs)
    return out


def build_test_instances(records: Iterable[MemeRecord], lexicon: EntityLexicon | None = None) -> list[TargetInstance]:
    """Every annotated candidate of a test meme, labelled by membership in its harmful targets."""
    canon = lexicon.canonical if lexicon is not None else (lambda s: s)
    out = []
    for rec in records:
        harmful = {canon(t) for t in rec.harmful_targets}
        for entity in sorted({canon(c) for c in rec.candidates}):
            out.append(TargetInstance(rec.id, entity, HARMFUL if entity in harmful else NOT_HARMFUL, "test"))
    return out


def scenario_for(entity: str, seen: set[str], seen_harmful: set[str]) -> str:
    if entity in seen_harmful:
        return "A"
    if entity in seen:
        return "B"
    return "C"


def assign_scenario(test_instances: Sequence[TargetInstance],
                    train_instances: Sequence[TargetInstance]) -> list[TargetInstance]:
    """Tag test instances A (entity seen as a harmful target in training), B (seen,
    never harmful) or C (never seen)."""
    seen = {i.entity for i in train_instances}
    seen_harmful = {i.entity for i in train_instances if i.label == HARMFUL}
    return [replace(i, scenario=scenario_for(i.entity, seen, seen_harmful)) for i in test_instances]


def build_all_instances(records: Sequence[MemeRecord], lexicon: EntityLexicon) -> dict[str, list[TargetInstance]]:
    by_split = {s: [r for r in records if r.split == s] for s in ("train", "validation", "test")}
    train = build_training_instances(by_split["train"], lexicon, "train")
    val = build_training_instances(by_split["validation"], lexicon, "validation")
    test = assign_scenario(build_test_instances(by_split["test"], lexicon), train)
    return {"train": train, "validation": val, "test": test}
