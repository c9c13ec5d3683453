"""Small synthetic corpora for smoke runs, tests and demos.

Memes are word salads over a filler vocabulary that mention lexicon
entities; memes that harm an entity also carry words from a separate
"abusive" vocabulary, so labels are recoverable from the stub encodings.
Images are random bytes (the stub image encoder only hashes file content).
"""

from __future__ import annotations

import json
import random
from pathlib import Path
from typing import Optional

from .dataset.candidates import EntityLexicon, LexiconEntry
from .dataset.records import ContextDoc, MemeRecord, TargetInstance, write_manifest

FILLER = (
    "when you the news today again still says look at this my face every time they "
    "tell me about that new plan meanwhile nobody asked why does it always happen "
    "vote rally tax border economy speech debate weekend morning coffee"
).split()
ABUSE = "liar crook clown traitor fraud idiot corrupt disgrace puppet loser".split()

ENTITIES = [
    ("joe biden", "individual", ["biden", "sleepy joe"]),
    ("donald trump", "individual", ["trump"]),
    ("barack obama", "individual", ["obama"]),
    ("hillary clinton", "individual", ["hillary"]),
    ("mike pence", "individual", ["pence"]),
    ("kamala harris", "individual", ["kamala"]),
    ("democratic party", "organization", ["democrats"]),
    ("republican party", "organization", ["gop", "republicans"]),
    ("libertarian party", "organization", []),
    ("green party", "organization", []),
    ("cnn", "organization", []),
    ("mexicans", "community", []),
    ("muslims", "community", []),
    ("trump supporters", "community", []),
]


def lexicon(n: Optional[int] = None) -> EntityLexicon:
    return EntityLexicon(LexiconEntry(name, cat, aliases) for name, cat, aliases in ENTITIES[:n])


def _write_image(path: Path, rng: random.Random) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(bytes(rng.getrandbits(8) for _ in range(64)))


def _text(rng: random.Random, mentions: list[str], harmful: bool, n_words: int) -> str:
    words = [rng.choice(FILLER) for _ in range(n_words)]
    for m in mentions:
        words.insert(rng.randrange(len(words) + 1), m)
    if harmful:
        for w in rng.sample(ABUSE, 3):
            words.insert(rng.randrange(len(words) + 1), w)
    return " ".join(words)


def make_corpus(root, n_train: int = 24, n_val: int = 6, n_test: int = 20, seed: int = 0,
                n_entities: Optional[int] = None, unseen: int = 3) -> tuple[Path, Path, list[MemeRecord]]:
    """Write ``manifest.jsonl``, ``lexicon.json``, images and a replay search file under ``root``.

    The last ``unseen`` lexicon entities appear only in test memes, so the test
    split covers scenarios A, B and C.
    """
    root = Path(root)
    rng = random.Random(seed)
    lex = lexicon(n_entities)
    names = lex.names
    seen_pool, unseen_pool = names[: len(names) - unseen], names[len(names) - unseen:]
    # entities that are only ever mentioned harmlessly in training feed scenario B
    benign = seen_pool[-2:]
    target_pool = seen_pool[:-2]
    records, replay = [], {}

    def meme(i: int, split: str) -> MemeRecord:
        if split == "test":
            pool = target_pool + benign + unseen_pool
            cands = sorted(rng.sample(pool, 2))
            harmful = [c for c in cands if rng.random() < 0.5]
        else:
            target = rng.choice(target_pool)
            cands = sorted({target, rng.choice(benign)})
            harmful = [target]
        text = _text(rng, cands, bool(harmful), rng.randint(6, 14))
        mid = f"{split[:2]}{i:04d}"
        img = f"images/{mid}.bin"
        _write_image(root / img, rng)
        replay[text] = [{"title": f"{cands[0]} news", "first_paragraph": " ".join(rng.choices(FILLER, k=12)),
                         "url": f"https://example.org/{mid}"}]
        return MemeRecord(mid, img, text, cands, harmful, split, base_dir=root)

    for split, n in (("train", n_train), ("validation", n_val), ("test", n_test)):
        records.extend(meme(i, split) for i in range(n))

    root.mkdir(parents=True, exist_ok=True)
    write_manifest(root / "manifest.jsonl", records)
    lex.dump(root / "lexicon.json")
    (root / "search_replay.json").write_text(json.dumps(replay, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return root / "manifest.jsonl", root / "lexicon.json", records


def separable_instances(root, n: int = 64, seed: int = 0) -> tuple[list[MemeRecord], list[TargetInstance]]:
    """One meme per instance; harmful instances carry abusive words, so the stub
    harm-text encodings of the two classes are linearly separable."""
    root = Path(root)
    rng = random.Random(seed)
    names = lexicon().names
    records, instances = [], []
    for i in range(n):
        label = i % 2
        ent = names[i % len(names)]
        text = _text(rng, [ent], bool(label), 8)
        mid = f"s{i:04d}"
        _write_image(root / "images" / f"{mid}.bin", rng)
        ctx = ContextDoc(query=text, title=f"{ent} news", first_paragraph=" ".join(rng.choices(FILLER, k=10)))
        records.append(MemeRecord(mid, f"images/{mid}.bin", text, [ent], [ent] if label else [], "train",
                                  context=ctx, base_dir=root))
        instances.append(TargetInstance(mid, ent, label, "train"))
    return records, instances
