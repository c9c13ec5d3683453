"""Entity lexicon and candidate-entity extraction.

Extractors are adapters.  A text extractor is called with the OCR text, an
image extractor with the image path; both return entity names.  The lexicon
alias matcher always runs as the reference text extractor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Protocol

from ..errors import ContractError, EncoderInputError
from ..text import normalize, word_tokens

CATEGORIES = ("individual", "organization", "community")


@dataclass
class LexiconEntry:
    name: str
    category: str = "individual"
    aliases: list[str] = field(default_factory=list)


class EntityLexicon:
    """Canonical entities with aliases; every alias maps to exactly one entry.

    The lexicon file is JSON: a list of ``{"name", "category", "aliases"}`` objects.
    """

    def __init__(self, entries: Iterable[LexiconEntry] = ()):
        self.entries: dict[str, LexiconEntry] = {}
        self._alias: dict[str, str] = {}
        for e in entries:
            self.add(e)

    def add(self, entry: LexiconEntry) -> None:
        name = normalize(entry.name)
        if entry.category not in CATEGORIES:
            raise ContractError(f"{name}: category {entry.category!r} not in {CATEGORIES}")
        if name in self.entries:
            raise ContractError(f"duplicate lexicon entry {name!r}")
        for alias in {name, *(normalize(a) for a in entry.aliases)}:
            owner = self._alias.get(alias)
            if owner is not None and owner != name:
                raise ContractError(f"alias {alias!r} maps to both {owner!r} and {name!r}")
            self._alias[alias] = name
        self.entries[name] = LexiconEntry(name, entry.category, sorted({normalize(a) for a in entry.aliases}))

    @classmethod
    def load(cls, path) -> "EntityLexicon":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(LexiconEntry(d["name"], d.get("category", "individual"), d.get("aliases", [])) for d in data)

    def dump(self, path) -> None:
        rows = [{"name": e.name, "category": e.category, "aliases": e.aliases} for e in self]
        Path(path).write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")

    def __iter__(self):
        return iter(self.entries[k] for k in sorted(self.entries))

    def __len__(self):
        return len(self.entries)

    def __contains__(self, name: str) -> bool:
        return normalize(name) in self.entries

    @property
    def names(self) -> list[str]:
        return sorted(self.entries)

    def canonical(self, name: str) -> str:
        """Canonical name for an alias; unknown names come back normalised."""
        n = normalize(name)
        return self._alias.get(n, n)

    def category(self, name: str) -> Optional[str]:
        entry = self.entries.get(self.canonical(name))
        return entry.category if entry else None

    def aliases(self) -> dict[str, str]:
        return dict(self._alias)


class Extractor(Protocol):
    kind: str  # "text" or "image"

    def __call__(self, item) -> list[str]: ...


class LexiconMatcher:
    """Finds lexicon aliases in text on word boundaries; returns canonical names."""

    kind = "text"

    def __init__(self, lexicon: EntityLexicon):
        self.lexicon = lexicon
        self._patterns = [(tuple(word_tokens(alias)), canon) for alias, canon in lexicon.aliases().items()]
        self._patterns = [(p, c) for p, c in self._patterns if p]

    def __call__(self, text: str) -> list[str]:
        toks = word_tokens(text)
        found = set()
        for pat, canon in self._patterns:
            n = len(pat)
            if any(tuple(toks[i:i + n]) == pat for i in range(len(toks) - n + 1)):
                found.add(canon)
        return sorted(found)


class CallableExtractor:
    def __init__(self, fn: Callable, kind: str = "text"):
        if kind not in ("text", "image"):
            raise ContractError(f"extractor kind must be 'text' or 'image', not {kind!r}")
        self.fn, self.kind = fn, kind

    def __call__(self, item) -> list[str]:
        return list(self.fn(item))


class SpacyNER:
    """PERSON/ORG/NORP/GPE spans from a spaCy pipeline (spaCy is an optional dependency)."""

    kind = "text"
    LABELS = ("PERSON", "ORG", "NORP", "GPE")

    def __init__(self, model: str = "en_core_web_sm"):
        try:
            import spacy
        except ImportError as exc:
            raise ImportError("SpacyNER needs spaCy: pip install spacy") from exc
        self.nlp = spacy.load(model)

    def __call__(self, text: str) -> list[str]:
        return [ent.text for ent in self.nlp(text).ents if ent.label_ in self.LABELS]


def extract_candidates(image_ref, ocr_text: str, lexicon: Optional[EntityLexicon],
                       extractors: Iterable[Extractor] = ()) -> list[str]:
    """Union of extractor outputs and lexicon alias matches, canonicalised, sorted, deduplicated."""
    names: set[str] = set()
    for ex in extractors:
        if getattr(ex, "kind", "text") == "image":
            path = Path(image_ref)
            if not path.is_file():
                raise EncoderInputError(f"cannot read image for candidate extraction: {path}")
            names.update(ex(path))
        else:
            names.update(ex(ocr_text))
    if lexicon is not None:
        names.update(LexiconMatcher(lexicon)(ocr_text))
    canon = (lexicon.canonical(n) if lexicon is not None else normalize(n) for n in names)
    return sorted({c for c in canon if c})
