"""Corpus statistics: most frequent entities per class/category and meme-text length histograms."""

from __future__ import annotations

import csv
import io
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Optional, Sequence

from ..text import word_tokens
from .candidates import CATEGORIES, EntityLexicon
from .records import MemeRecord

CLASSES = ("harmful", "not_harmful")


@dataclass
class CorpusStats:
    k: int
    top: dict[str, dict[str, list[tuple[str, int]]]]
    bin_edges: list[int]
    histograms: dict[str, list[int]]
    class_sizes: dict[str, int]
    entity_lengths: dict[str, dict[str, list[int]]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "top": {c: {cat: [list(x) for x in rows] for cat, rows in by.items()} for c, by in self.top.items()},
            "bin_edges": self.bin_edges,
            "histograms": self.histograms,
            "class_sizes": self.class_sizes,
        }

    def top_table_text(self) -> str:
        cats = sorted({cat for by in self.top.values() for cat in by},
                      key=lambda c: (CATEGORIES + ("unknown",)).index(c))
        cols = [(cls, cat) for cls in CLASSES for cat in cats]
        cells = [[f"{n} ({c})" for n, c in self.top[cls].get(cat, [])] for cls, cat in cols]
        width = max([len(f"{a}/{b}") for a, b in cols] + [len(s) for col in cells for s in col] + [8]) + 2
        lines = ["".join(f"{a}/{b}".ljust(width) for a, b in cols)]
        for i in range(max((len(c) for c in cells), default=0)):
            lines.append("".join((col[i] if i < len(col) else "").ljust(width) for col in cells).rstrip())
        return "\n".join(lines) + "\n"

    def top_table_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "category", "rank", "entity", "count"])
        for cls in CLASSES:
            for cat, rows in self.top[cls].items():
                for rank, (name, count) in enumerate(rows, start=1):
                    w.writerow([cls, cat, rank, name, count])
        return buf.getvalue()

    def histogram_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        bins = [f"{lo}-{hi - 1}" for lo, hi in zip(self.bin_edges[:-1], self.bin_edges[1:])]
        w.writerow(["class", *bins, "total"])
        for cls in CLASSES:
            w.writerow([cls, *self.histograms[cls], sum(self.histograms[cls])])
        return buf.getvalue()

    def histogram_text(self) -> str:
        lines = [f"{'tokens':<10}" + "".join(f"{c:>14}" for c in CLASSES)]
        for j, (lo, hi) in enumerate(zip(self.bin_edges[:-1], self.bin_edges[1:])):
            lines.append(f"{f'{lo}-{hi - 1}':<10}" + "".join(f"{self.histograms[c][j]:>14}" for c in CLASSES))
        lines.append(f"{'total':<10}" + "".join(f"{self.class_sizes[c]:>14}" for c in CLASSES))
        return "\n".join(lines) + "\n"


def text_length(text: str) -> int:
    return len(word_tokens(text))


def corpus_stats(records: Sequence[MemeRecord], lexicon: Optional[EntityLexicon] = None,
                 k: int = 5, bin_width: int = 5) -> CorpusStats:
    """Entity frequencies count harmful targets and non-harmful candidates separately.

    A meme belongs to the harmful class when it has at least one harmful target.
    """
    freq = {cls: defaultdict(Counter) for cls in CLASSES}
    lengths = {cls: [] for cls in CLASSES}
    per_entity: dict[str, dict[str, list[int]]] = defaultdict(lambda: {c: [] for c in CLASSES})

    def category(name: str) -> str:
        cat = lexicon.category(name) if lexicon is not None else None
        return cat or ("individual" if lexicon is None else "unknown")

    for rec in records:
        harmful = set(rec.harmful_targets)
        n_tok = text_length(rec.ocr_text)
        lengths["harmful" if harmful else "not_harmful"].append(n_tok)
        for ent in harmful:
            freq["harmful"][category(ent)][ent] += 1
            per_entity[ent]["harmful"].append(n_tok)
        for ent in set(rec.candidates) - harmful:
            freq["not_harmful"][category(ent)][ent] += 1
            per_entity[ent]["not_harmful"].append(n_tok)

    top = {
        cls: {cat: sorted(cnt.items(), key=lambda kv: (-kv[1], kv[0]))[:k] for cat, cnt in sorted(by.items())}
        for cls, by in freq.items()
    }
    longest = max((n for ls in lengths.values() for n in ls), default=0)
    edges = list(range(0, (longest // bin_width + 1) * bin_width + 1, bin_width))
    hist = {cls: [0] * (len(edges) - 1) for cls in CLASSES}
    for cls, ls in lengths.items():
        for n in ls:
            hist[cls][n // bin_width] += 1
    top_harmful = [name for by in top["harmful"].values() for name, _ in by]
    return CorpusStats(k=k, top=top, bin_edges=edges, histograms=hist,
                       class_sizes={c: len(v) for c, v in lengths.items()},
                       entity_lengths={e: per_entity[e] for e in top_harmful})
