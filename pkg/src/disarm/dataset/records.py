"""Manifest records, target instances and manifest validation.

A manifest is JSON Lines, one meme per line::

    {"id": "m001", "image_ref": "img/m001.png", "ocr_text": "...",
     "candidates": ["joe biden", "donald trump"], "harmful_targets": ["joe biden"],
     "split": "train", "context": null}

``image_ref`` is resolved relative to the manifest's directory.  ``context`` is
either null or a context document (see :class:`ContextDoc`).
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from ..text import normalize

SPLITS = ("train", "validation", "test")
SCENARIOS = ("A", "B", "C")
HARMFUL, NOT_HARMFUL = 1, 0


@dataclass
class ContextDoc:
    query: str
    title: str = ""
    first_paragraph: str = ""
    source_url: str = ""
    fetched_at: str = ""
    failed: bool = False

    @property
    def text(self) -> str:
        return " ".join(p for p in (self.title, self.first_paragraph) if p)

    @classmethod
    def failure(cls, query: str) -> "ContextDoc":
        return cls(query=query, failed=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ContextDoc":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MemeRecord:
    id: str
    image_ref: str
    ocr_text: str
    candidates: list[str] = field(default_factory=list)
    harmful_targets: list[str] = field(default_factory=list)
    split: str = "train"
    context: Optional[ContextDoc] = None
    base_dir: Path = field(default=Path("."), repr=False, compare=False)

    @property
    def image_path(self) -> Path:
        return self.base_dir / self.image_ref

    @property
    def is_harmful(self) -> bool:
        return bool(self.harmful_targets)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "image_ref": self.image_ref,
            "ocr_text": self.ocr_text,
            "candidates": list(self.candidates),
            "harmful_targets": list(self.harmful_targets),
            "split": self.split,
            "context": None if self.context is None else self.context.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path = Path(".")) -> "MemeRecord":
        ctx = d.get("context")
        return cls(
            id=str(d["id"]),
            image_ref=d["image_ref"],
            ocr_text=d.get("ocr_text", ""),
            candidates=[normalize(c) for c in d.get("candidates") or []],
            harmful_targets=[normalize(c) for c in d.get("harmful_targets") or []],
            split=d.get("split", "train"),
            context=ContextDoc.from_dict(ctx) if ctx else None,
            base_dir=base_dir,
        )


@dataclass(frozen=True)
class TargetInstance:
    meme_id: str
    entity: str
    label: int
    scenario: str

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TargetInstance":
        return cls(str(d["meme_id"]), d["entity"], int(d["label"]), d["scenario"])


def dump_jsonl(path, rows: Iterable[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def read_manifest(path) -> list[MemeRecord]:
    """Load a manifest; raises ValueError on the first malformed line."""
    report = validate_manifest(path, check_images=False)
    bad = [v for v in report.violations if v.kind == "malformed"]
    if bad:
        raise ValueError(f"{path}:{bad[0].line}: {bad[0].message}")
    return report.records


def write_manifest(path, records: Iterable[MemeRecord]) -> None:
    dump_jsonl(path, (r.to_dict() for r in records))


def read_instances(path) -> list[TargetInstance]:
    with open(path, encoding="utf-8") as fh:
        return [TargetInstance.from_dict(json.loads(line)) for line in fh if line.strip()]


def write_instances(path, instances: Iterable[TargetInstance]) -> None:
    dump_jsonl(path, (i.to_dict() for i in instances))


@dataclass
class Violation:
    line: int
    record_id: Optional[str]
    kind: str
    message: str

    def __str__(self):
        rid = f" [{self.record_id}]" if self.record_id else ""
        return f"line {self.line}{rid}: {self.kind}: {self.message}"


@dataclass
class ManifestReport:
    path: str
    records: list[MemeRecord]
    violations: list[Violation]
    memes_per_split: dict[str, int]
    labels_per_split: dict[str, dict[str, int]]

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "ok": self.ok,
            "n_records": len(self.records),
            "memes_per_split": self.memes_per_split,
            "labels_per_split": self.labels_per_split,
            "violations": [asdict(v) for v in self.violations],
        }

    def to_text(self) -> str:
        lines = [f"manifest: {self.path}", f"records: {len(self.records)}", ""]
        lines.append(f"{'split':<12}{'memes':>8}{'harmful':>10}{'not-harmful':>13}{'total':>8}")
        for split in (*SPLITS, "total"):
            lab = self.labels_per_split.get(split, {})
            h, n = lab.get("harmful", 0), lab.get("not_harmful", 0)
            lines.append(f"{split:<12}{self.memes_per_split.get(split, 0):>8}{h:>10}{n:>13}{h + n:>8}")
        lines.append("")
        lines.append(f"violations: {len(self.violations)}")
        lines.extend(f"  {v}" for v in self.violations)
        return "\n".join(lines) + "\n"


_REQUIRED = {"id": str, "image_ref": str, "ocr_text": str}
_LISTS = ("candidates", "harmful_targets")


def _check_row(row: dict) -> list[str]:
    problems = []
    for key, typ in _REQUIRED.items():
        if key not in row:
            problems.append(f"missing field {key!r}")
        elif not isinstance(row[key], typ):
            problems.append(f"field {key!r} must be {typ.__name__}")
    for key in _LISTS:
        val = row.get(key, [])
        if not isinstance(val, list) or not all(isinstance(x, str) for x in val):
            problems.append(f"field {key!r} must be a list of strings")
    if row.get("split", "train") not in SPLITS:
        problems.append(f"split {row.get('split')!r} not in {SPLITS}")
    ctx = row.get("context")
    if ctx is not None and not (isinstance(ctx, dict) and "query" in ctx):
        problems.append("context must be null or an object with a 'query'")
    return problems


def validate_manifest(path, check_images: bool = True, negatives_per_positive: int = 2) -> ManifestReport:
    """Check every record invariant and tally memes and labels per split.

    Label tallies count one harmful instance per harmful target.  Not-harmful
    counts are the annotated non-harmful candidates on the test split and
    ``negatives_per_positive`` times the harmful count on train/validation,
    where negatives are sampled rather than annotated.
    """
    path = Path(path)
    base = path.parent
    records: list[MemeRecord] = []
    violations: list[Violation] = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                row = json.loads(raw)
            except json.JSONDecodeError as exc:
                violations.append(Violation(lineno, None, "malformed", f"invalid JSON: {exc.msg}"))
                continue
            if not isinstance(row, dict):
                violations.append(Violation(lineno, None, "malformed", "line is not a JSON object"))
                continue
            problems = _check_row(row)
            rid = row.get("id") if isinstance(row.get("id"), str) else None
            if problems:
                violations.extend(Violation(lineno, rid, "malformed", p) for p in problems)
                continue
            rec = MemeRecord.from_dict(row, base)
            if rec.id in seen:
                violations.append(Violation(lineno, rec.id, "duplicate-id", f"id first seen on line {seen[rec.id]}"))
            else:
                seen[rec.id] = lineno
            dangling = sorted(set(rec.harmful_targets) - set(rec.candidates))
            if dangling:
                violations.append(Violation(lineno, rec.id, "harmful-not-candidate",
                                            f"harmful targets not among candidates: {dangling}"))
            dupes = sorted(c for c, n in Counter(rec.candidates).items() if n > 1)
            if dupes:
                violations.append(Violation(lineno, rec.id, "duplicate-candidate", f"{dupes}"))
            if check_images and not rec.image_path.is_file():
                violations.append(Violation(lineno, rec.id, "missing-image", f"{rec.image_path} not found"))
            records.append(rec)

    memes = Counter(r.split for r in records)
    labels = {s: {"harmful": 0, "not_harmful": 0} for s in SPLITS}
    for r in records:
        h = len(set(r.harmful_targets))
        labels[r.split]["harmful"] += h
        if r.split == "test":
            labels[r.split]["not_harmful"] += len(set(r.candidates) - set(r.harmful_targets))
        else:
            labels[r.split]["not_harmful"] += negatives_per_positive * h
    labels["total"] = {k: sum(labels[s][k] for s in SPLITS) for k in ("harmful", "not_harmful")}
    memes_per_split = {s: memes.get(s, 0) for s in SPLITS}
    memes_per_split["total"] = len(records)
    return ManifestReport(str(path), records, violations, memes_per_split, labels)
