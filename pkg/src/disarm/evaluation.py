"""Classification metrics and per-scenario evaluation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
import torch

from .errors import DimensionError
from .features import FeatureSet

log = logging.getLogger(__name__)

CLASS_NAMES = ("not_harmful", "harmful")  # index = label


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def f1(p: float, r: float) -> float:
    return _ratio(2 * p * r, p + r)


def macro_summary(per_class: Mapping[str, tuple[float, float]]) -> tuple[float, float, float]:
    """Macro precision, recall and F1 from per-class ``(P, R)``; macro F1 averages per-class F1s."""
    ps = [p for p, _ in per_class.values()]
    rs = [r for _, r in per_class.values()]
    f1s = [f1(p, r) for p, r in per_class.values()]
    return float(np.mean(ps)), float(np.mean(rs)), float(np.mean(f1s))


@dataclass
class EvalReport:
    scenario: str
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    per_class: dict[str, tuple[float, float]]
    confusion: list[list[int]]  # rows = true label, columns = predicted label
    n: int = 0
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "n": self.n,
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "per_class": {k: {"precision": p, "recall": r} for k, (p, r) in self.per_class.items()},
            "confusion": self.confusion,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(d["scenario"], d["accuracy"], d["macro_precision"], d["macro_recall"], d["macro_f1"],
                   {k: (v["precision"], v["recall"]) for k, v in d["per_class"].items()},
                   d["confusion"], d.get("n", 0), d.get("meta", {}))

    def check_invariants(self, tol: float = 1e-9) -> list[str]:
        """Names of violated identities (empty when the report is self-consistent)."""
        bad = []
        p, r, f = macro_summary(self.per_class)
        if abs(p - self.macro_precision) > tol:
            bad.append("macro_precision")
        if abs(r - self.macro_recall) > tol:
            bad.append("macro_recall")
        if abs(f - self.macro_f1) > tol:
            bad.append("macro_f1")
        cm = np.asarray(self.confusion)
        if cm.sum() != self.n:
            bad.append("confusion_total")
        if self.n and abs(np.trace(cm) / self.n - self.accuracy) > tol:
            bad.append("accuracy")
        return bad


def compute_metrics(predictions: Sequence[int], labels: Sequence[int], scenario: str = "all") -> EvalReport:
    pred = np.asarray(predictions, dtype=np.int64).ravel()
    true = np.asarray(labels, dtype=np.int64).ravel()
    if pred.shape != true.shape:
        raise DimensionError(f"{pred.size} predictions vs {true.size} labels")
    if pred.size == 0:
        raise DimensionError("cannot score an empty prediction set")
    cm = np.zeros((2, 2), dtype=np.int64)
    np.add.at(cm, (true, pred), 1)
    per_class = {}
    for k, name in enumerate(CLASS_NAMES):
        per_class[name] = (_ratio(cm[k, k], cm[:, k].sum()), _ratio(cm[k, k], cm[k, :].sum()))
    mp, mr, mf = macro_summary(per_class)
    return EvalReport(scenario, float(np.trace(cm) / cm.sum()), mp, mr, mf, per_class, cm.tolist(), int(cm.sum()))


@torch.no_grad()
def predict_proba(model, features: FeatureSet, batch_size: int = 256) -> torch.Tensor:
    was_training = model.training
    model.eval()
    idx = model.entity_indices(features.entities)
    probs = []
    for s in range(0, len(features), batch_size):
        sl = slice(s, s + batch_size)
        out = model(idx[sl], features.context[sl], features.image[sl], features.harm[sl])
        probs.append(torch.sigmoid(out["logit"]))
    model.train(was_training)
    return torch.cat(probs) if probs else torch.zeros(0)


def evaluate(model, features: FeatureSet, threshold: float = 0.5,
             scenarios: Optional[Sequence[str]] = None) -> dict[str, EvalReport]:
    """One report per scenario present in ``features`` plus a ``pooled`` report.

    Requested scenarios with no instances are skipped with a warning.
    """
    probs = predict_proba(model, features)
    pred = (probs >= threshold).long().numpy()
    labels = features.labels.long().numpy()
    tags = np.asarray(features.scenarios)
    wanted = list(scenarios) if scenarios is not None else sorted(set(tags.tolist()))
    reports = {}
    for s in wanted:
        mask = tags == s
        if not mask.any():
            log.warning("scenario %s has no instances; omitted", s)
            continue
        reports[s] = compute_metrics(pred[mask], labels[mask], scenario=s)
    if len(features):
        reports["pooled"] = compute_metrics(pred, labels, scenario="pooled")
    return reports
