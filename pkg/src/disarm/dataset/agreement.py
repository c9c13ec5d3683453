"""Fleiss' kappa over a categorical annotation matrix."""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from ..errors import ContractError


class KappaResult(NamedTuple):
    kappa: float
    degenerate: bool  # only one category was ever used

    def __float__(self):
        return self.kappa


def category_counts(rows: Sequence[Sequence]) -> np.ndarray:
    """Subjects x categories count matrix from rows of per-annotator labels."""
    if not rows:
        raise ContractError("annotation matrix has no rows")
    n = len(rows[0])
    if n < 2:
        raise ContractError("need at least two annotators")
    cats = sorted({lab for row in rows for lab in row}, key=repr)
    col = {c: j for j, c in enumerate(cats)}
    counts = np.zeros((len(rows), len(cats)), dtype=np.int64)
    for i, row in enumerate(rows):
        if len(row) != n:
            raise ContractError(f"row {i} has {len(row)} labels, expected {n}")
        if any(lab is None for lab in row):
            raise ContractError(f"row {i} is not fully annotated")
        for lab in row:
            counts[i, col[lab]] += 1
    return counts


def fleiss_kappa(rows: Sequence[Sequence]) -> KappaResult:
    """Rows are subjects, columns annotators, cells category labels."""
    counts = category_counts(rows)
    n_sub, _ = counts.shape
    n = counts[0].sum()
    p_j = counts.sum(axis=0) / (n_sub * n)
    p_e = float(np.sum(p_j ** 2))
    if p_e >= 1.0:
        return KappaResult(1.0, True)
    p_i = (np.sum(counts ** 2, axis=1) - n) / (n * (n - 1))
    p_bar = float(np.mean(p_i))
    return KappaResult((p_bar - p_e) / (1.0 - p_e), False)
