"""AUROC and FPR95 with ID as the positive class (higher score = more ID)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .core import EmptyClass


@dataclass
class MetricReport:
    auroc: float
    fpr95: float
    n_id: int
    n_ood: int
    per_phase: list[tuple[int, "MetricReport"]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "auroc": self.auroc,
            "fpr95": self.fpr95,
            "n_id": self.n_id,
            "n_ood": self.n_ood,
            "per_phase": [{"phase": p, **r.to_dict()} for p, r in self.per_phase],
        }


def _check(id_scores, ood_scores) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(id_scores, dtype=np.float64)
    b = np.asarray(ood_scores, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise EmptyClass("both ID and OOD scores are required")
    return a, b


def auroc(id_scores: Sequence[float], ood_scores: Sequence[float]) -> float:
    """Mann-Whitney estimate of P(ID score > OOD score), ties counting one half."""
    a, b = _check(id_scores, ood_scores)
    ranks = rankdata(np.concatenate([a, b]), method="average")
    n, m = a.size, b.size
    u = ranks[:n].sum() - n * (n + 1) / 2.0
    return float(u / (n * m))


def fpr95(id_scores: Sequence[float], ood_scores: Sequence[float]) -> float:
    """OOD acceptance rate at the largest threshold keeping at least 95% of ID scores.

    The threshold is an order statistic of the ID scores; no interpolation.
    """
    a, b = _check(id_scores, ood_scores)
    # largest gamma with #{a >= gamma} >= ceil(0.95 n) is the ceil(0.95 n)-th largest ID score
    need = int(np.ceil(0.95 * a.size - 1e-12))
    gamma = np.sort(a)[::-1][need - 1]
    return float(np.mean(b >= gamma))


def report(
    id_scores: Sequence[float],
    ood_scores: Sequence[float],
    per_phase: list[tuple[int, MetricReport]] | None = None,
) -> MetricReport:
    a, b = _check(id_scores, ood_scores)
    return MetricReport(auroc(a, b), fpr95(a, b), a.size, b.size, per_phase or [])


def report_from_results(results, phases: Sequence[int] | None = None) -> MetricReport:
    """MetricReport over StreamResults; optional per-phase breakdown aligned with ``results``."""
    scores = np.array([r.final_score for r in results])
    truth = np.array([r.truth for r in results])
    per = []
    if phases is not None:
        phases = np.asarray(phases)
        for p in sorted(set(phases.tolist())):
            sel = phases == p
            ids, oods = scores[sel & (truth == "ID")], scores[sel & (truth == "OOD")]
            if ids.size and oods.size:
                per.append((int(p), report(ids, oods)))
    return report(scores[truth == "ID"], scores[truth == "OOD"], per)
