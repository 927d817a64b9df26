"""Distillation: shrink an over-realized dictionary back to a target size.

The production path keeps the most-used atoms and does nothing else — no
re-training is required in this setting.  An oracle pruner that peeks at the
ground truth is provided purely for diagnostics, along with the overlap
statistic between the two selections.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .learning import TrainReport
from .model import Dictionary
from .mtx import save_matrix

__all__ = [
    "DistillResult",
    "prune_by_usage",
    "oracle_prune",
    "selection_overlap",
    "fine_tune",
    "save_distill_result",
]


@dataclass(frozen=True)
class DistillResult:
    """Selected columns (unmodified) plus which indices were kept.

    ``oracle_overlap`` is the fraction of kept indices shared with the
    oracle selection — populated by callers that computed both, NaN when no
    ground truth was consulted.
    """

    dictionary: Dictionary
    kept_indices: tuple
    oracle_overlap: float = float("nan")

    def __post_init__(self):
        idx = tuple(int(i) for i in self.kept_indices)
        if len(set(idx)) != len(idx):
            raise ValueError("kept_indices must be distinct")
        if len(idx) != self.dictionary.p:
            raise ValueError("kept_indices length must match the pruned size")
        object.__setattr__(self, "kept_indices", idx)


def _take(report: TrainReport, keep: np.ndarray, overlap: float) -> DistillResult:
    keep = np.sort(np.asarray(keep, dtype=np.intp))
    return DistillResult(
        Dictionary(report.dictionary.atoms[:, keep]), tuple(keep), overlap
    )


def prune_by_usage(
    report: TrainReport, p_target: int, usage: np.ndarray | None = None
) -> DistillResult:
    """Keep the ``p_target`` most-used atoms (ties to the lower index).

    Ranks by ``report.usage`` unless an alternative count vector is passed —
    e.g. one-atom-budget counts from :func:`overdict.learning.usage_counts`,
    the regime the selection guarantee analyzes.
    """
    p = report.dictionary.p
    if not (1 <= p_target <= p):
        raise ValueError(f"p_target must satisfy 1 <= p_target <= p'={p}, got {p_target}")
    counts = report.usage if usage is None else np.asarray(usage)
    if counts.shape != (p,):
        raise ValueError(f"usage must have shape ({p},), got {counts.shape}")
    # Stable sort on negated counts: equal counts keep index order.
    order = np.argsort(-counts, kind="stable")
    return _take(report, order[:p_target], float("nan"))


def oracle_prune(report: TrainReport, D0: Dictionary, p_target: int) -> DistillResult:
    """Keep the atoms nearest the ground truth (diagnostic only).

    True atoms are visited in ascending order of their best sign-invariant
    distance into the estimate; each claims its nearest not-yet-taken
    estimated atom.  If that yields fewer than ``p_target`` atoms, the rest
    are filled by usage.
    """
    p = report.dictionary.p
    if not (1 <= p_target <= p):
        raise ValueError(f"p_target must satisfy 1 <= p_target <= p'={p}, got {p_target}")
    if D0.d != report.dictionary.d:
        raise ValueError("ground truth and estimate have different row counts")
    g = np.abs(D0.atoms.T @ report.dictionary.atoms)  # (p0, p')
    best = 2.0 - 2.0 * np.minimum(g.max(axis=1), 1.0)
    taken: list[int] = []
    taken_mask = np.zeros(p, dtype=bool)
    for i in np.argsort(best, kind="stable"):
        if len(taken) == p_target:
            break
        cand = np.where(taken_mask, -1.0, g[i])
        j = int(np.argmax(cand))
        if cand[j] < 0:
            break
        taken.append(j)
        taken_mask[j] = True
    if len(taken) < p_target:
        order = np.argsort(-report.usage, kind="stable")
        for j in order:
            if len(taken) == p_target:
                break
            if not taken_mask[j]:
                taken.append(int(j))
                taken_mask[j] = True
    return _take(report, np.array(taken, dtype=np.intp), float("nan"))


def selection_overlap(a: DistillResult, b: DistillResult) -> float:
    """Fraction of ``a``'s kept indices also kept by ``b``."""
    sa, sb = set(a.kept_indices), set(b.kept_indices)
    if not sa:
        return 0.0
    return len(sa & sb) / len(sa)


def fine_tune(result: DistillResult, samples, coder, sweeps: int, seed: int = 0) -> DistillResult:
    """Optional ablation: a few batch-update sweeps on the pruned dictionary.

    Off by default everywhere — pruning alone is the intended pipeline; this
    exists only so the no-re-training choice can be measured against the
    alternative.
    """
    from .learning import TrainConfig, ksvd_train

    if sweeps < 1:
        return result
    cfg = TrainConfig(
        p_prime=result.dictionary.p, iterations=sweeps, coder=coder, seed=seed
    )
    report = ksvd_train(samples, cfg, initial=result.dictionary)
    return DistillResult(report.dictionary, result.kept_indices, result.oracle_overlap)


def save_distill_result(result: DistillResult, out_dir: str | os.PathLike, stem: str) -> None:
    """Write ``<stem>_dictionary.mtx`` and ``<stem>_kept.csv``."""
    out = os.fspath(out_dir)
    save_matrix(os.path.join(out, f"{stem}_dictionary.mtx"), result.dictionary.atoms)
    lines = ["kept_index"] + [str(i) for i in result.kept_indices]
    with open(os.path.join(out, f"{stem}_kept.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
