"""Recovery, coherence, and bound diagnostics for dictionary estimates.

The central quantity is the cross-size recovery distance: the average over
true atoms of the squared distance to the nearest estimated atom up to sign.
It is complemented by the classical signed-permutation distance (exact
assignment), coherence statistics, a Monte-Carlo sandwich check relating the
distance to one-atom/k-atom coding risks, and the sparsity threshold under
which max-correlation atom selection provably stays inside the block of
near-ground-truth atoms.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .coding import LossSpec, _loss_f1_cols, _omp_arrays, empirical_risk
from .model import Dictionary, GenerativeModel, SampleSet, sample_batch
from .mtx import format_float

__all__ = [
    "BoundReport",
    "AtomDiagnostics",
    "dict_distance",
    "legacy_distance",
    "mutual_coherence",
    "cross_nu",
    "cross_coherence",
    "zeta_k",
    "lemma1_check",
    "theorem2_threshold",
    "atom_diagnostics",
    "generalization_gap",
    "min_usage_statistic",
    "write_bound_reports",
    "write_atom_diagnostics",
]

# Squared distances below this count as an exact atom match; the similarity
# score is capped at -log of it.
_EXACT_MATCH_SQ = 1e-18


@dataclass(frozen=True)
class BoundReport:
    """All bound-related quantities for one (true, estimated) dictionary pair.

    ``lower``/``upper`` sandwich the recovery distance: ``(2/k) * risk_fk``
    and ``(4/k) * risk_f1 - (4/k) * zeta * (k-1)``.  ``risk_fk`` is estimated
    with the greedy coder, which can only overestimate the true k-sparse
    infimum, so the lower bound is checked conservatively.  ``gen_gap`` is
    test-minus-train risk when both sets are supplied and NaN when the report
    comes from a pure Monte-Carlo check with no train/test split.
    """

    dist: float
    risk_f1: float
    risk_fk: float
    mu0: float
    nu: float
    mu_cross: float
    zeta: float
    lower: float
    upper: float
    gen_gap: float
    se_f1: float
    se_fk: float
    k: int
    n_mc: int


@dataclass(frozen=True)
class AtomDiagnostics:
    """Nearest true atom, sign-optimal log similarity, and usage for one atom."""

    nearest_true_index: int
    similarity: float
    usage: int
    capped: bool = False


def _abs_gram(D0: Dictionary, Dhat: Dictionary) -> np.ndarray:
    if D0.d != Dhat.d:
        raise ValueError(f"row counts differ: {D0.d} vs {Dhat.d}")
    return np.abs(D0.atoms.T @ Dhat.atoms)


def dict_distance(D0: Dictionary, Dhat: Dictionary) -> float:
    """Average sign-optimal squared distance from each true atom to its
    nearest estimated atom: ``(1/p) sum_i min_{j,c} ||D0_i - c Dhat_j||^2``.

    Extra atoms in ``Dhat`` can only lower the value, which is what makes
    the measure meaningful for estimates of a different size than ``D0``.
    """
    g = _abs_gram(D0, Dhat)
    best = np.minimum(g.max(axis=1), 1.0)
    return float(np.mean(2.0 - 2.0 * best))


def legacy_distance(D0: Dictionary, Dhat: Dictionary) -> float:
    """Minimum of ``||D0 - Dhat P||_F^2`` over signed permutations ``P``.

    Solved exactly as an assignment problem on the pairwise sign-optimal
    squared distances; requires equal shapes.
    """
    if (D0.d, D0.p) != (Dhat.d, Dhat.p):
        raise ValueError(
            f"shape mismatch: {D0.d}x{D0.p} vs {Dhat.d}x{Dhat.p}"
        )
    g = np.minimum(_abs_gram(D0, Dhat), 1.0)
    cost = 2.0 - 2.0 * g
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum())


def mutual_coherence(D: Dictionary) -> float:
    """Largest absolute inner product between two distinct atoms."""
    if D.p < 2:
        warnings.warn("mutual_coherence of a single-atom dictionary is 0 by convention")
        return 0.0
    g = np.abs(D.atoms.T @ D.atoms)
    np.fill_diagonal(g, 0.0)
    return float(min(g.max(), 1.0))


def cross_nu(Dhat: Dictionary, D0: Dictionary) -> float:
    """Coherence between estimated and true atoms, excluding each estimated
    atom's nearest true atom (nearest up to sign, ties to the lowest index)."""
    if Dhat.d != D0.d:
        raise ValueError(f"row counts differ: {Dhat.d} vs {D0.d}")
    if D0.p < 2:
        warnings.warn("cross_nu with a single true atom is 0 by convention")
        return 0.0
    g = np.abs(D0.atoms.T @ Dhat.atoms)  # (p, p')
    nearest = np.argmax(g, axis=0)
    g = g.copy()
    g[nearest, np.arange(g.shape[1])] = -1.0
    return float(min(g.max(), 1.0))


def cross_coherence(D0: Dictionary, A: Dictionary) -> float:
    """Largest absolute inner product between any true atom and any atom of ``A``."""
    return float(min(_abs_gram(D0, A).max(), 1.0))


def zeta_k(mu0: float, nu: float, k: int) -> float:
    """``max(0, 1 - (k-2) mu0 - 2 nu^2)`` — the slack term that tightens the
    distance upper bound; the bound multiplies it by ``k - 1``, so it is
    inert at ``k = 1``."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return max(0.0, 1.0 - (k - 2) * float(mu0) - 2.0 * float(nu) ** 2)


def lemma1_check(
    D0: Dictionary,
    Dhat: Dictionary,
    k: int,
    n_mc: int = 100_000,
    seed: int = 0,
) -> BoundReport:
    """Monte-Carlo estimate of the distance sandwich for one dictionary pair.

    Draws ``n_mc`` noiseless k-sparse samples from ``D0``, estimates the
    one-atom risk exactly (full scan) and the k-atom risk greedily, and fills
    every bound quantity.  No inequality is asserted here — callers (the test
    suite) decide what to check and at what tolerance.
    """
    if not (1 <= k <= D0.d):
        raise ValueError(f"k must satisfy 1 <= k <= d={D0.d}, got {k}")
    if n_mc < 1:
        raise ValueError(f"n_mc must be >= 1, got {n_mc}")
    model = GenerativeModel(D0, k)
    X = sample_batch(model, n_mc, seed, keep_codes=False).signals
    f1 = _loss_f1_cols(X, Dhat.atoms)
    if k == 1:
        fk = f1
    else:
        fk = _omp_arrays(X, Dhat.atoms, k).residual_sq
    risk_f1 = float(f1.mean())
    risk_fk = float(fk.mean())
    se_f1 = float(f1.std(ddof=1) / np.sqrt(n_mc)) if n_mc > 1 else float("inf")
    se_fk = float(fk.std(ddof=1) / np.sqrt(n_mc)) if n_mc > 1 else float("inf")
    mu0 = mutual_coherence(D0) if D0.p >= 2 else 0.0
    nu = cross_nu(Dhat, D0) if D0.p >= 2 else 0.0
    zeta = zeta_k(mu0, nu, k)
    return BoundReport(
        dist=dict_distance(D0, Dhat),
        risk_f1=risk_f1,
        risk_fk=risk_fk,
        mu0=mu0,
        nu=nu,
        mu_cross=cross_coherence(D0, Dhat),
        zeta=zeta,
        lower=(2.0 / k) * risk_fk,
        upper=(4.0 / k) * risk_f1 - (4.0 / k) * zeta * (k - 1),
        gen_gap=float("nan"),
        se_f1=se_f1,
        se_fk=se_fk,
        k=k,
        n_mc=n_mc,
    )


def theorem2_threshold(eps: float, mu0: float, mu_cross: float) -> float:
    """Sparsity level below which max-correlation selection stays within the
    near-ground-truth block: ``(1 - eps/2 + sqrt(eps) + mu0) /
    (mu0 + sqrt(eps) + mu_cross)``."""
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    for name, v in (("mu0", mu0), ("mu_cross", mu_cross)):
        if not (0.0 <= v <= 1.0):
            raise ValueError(f"{name} must lie in [0, 1], got {v}")
    root = np.sqrt(eps)
    denom = mu0 + root + mu_cross
    if denom <= 0.0:
        warnings.warn("threshold denominator is zero; returning +inf")
        return float("inf")
    return float((1.0 - eps / 2.0 + root + mu0) / denom)


def atom_diagnostics(Dhat: Dictionary, D0: Dictionary, usage) -> list:
    """Per estimated atom: nearest true atom (up to sign, lowest-index ties),
    similarity ``-log ||Dhat_j - c D0_i||^2``, and its usage count.

    Similarity is capped at ``-log(1e-18)`` for exact matches, with the
    ``capped`` flag set.
    """
    usage = np.asarray(usage)
    if usage.shape != (Dhat.p,):
        raise ValueError(f"usage must have length p'={Dhat.p}, got {usage.shape}")
    g = _abs_gram(D0, Dhat)  # (p, p')
    nearest = np.argmax(g, axis=0)
    best = np.minimum(g[nearest, np.arange(Dhat.p)], 1.0)
    dist_sq = np.maximum(2.0 - 2.0 * best, 0.0)
    out = []
    for j in range(Dhat.p):
        capped = bool(dist_sq[j] < _EXACT_MATCH_SQ)
        sim = -np.log(_EXACT_MATCH_SQ) if capped else -np.log(dist_sq[j])
        out.append(
            AtomDiagnostics(int(nearest[j]), float(sim), int(usage[j]), capped)
        )
    return out


def generalization_gap(
    D: Dictionary, train: SampleSet, test: SampleSet, spec: LossSpec
) -> float:
    """Held-out minus training risk of ``D`` under the given loss."""
    return empirical_risk(test, D, spec) - empirical_risk(train, D, spec)


def min_usage_statistic(report) -> int:
    """Smallest per-atom usage count of a training report — the statistic
    that collapses once the learned dictionary outgrows the true one."""
    return int(np.min(report.usage))


_BOUND_COLUMNS = (
    "k", "n_mc", "dist", "risk_f1", "se_f1", "risk_fk", "se_fk",
    "mu0", "nu", "mu_cross", "zeta", "lower", "upper", "gen_gap",
)


def write_bound_reports(path: str | os.PathLike, reports) -> None:
    """CSV dump of bound reports, one row each, fixed column order."""
    lines = [",".join(_BOUND_COLUMNS)]
    for r in reports:
        row = [str(r.k), str(r.n_mc)] + [
            format_float(getattr(r, c)) for c in _BOUND_COLUMNS[2:]
        ]
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_atom_diagnostics(path: str | os.PathLike, diags) -> None:
    """CSV dump: ``atom_index,nearest_true_index,similarity,usage,capped``."""
    lines = ["atom_index,nearest_true_index,similarity,usage,capped"]
    for j, a in enumerate(diags):
        lines.append(
            f"{j},{a.nearest_true_index},{format_float(a.similarity)},"
            f"{a.usage},{int(a.capped)}"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
