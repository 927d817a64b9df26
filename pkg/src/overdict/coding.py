"""Sparse coding solvers and loss evaluation.

Two solver families are provided:

* :func:`omp` — greedy atom selection for the size-constrained problem,
  with a full least-squares refit after every selection.
* :func:`lasso` — accelerated proximal gradient (soft-thresholding) for the
  l1-penalized problem, with a monotone restart rule.

Both come with batch variants that vectorize across samples; the
single-sample functions are thin wrappers around the batch code so there is
exactly one implementation of each algorithm.  The loss functional
``f_x(D) = min_gamma 1/2 ||x - D gamma||^2 + g(gamma)`` is evaluated by
:func:`loss_fs` (size-constrained g) and :func:`empirical_risk`.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .model import Dictionary, SampleSet, SparseCode
from .mtx import format_float

__all__ = [
    "CodingResult",
    "L0Constrained",
    "L1Penalized",
    "omp",
    "omp_batch",
    "lasso",
    "lasso_batch",
    "loss_fs",
    "empirical_risk",
    "save_coding_results",
]

# Gram condition estimate above which the least-squares refit degrades to a
# minimum-norm solve via column-pivoted orthogonal factorization.
_COND_LIMIT = 1e12
# A residual at or below this fraction of max(1, initial) counts as zero.
_ZERO_RESIDUAL = 1e-24

FLAG_DEGRADED_SOLVE = "degraded_solve"
FLAG_MAX_ITER = "max_iter_reached"


@dataclass(frozen=True)
class CodingResult:
    """A sparse code plus half the squared residual norm it achieves."""

    code: SparseCode
    residual_sq: float
    flags: tuple = ()


@dataclass(frozen=True)
class L0Constrained:
    """Loss with a hard support-size constraint ``||gamma||_0 <= s``."""

    s: int

    def __post_init__(self):
        if int(self.s) < 1:
            raise ValueError(f"s must be >= 1, got {self.s}")
        object.__setattr__(self, "s", int(self.s))


@dataclass(frozen=True)
class L1Penalized:
    """Loss with an l1 penalty ``lambda * ||gamma||_1``."""

    lam: float

    def __post_init__(self):
        if not (float(self.lam) > 0.0):
            raise ValueError(f"lambda must be > 0, got {self.lam}")
        object.__setattr__(self, "lam", float(self.lam))


LossSpec = L0Constrained | L1Penalized


class OmpBatch(NamedTuple):
    """Array-level result of a batched greedy coding pass.

    ``supports``/``values`` are (B, s) arrays padded with -1/0 beyond each
    sample's ``counts`` entries; supports are sorted per sample.
    ``degraded`` marks samples whose refit fell back to a minimum-norm solve.
    """

    supports: np.ndarray
    values: np.ndarray
    counts: np.ndarray
    residual_sq: np.ndarray
    degraded: np.ndarray

    def dense_codes(self, p: int) -> np.ndarray:
        """Expand to a dense (p, B) coefficient matrix."""
        B, s = self.supports.shape
        out = np.zeros((p, B))
        rows = np.repeat(np.arange(B), s)
        cols = self.supports.ravel()
        keep = cols >= 0
        out[cols[keep], rows[keep]] = self.values.ravel()[keep]
        return out


def _omp_arrays(X: np.ndarray, atoms: np.ndarray, s: int) -> OmpBatch:
    """Batched greedy coding of the columns of ``X`` against ``atoms``."""
    d, p = atoms.shape
    B = X.shape[1]
    s = min(s, p)
    sel = np.full((B, s), -1, dtype=np.intp)
    gamma = np.zeros((B, s), dtype=np.float64)
    counts = np.zeros(B, dtype=np.intp)
    degraded = np.zeros(B, dtype=bool)
    resid = X.copy()
    init_rsq = 0.5 * np.einsum("db,db->b", X, X)
    rsq = init_rsq.copy()
    zero_at = _ZERO_RESIDUAL * np.maximum(1.0, init_rsq)
    active = rsq > zero_at
    taken = np.zeros((B, p), dtype=bool)

    for t in range(s):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        corr = atoms.T @ resid[:, idx]  # (p, |idx|)
        abs_corr = np.abs(corr)
        abs_corr[taken[idx].T] = -1.0
        # argmax returns the first maximizer, i.e. ties go to the lowest index
        j = np.argmax(abs_corr, axis=0)
        dead = abs_corr[j, np.arange(idx.size)] <= 0.0
        if np.any(dead):
            active[idx[dead]] = False
            idx = idx[~dead]
            if idx.size == 0:
                break
            j = j[~dead]
        sel[idx, t] = j
        taken[idx, j] = True
        counts[idx] = t + 1

        # Least-squares refit on each sample's selected atoms via the normal
        # equations with a Cholesky factorization; ill-conditioned Grams fall
        # back to a pivoted-orthogonal minimum-norm solve sample by sample.
        sub = atoms.T[sel[idx, : t + 1]]  # (m, t+1, d)
        G = sub @ sub.transpose(0, 2, 1)
        rhs = np.einsum("mtd,dm->mt", sub, X[:, idx])
        evals = np.linalg.eigvalsh(G)
        bad = (evals[:, 0] <= 0.0) | (
            evals[:, -1] > _COND_LIMIT * np.maximum(evals[:, 0], 0.0)
        )
        if np.any(bad):
            G = G.copy()
            G[bad] = np.eye(t + 1)
        L = np.linalg.cholesky(G)
        sol = np.linalg.solve(
            np.swapaxes(L, 1, 2), np.linalg.solve(L, rhs[..., None])
        )[..., 0]
        for m in np.nonzero(bad)[0]:
            b = idx[m]
            sol[m] = scipy.linalg.lstsq(
                sub[m].T, X[:, b], lapack_driver="gelsy"
            )[0]
            degraded[b] = True
        gamma[idx, : t + 1] = sol
        recon = np.einsum("mtd,mt->dm", sub, sol)
        resid[:, idx] = X[:, idx] - recon
        rsq[idx] = 0.5 * np.einsum("dm,dm->m", resid[:, idx], resid[:, idx])
        active[idx] = rsq[idx] > zero_at[idx]

    # Sort each support (selection order -> index order).
    order = np.argsort(np.where(sel < 0, np.iinfo(np.intp).max, sel), axis=1)
    rows = np.arange(B)[:, None]
    supports = sel[rows, order]
    values = gamma[rows, order]
    rsq = np.maximum(rsq, 0.0)
    return OmpBatch(supports, values, counts, rsq, degraded)


def _result_from_row(support_row, value_row, count, rsq, degraded) -> CodingResult:
    kk = int(count)
    code = SparseCode(support_row[:kk].copy(), value_row[:kk].copy())
    flags = (FLAG_DEGRADED_SOLVE,) if degraded else ()
    return CodingResult(code, float(rsq), flags)


def omp(x: np.ndarray, D: Dictionary, s: int) -> CodingResult:
    """Greedy size-``s`` coding of ``x``: pick the atom most correlated with
    the residual, refit by least squares, repeat.

    The support has exactly ``s`` atoms unless the residual reaches zero (or
    every remaining correlation vanishes) earlier.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != D.d:
        raise ValueError(f"x has length {x.shape[0]}, dictionary has d={D.d}")
    if not (1 <= s <= D.d):
        raise ValueError(f"s must satisfy 1 <= s <= d={D.d}, got {s}")
    sup, val, cnt, rsq, deg = _omp_arrays(x[:, None], D.atoms, s)
    return _result_from_row(sup[0], val[0], cnt[0], rsq[0], deg[0])


def omp_batch(X: np.ndarray, D: Dictionary, s: int) -> list:
    """Code every column of ``X``; returns one :class:`CodingResult` each."""
    X = np.asarray(X, dtype=np.float64)
    sup, val, cnt, rsq, deg = _omp_arrays(X, D.atoms, s)
    return [
        _result_from_row(sup[i], val[i], cnt[i], rsq[i], deg[i])
        for i in range(X.shape[1])
    ]


def _lipschitz(atoms: np.ndarray, iters: int = 50) -> float:
    """Power-iteration estimate of the largest eigenvalue of ``atoms.T @ atoms``."""
    p = atoms.shape[1]
    v = np.full(p, 1.0 / np.sqrt(p))
    lam = 1.0
    for _ in range(iters):
        w = atoms.T @ (atoms @ v)
        lam = float(np.linalg.norm(w))
        if lam <= 0.0:
            return 1.0
        v = w / lam
    return lam


def _soft(z: np.ndarray, t: float) -> np.ndarray:
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def _lasso_arrays(
    X: np.ndarray,
    atoms: np.ndarray,
    lam: float,
    tol: float,
    max_iter: int,
):
    """Batched accelerated proximal gradient for the columns of ``X``.

    Momentum steps that would increase a sample's objective are rejected and
    that sample's momentum restarts, so per-sample objectives never increase.
    A sample freezes the moment its relative objective decrease falls below
    ``tol``, which keeps batch results identical to solving each column on
    its own.  Returns ``(gamma (p,B), objective (B,), converged (B,))``.
    """
    p = atoms.shape[1]
    B = X.shape[1]
    step = 1.0 / _lipschitz(atoms)
    gram = atoms.T @ atoms
    dtx = atoms.T @ X
    half_xx = 0.5 * np.einsum("db,db->b", X, X)

    def objective_cols(g: np.ndarray, cols: np.ndarray) -> np.ndarray:
        return (
            half_xx[cols]
            - np.einsum("pm,pm->m", dtx[:, cols], g)
            + 0.5 * np.einsum("pm,pm->m", g, gram @ g)
            + lam * np.abs(g).sum(axis=0)
        )

    gamma = np.zeros((p, B))
    y = np.zeros((p, B))
    tm = np.ones(B)
    obj = half_xx.copy()
    slack = 1e-12 * np.maximum(1.0, obj)
    running = np.ones(B, dtype=bool)
    for _ in range(max_iter):
        idx = np.nonzero(running)[0]
        if idx.size == 0:
            break
        grad = gram @ y[:, idx] - dtx[:, idx]
        z = _soft(y[:, idx] - step * grad, step * lam)
        obj_z = objective_cols(z, idx)
        prev = obj[idx]
        accept = obj_z <= prev + slack[idx]

        t_prev = tm[idx]
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_prev * t_prev))
        y_new = z + ((t_prev - 1.0) / t_next)[None, :] * (z - gamma[:, idx])
        reject = ~accept
        if np.any(reject):
            old = gamma[:, idx[reject]]
            z[:, reject] = old
            obj_z[reject] = prev[reject]
            y_new[:, reject] = old
            t_next = np.where(reject, 1.0, t_next)

        done = accept & (prev - obj_z < tol * np.maximum(prev, 1e-30))
        gamma[:, idx] = z
        y[:, idx] = y_new
        tm[idx] = t_next
        obj[idx] = obj_z
        running[idx[done]] = False
    return gamma, obj, ~running


def lasso(
    x: np.ndarray,
    D: Dictionary,
    lam: float,
    tol: float = 1e-10,
    max_iter: int = 10000,
) -> CodingResult:
    """Approximately minimize ``1/2 ||x - D g||^2 + lam * ||g||_1``.

    Iterates until the relative objective decrease drops below ``tol`` or
    ``max_iter`` is hit (the latter sets a status flag).  Only entries with
    magnitude above 1e-12 are reported in the code.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != D.d:
        raise ValueError(f"x has length {x.shape[0]}, dictionary has d={D.d}")
    if not (lam > 0.0):
        raise ValueError(f"lambda must be > 0, got {lam}")
    if not (tol > 0.0) or max_iter < 1:
        raise ValueError("tol must be > 0 and max_iter >= 1")
    g, _, conv = _lasso_arrays(x[:, None], D.atoms, lam, tol, max_iter)
    g = g[:, 0]
    support = np.nonzero(np.abs(g) > 1e-12)[0]
    code = SparseCode(support, g[support])
    r = x - D.atoms[:, support] @ g[support] if support.size else x
    flags = () if conv[0] else (FLAG_MAX_ITER,)
    return CodingResult(code, float(0.5 * np.dot(r, r)), flags)


def lasso_batch(
    X: np.ndarray,
    D: Dictionary,
    lam: float,
    tol: float = 1e-10,
    max_iter: int = 10000,
) -> list:
    """Batched :func:`lasso` over the columns of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    g, _, conv = _lasso_arrays(X, D.atoms, lam, tol, max_iter)
    out = []
    for i in range(X.shape[1]):
        gi = g[:, i]
        support = np.nonzero(np.abs(gi) > 1e-12)[0]
        code = SparseCode(support, gi[support])
        r = X[:, i] - D.atoms[:, support] @ gi[support] if support.size else X[:, i]
        flags = () if conv[i] else (FLAG_MAX_ITER,)
        out.append(CodingResult(code, float(0.5 * np.dot(r, r)), flags))
    return out


def _loss_f1_cols(X: np.ndarray, atoms: np.ndarray) -> np.ndarray:
    """Exact one-atom loss for every column: ``1/2 (||x||^2 - max_j (D_j.x)^2)``."""
    c = atoms.T @ X
    best = np.max(c * c, axis=0)
    xx = np.einsum("db,db->b", X, X)
    return 0.5 * np.maximum(xx - best, 0.0)


def loss_fs(x: np.ndarray, D: Dictionary, s: int) -> float:
    """Size-constrained loss ``min_{||g||_0 <= s} 1/2 ||x - D g||^2``.

    For ``s == 1`` this is exact (full scan over atoms, using the closed-form
    single-atom projection).  For ``s > 1`` the value is the greedy
    :func:`omp` residual, an upper bound on the true infimum.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if not (1 <= s <= D.d):
        raise ValueError(f"s must satisfy 1 <= s <= d={D.d}, got {s}")
    if s == 1:
        return float(_loss_f1_cols(x[:, None], D.atoms)[0])
    return omp(x, D, s).residual_sq


def empirical_risk(samples: SampleSet, D: Dictionary, spec: LossSpec) -> float:
    """Mean loss ``(1/n) sum_i f_{x_i}(D)`` under the given loss spec."""
    X = samples.signals
    if X.shape[1] < 1:
        raise ValueError("empty sample set")
    if X.shape[0] != D.d:
        raise ValueError(f"samples have d={X.shape[0]}, dictionary d={D.d}")
    if isinstance(spec, L0Constrained):
        s = spec.s
        if s > D.d:
            raise ValueError(f"s={s} exceeds signal dimension d={D.d}")
        if s == 1:
            return float(np.mean(_loss_f1_cols(X, D.atoms)))
        return float(np.mean(_omp_arrays(X, D.atoms, s).residual_sq))
    if isinstance(spec, L1Penalized):
        g, obj, _ = _lasso_arrays(X, D.atoms, spec.lam, 1e-10, 10000)
        return float(np.mean(obj))
    raise TypeError(f"unsupported loss spec {spec!r}")


def save_coding_results(results: list, path: str | os.PathLike) -> None:
    """Write one CSV row per sample: index, support, values, residual.

    Support/value columns are padded to the widest code in the batch
    (missing entries: index -1, value 0) so every row has the same shape.
    """
    width = max((len(res.code.support) for res in results), default=0)
    header = (
        ["sample_index"]
        + [f"support_{i}" for i in range(width)]
        + [f"value_{i}" for i in range(width)]
        + ["residual_sq"]
    )
    lines = [",".join(header)]
    for idx, res in enumerate(results):
        sup = list(res.code.support) + [-1] * (width - len(res.code.support))
        vals = list(res.code.values) + [0.0] * (width - len(res.code.values))
        lines.append(
            ",".join(
                [str(idx)]
                + [str(int(j)) for j in sup]
                + [format_float(v) for v in vals]
                + [format_float(res.residual_sq)]
            )
        )
    with open(os.fspath(path), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
