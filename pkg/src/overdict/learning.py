"""Dictionary learning trainers.

Two trainers are provided, both deterministic given ``(samples, config)``:

* :func:`odl_train` — online (mini-batch) learning.  Each iteration codes a
  random mini-batch with the configured coder, folds it into running
  sufficient statistics ``A += gamma gamma^T`` and ``B += x gamma^T``, and
  then sweeps the dictionary column by column, setting
  ``u_j = d_j + (B_j - D A_j) / A_jj`` and renormalizing.
* :func:`ksvd_train` — batch learning.  Each sweep codes every sample
  greedily, then revisits atoms in index order and replaces each (atom,
  coefficient row) pair with the leading singular pair of the residual
  restricted to the samples that use the atom.

Atoms that go unused long enough are re-seeded from the currently
worst-reconstructed sample and flagged in the report status.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass

import numpy as np

from .coding import (
    FLAG_MAX_ITER,
    L0Constrained,
    L1Penalized,
    LossSpec,
    _lasso_arrays,
    _lipschitz,
    _loss_f1_cols,
    _omp_arrays,
)
from .model import Dictionary, SampleSet
from .mtx import format_float, save_matrix

__all__ = [
    "InitScheme",
    "TrainConfig",
    "TrainReport",
    "init_dictionary",
    "odl_train",
    "ksvd_train",
    "usage_counts",
    "save_train_report",
]

_STREAM_INIT = 0x1217
_STREAM_BATCHES = 0x0D1

# Loss-trace cadence: every this many iterations for the online trainer
# (K-SVD checkpoints once per sweep).
_CHECKPOINT_EVERY = 50

FLAG_INIT_FALLBACK = "init_fallback_gaussian"
FLAG_ZERO_BATCH = "zero_batch_skipped"
FLAG_DEAD_ATOM = "dead_atom_replaced"
FLAG_RECODE_INCREASE = "recoding_increased_loss"
FLAG_CODER_MAX_ITER = "coder_max_iter"


class InitScheme(enum.Enum):
    """How the estimate is initialized before training."""

    DATA_SAMPLES = "data_samples"
    GAUSSIAN_COLUMNS = "gaussian_columns"


@dataclass(frozen=True)
class TrainConfig:
    p_prime: int
    iterations: int
    coder: LossSpec
    batch_size: int = 32
    init: InitScheme = InitScheme.DATA_SAMPLES
    dead_atom_threshold: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.p_prime < 1:
            raise ValueError(f"p_prime must be >= 1, got {self.p_prime}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.dead_atom_threshold < 1:
            raise ValueError(
                f"dead_atom_threshold must be >= 1, got {self.dead_atom_threshold}"
            )
        if not isinstance(self.coder, (L0Constrained, L1Penalized)):
            raise TypeError(f"coder must be a loss spec, got {self.coder!r}")
        if not isinstance(self.init, InitScheme):
            object.__setattr__(self, "init", InitScheme(self.init))


@dataclass(frozen=True)
class TrainReport:
    """Outcome of a training run.

    ``usage[j]`` counts training samples whose final code (one full coding
    pass after training) includes atom ``j``.  ``loss_trace`` holds the
    full-data training loss at each entry of ``checkpoints`` (iteration
    numbers for the online trainer, sweep numbers for K-SVD; K-SVD values
    are measured after the dictionary update).  ``coding_loss_trace`` is
    K-SVD's loss right after each sweep's coding step, kept separately
    because only update-vs-preceding-coding monotonicity is exact.
    """

    dictionary: Dictionary
    usage: np.ndarray
    loss_trace: np.ndarray
    status: tuple
    checkpoints: tuple = ()
    coding_loss_trace: tuple = ()

    def __post_init__(self):
        u = np.asarray(self.usage, dtype=np.int64)
        lt = np.asarray(self.loss_trace, dtype=np.float64)
        if u.ndim != 1 or u.shape[0] != self.dictionary.p:
            raise ValueError("usage must be a vector of length p'")
        if np.any(u < 0):
            raise ValueError("usage counts must be nonnegative")
        u.setflags(write=False)
        lt.setflags(write=False)
        object.__setattr__(self, "usage", u)
        object.__setattr__(self, "loss_trace", lt)
        object.__setattr__(self, "status", tuple(self.status))


def _init_arrays(samples: SampleSet, cfg: TrainConfig):
    """Initial atom matrix plus any status flags (not yet a Dictionary)."""
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, _STREAM_INIT)))
    d, n = samples.signals.shape
    flags = []
    scheme = cfg.init
    if scheme is InitScheme.DATA_SAMPLES and n < cfg.p_prime:
        flags.append(FLAG_INIT_FALLBACK)
        scheme = InitScheme.GAUSSIAN_COLUMNS
    if scheme is InitScheme.DATA_SAMPLES:
        cols = rng.choice(n, size=cfg.p_prime, replace=False)
        atoms = samples.signals[:, cols].copy()
    else:
        atoms = rng.standard_normal((d, cfg.p_prime))
    norms = np.linalg.norm(atoms, axis=0)
    bad = norms < 1e-12
    while np.any(bad):
        # Zero training columns (or a measure-zero Gaussian event) cannot be
        # normalized; re-seed those atoms from fresh Gaussian draws.
        atoms[:, bad] = rng.standard_normal((d, int(bad.sum())))
        norms = np.linalg.norm(atoms, axis=0)
        bad = norms < 1e-12
    return atoms / norms, flags


def init_dictionary(samples: SampleSet, cfg: TrainConfig) -> Dictionary:
    """Starting estimate: ``p_prime`` normalized random training samples, or
    Gaussian columns (also the fallback when there are too few samples)."""
    atoms, _ = _init_arrays(samples, cfg)
    return Dictionary(atoms)


def _starting_atoms(samples: SampleSet, cfg: TrainConfig, initial):
    if initial is None:
        return _init_arrays(samples, cfg)
    if (initial.d, initial.p) != (samples.signals.shape[0], cfg.p_prime):
        raise ValueError(
            f"initial dictionary is {initial.d}x{initial.p}, "
            f"expected {samples.signals.shape[0]}x{cfg.p_prime}"
        )
    return initial.atoms.copy(), []


def _code_batch(X: np.ndarray, atoms: np.ndarray, coder: LossSpec):
    """Dense codes (p', B), per-sample residual_sq, and coder flags."""
    if isinstance(coder, L0Constrained):
        res = _omp_arrays(X, atoms, coder.s)
        return res.dense_codes(atoms.shape[1]), res.residual_sq, []
    gamma, obj, conv = _lasso_arrays(X, atoms, coder.lam, 1e-10, 10000)
    rsq = obj - coder.lam * np.abs(gamma).sum(axis=0)
    flags = [] if bool(conv.all()) else [FLAG_CODER_MAX_ITER]
    return gamma, np.maximum(rsq, 0.0), flags


def _train_loss(X: np.ndarray, atoms: np.ndarray, coder: LossSpec) -> float:
    """Full-data training objective under the coder (penalty included for l1)."""
    if isinstance(coder, L0Constrained):
        if coder.s == 1:
            return float(np.mean(_loss_f1_cols(X, atoms)))
        return float(np.mean(_omp_arrays(X, atoms, coder.s).residual_sq))
    _, obj, _ = _lasso_arrays(X, atoms, coder.lam, 1e-10, 10000)
    return float(np.mean(obj))


def usage_counts(samples: SampleSet, D: Dictionary, coder: LossSpec) -> np.ndarray:
    """Number of samples whose code under ``coder`` includes each atom.

    This is the measurement behind every usage statistic; pass
    ``L0Constrained(1)`` for the one-atom usage mode that mirrors the
    pruning analysis setting.
    """
    X = samples.signals
    if isinstance(coder, L0Constrained):
        res = _omp_arrays(X, D.atoms, coder.s)
        sel = res.supports[res.supports >= 0]
        return np.bincount(sel, minlength=D.p).astype(np.int64)
    gamma, _, _ = _lasso_arrays(X, D.atoms, coder.lam, 1e-10, 10000)
    return (np.abs(gamma) > 1e-12).sum(axis=1).astype(np.int64)


def _coder_sparsity(coder: LossSpec, d: int) -> None:
    if isinstance(coder, L0Constrained) and coder.s > d:
        raise ValueError(f"coder budget s={coder.s} exceeds signal dimension d={d}")


def odl_train(
    samples: SampleSet, cfg: TrainConfig, initial: Dictionary | None = None
) -> TrainReport:
    """Mini-batch trainer with accumulated sufficient statistics.

    Per iteration: draw a mini-batch, code it, accumulate
    ``A += gamma gamma^T`` / ``B += x gamma^T`` (no forgetting), then update
    columns in index order via ``u_j = d_j + (B_j - D A_j) / A_jj`` with
    renormalization, using each fresh column immediately.  Columns unused for
    ``dead_atom_threshold`` consecutive batches re-seed from the batch's
    worst-reconstructed sample.  The loss trace records the full-data
    training loss every 50 iterations (and at the final one).
    """
    X = samples.signals
    d, n = X.shape
    _coder_sparsity(cfg.coder, d)
    atoms, flags = _starting_atoms(samples, cfg, initial)
    flags = set(flags)
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, _STREAM_BATCHES)))
    p = cfg.p_prime
    A = np.zeros((p, p))
    B = np.zeros((d, p))
    unused_streak = np.zeros(p, dtype=np.int64)
    trace = []
    checkpoints = []

    for it in range(cfg.iterations):
        batch = rng.choice(n, size=cfg.batch_size, replace=cfg.batch_size > n)
        Xb = X[:, batch]
        gamma, rsq, coder_flags = _code_batch(Xb, atoms, cfg.coder)
        flags.update(coder_flags)
        used = np.abs(gamma).max(axis=1) > 1e-12
        if not used.any():
            flags.add(FLAG_ZERO_BATCH)
        else:
            A += gamma @ gamma.T
            B += Xb @ gamma.T
            # Column sweep on R = B - D A, kept current as columns change.
            R = B - atoms @ A
            diag = np.diag(A)
            for j in range(p):
                ajj = diag[j]
                if ajj <= 1e-12:
                    continue
                u = atoms[:, j] + R[:, j] / ajj
                norm = np.linalg.norm(u)
                if norm < 1e-12:
                    continue
                u /= norm
                delta = u - atoms[:, j]
                atoms[:, j] = u
                R -= np.outer(delta, A[j])

        unused_streak[used] = 0
        unused_streak[~used] += 1
        dead = unused_streak >= cfg.dead_atom_threshold
        if dead.any():
            resid = Xb - atoms @ gamma
            # Worst-reconstructed samples first; several dead atoms in one
            # iteration each take a distinct sample.
            order = np.argsort(-np.einsum("db,db->b", resid, resid))
            for rank, j in enumerate(np.nonzero(dead)[0]):
                worst = Xb[:, int(order[rank % order.size])]
                wn = np.linalg.norm(worst)
                if wn <= 1e-12:
                    continue
                atoms[:, j] = worst / wn
                A[j, :] = 0.0
                A[:, j] = 0.0
                B[:, j] = 0.0
                unused_streak[j] = 0
                flags.add(FLAG_DEAD_ATOM)

        if (it + 1) % _CHECKPOINT_EVERY == 0 or it + 1 == cfg.iterations:
            if not checkpoints or checkpoints[-1] != it + 1:
                checkpoints.append(it + 1)
                trace.append(_train_loss(X, atoms, cfg.coder))

    D = Dictionary(atoms)
    usage = usage_counts(samples, D, cfg.coder)
    return TrainReport(
        dictionary=D,
        usage=usage,
        loss_trace=np.array(trace),
        status=tuple(sorted(flags)),
        checkpoints=tuple(checkpoints),
    )


def ksvd_train(
    samples: SampleSet, cfg: TrainConfig, initial: Dictionary | None = None
) -> TrainReport:
    """Batch trainer alternating full greedy coding with per-atom rank-1
    updates (``cfg.iterations`` counts sweeps).

    Each atom update replaces (atom, coefficient row) with the leading
    singular pair of the residual restricted to that atom's users, which
    never increases the fit error; a rare loss increase after the *next*
    coding step is possible and flagged rather than hidden.  Atoms with no
    users re-seed from the worst-reconstructed sample.
    """
    if not isinstance(cfg.coder, L0Constrained):
        raise ValueError("this trainer requires a size-constrained coder")
    X = samples.signals
    d, n = X.shape
    _coder_sparsity(cfg.coder, d)
    atoms, flags = _starting_atoms(samples, cfg, initial)
    flags = set(flags)
    p = cfg.p_prime
    trace = []
    coding_trace = []
    checkpoints = []
    prev_update_loss = None

    for sweep in range(cfg.iterations):
        res = _omp_arrays(X, atoms, cfg.coder.s)
        gamma = res.dense_codes(p)
        coding_loss = float(np.mean(res.residual_sq))
        coding_trace.append(coding_loss)
        if prev_update_loss is not None and coding_loss > prev_update_loss + 1e-9:
            flags.add(FLAG_RECODE_INCREASE)

        E = X - atoms @ gamma
        reseeded = 0
        for j in range(p):
            users = np.nonzero(np.abs(gamma[j]) > 1e-12)[0]
            if users.size == 0:
                # E is unchanged by re-seeding a userless atom, so rank the
                # residuals once and hand successive dead atoms distinct
                # samples.
                order = np.argsort(-np.einsum("db,db->b", E, E))
                worst = X[:, int(order[reseeded % order.size])]
                reseeded += 1
                wn = np.linalg.norm(worst)
                if wn > 1e-12:
                    atoms[:, j] = worst / wn
                    flags.add(FLAG_DEAD_ATOM)
                continue
            Ej = E[:, users] + np.outer(atoms[:, j], gamma[j, users])
            U, S, Vt = np.linalg.svd(Ej, full_matrices=False)
            u = U[:, 0]
            # Fix the singular pair's sign so results don't depend on the
            # SVD backend's convention.
            lead = int(np.argmax(np.abs(u)))
            sgn = 1.0 if u[lead] >= 0 else -1.0
            u = sgn * u
            coeff = sgn * S[0] * Vt[0]
            atoms[:, j] = u
            gamma[j, users] = coeff
            E[:, users] = Ej - np.outer(u, coeff)

        update_loss = float(
            0.5 * np.mean(np.einsum("dn,dn->n", E, E))
        )
        prev_update_loss = update_loss
        trace.append(update_loss)
        checkpoints.append(sweep + 1)

    D = Dictionary(atoms)
    usage = usage_counts(samples, D, cfg.coder)
    return TrainReport(
        dictionary=D,
        usage=usage,
        loss_trace=np.array(trace),
        status=tuple(sorted(flags)),
        checkpoints=tuple(checkpoints),
        coding_loss_trace=tuple(coding_trace),
    )


def save_train_report(report: TrainReport, out_dir: str | os.PathLike, stem: str) -> None:
    """Write ``<stem>_dictionary.mtx``, ``<stem>_usage.csv`` and
    ``<stem>_loss.csv`` into ``out_dir``."""
    out = os.fspath(out_dir)
    save_matrix(os.path.join(out, f"{stem}_dictionary.mtx"), report.dictionary.atoms)
    lines = ["atom_index,count"]
    lines += [f"{j},{int(c)}" for j, c in enumerate(report.usage)]
    with open(os.path.join(out, f"{stem}_usage.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    lines = ["checkpoint,loss"]
    lines += [
        f"{c},{format_float(v)}"
        for c, v in zip(report.checkpoints, report.loss_trace)
    ]
    with open(os.path.join(out, f"{stem}_loss.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
