"""Ground-truth model representation and synthetic data generation.

A signal is produced as ``x = D0 @ gamma + v`` where ``D0`` is a
column-normalized dictionary, ``gamma`` is a k-sparse coefficient vector
whose support is uniform over all size-k subsets of atoms, and ``v`` is
optional isotropic Gaussian noise.  Everything here is deterministic given
the integer seeds supplied by the caller.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CoeffDist",
    "Dictionary",
    "SparseCode",
    "GenerativeModel",
    "SampleSet",
    "gen_dictionary",
    "sample_code",
    "sample_batch",
]

# Stream tags keep the random streams of distinct operations disjoint even
# when the caller reuses one integer seed across them.
_STREAM_DICT = 0xD1C7
_STREAM_BATCH = 0xBA7C


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dictionary:
    """A d × p matrix whose columns (atoms) have unit Euclidean norm."""

    atoms: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.atoms, dtype=np.float64)
        if a.ndim != 2:
            raise ValueError(f"atoms must be 2-D, got ndim={a.ndim}")
        d, p = a.shape
        if d < 1 or p < 1:
            raise ValueError(f"dictionary dimensions must be >= 1, got {d}x{p}")
        if not np.all(np.isfinite(a)):
            raise ValueError("dictionary contains non-finite entries")
        norms = np.linalg.norm(a, axis=0)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            worst = float(np.max(np.abs(norms - 1.0)))
            raise ValueError(f"columns must be unit-norm (worst deviation {worst:.3e})")
        object.__setattr__(self, "atoms", _readonly(a.copy()))

    @property
    def d(self) -> int:
        return self.atoms.shape[0]

    @property
    def p(self) -> int:
        return self.atoms.shape[1]

    def subset(self, indices) -> "Dictionary":
        """Dictionary restricted to the given atom indices (order kept)."""
        idx = np.asarray(indices, dtype=np.intp)
        return Dictionary(self.atoms[:, idx])


@dataclass(frozen=True)
class SparseCode:
    """Support indices (strictly increasing) and their coefficient values."""

    support: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.support, dtype=np.intp).ravel()
        v = np.asarray(self.values, dtype=np.float64).ravel()
        if s.shape[0] != v.shape[0]:
            raise ValueError(
                f"support and values disagree in length: {s.shape[0]} vs {v.shape[0]}"
            )
        if s.shape[0] > 0:
            if np.any(s < 0):
                raise ValueError("support indices must be nonnegative")
            if np.any(np.diff(s) <= 0):
                raise ValueError("support indices must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ValueError("code values must be finite")
        object.__setattr__(self, "support", _readonly(s))
        object.__setattr__(self, "values", _readonly(v))

    def __len__(self) -> int:
        return int(self.support.shape[0])

    def to_dense(self, p: int) -> np.ndarray:
        """Expand to a length-p dense vector."""
        if len(self) and int(self.support[-1]) >= p:
            raise ValueError(f"support index {int(self.support[-1])} out of range for p={p}")
        out = np.zeros(p, dtype=np.float64)
        out[self.support] = self.values
        return out


class CoeffDist(enum.Enum):
    """Distribution of the nonzero coefficients (mean zero, unit variance)."""

    STANDARD_GAUSSIAN = "standard_gaussian"
    RADEMACHER = "rademacher"


@dataclass(frozen=True)
class GenerativeModel:
    """Ground-truth dictionary plus the sampling law for signals."""

    dictionary: Dictionary
    sparsity: int
    coeff_dist: CoeffDist = CoeffDist.STANDARD_GAUSSIAN
    noise_sigma: float = 0.0

    def __post_init__(self):
        k = int(self.sparsity)
        if not (1 <= k <= self.dictionary.d):
            raise ValueError(
                f"sparsity must satisfy 1 <= k <= d={self.dictionary.d}, got {k}"
            )
        if k > self.dictionary.p:
            raise ValueError(f"sparsity {k} exceeds atom count p={self.dictionary.p}")
        if not (float(self.noise_sigma) >= 0.0):
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        object.__setattr__(self, "sparsity", k)
        object.__setattr__(self, "noise_sigma", float(self.noise_sigma))
        if not isinstance(self.coeff_dist, CoeffDist):
            object.__setattr__(self, "coeff_dist", CoeffDist(self.coeff_dist))


@dataclass(frozen=True)
class SampleSet:
    """A batch of signals (columns) with optional ground-truth codes."""

    signals: np.ndarray
    codes: tuple = field(default=None)

    def __post_init__(self):
        x = np.asarray(self.signals, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError(f"signals must be 2-D (d x n), got ndim={x.ndim}")
        if not np.all(np.isfinite(x)):
            raise ValueError("signals contain non-finite entries")
        object.__setattr__(self, "signals", _readonly(x.copy()))
        if self.codes is not None:
            codes = tuple(self.codes)
            if len(codes) != x.shape[1]:
                raise ValueError(
                    f"got {len(codes)} codes for {x.shape[1]} signals"
                )
            object.__setattr__(self, "codes", codes)

    @property
    def d(self) -> int:
        return self.signals.shape[0]

    @property
    def n(self) -> int:
        return self.signals.shape[1]


def gen_dictionary(d: int, p: int, seed: int) -> Dictionary:
    """Draw a dictionary with i.i.d. standard-normal atoms scaled to unit norm.

    Parameters
    ----------
    d : int
        Signal dimension (rows), at least 1.
    p : int
        Number of atoms (columns), at least 1.
    seed : int
        Determines the draw completely; equal seeds give bit-identical output.
    """
    if d < 1 or p < 1:
        raise ValueError(f"dimensions must be >= 1, got d={d}, p={p}")
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), _STREAM_DICT)))
    atoms = rng.standard_normal((d, p))
    norms = np.linalg.norm(atoms, axis=0)
    # A zero draw has probability 0 but would break normalization; redraw.
    while np.any(norms < 1e-12):
        bad = norms < 1e-12
        atoms[:, bad] = rng.standard_normal((d, int(bad.sum())))
        norms = np.linalg.norm(atoms, axis=0)
    return Dictionary(atoms / norms)


def _draw_values(rng: np.random.Generator, shape, dist: CoeffDist) -> np.ndarray:
    if dist is CoeffDist.STANDARD_GAUSSIAN:
        return rng.standard_normal(shape)
    # Rademacher: +1 or -1 with equal probability.
    return np.where(rng.random(shape) < 0.5, -1.0, 1.0)


def sample_code(model: GenerativeModel, rng_state: np.random.Generator) -> SparseCode:
    """Draw one sparse code: uniform size-k support, i.i.d. coefficient values."""
    p = model.dictionary.p
    k = model.sparsity
    support = np.sort(rng_state.choice(p, size=k, replace=False))
    values = _draw_values(rng_state, k, model.coeff_dist)
    return SparseCode(support, values)


def _uniform_supports(u: np.ndarray, p: int, k: int) -> np.ndarray:
    """Vectorized uniform size-k subset sampling (Floyd's algorithm).

    ``u`` holds one uniform variate per (sample, step); sample i consumes
    exactly row i, so each sample's support is a pure function of its own
    slice of the random stream.
    Returns an (n, k) array of sorted support indices.
    """
    n = u.shape[0]
    chosen = np.zeros((n, p), dtype=bool)
    rows = np.arange(n)
    for step, j in enumerate(range(p - k, p)):
        t = np.minimum((u[:, step] * (j + 1)).astype(np.intp), j)
        pick = np.where(chosen[rows, t], j, t)
        chosen[rows, pick] = True
    out = np.nonzero(chosen)[1].reshape(n, k)
    return out


def sample_batch(
    model: GenerativeModel, n: int, seed: int, keep_codes: bool = True
) -> SampleSet:
    """Draw ``n`` samples ``x_i = D0 @ gamma_i + v_i`` deterministically.

    Each sample's randomness occupies a fixed slice of the seeded stream, so
    the batch can be regenerated (or generated per-column in parallel) with
    output identical to a serial pass.  Ground-truth codes are stored
    pre-noise; pass ``keep_codes=False`` to skip materializing them for very
    large Monte-Carlo batches.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    D0 = model.dictionary.atoms
    d, p = D0.shape
    k = model.sparsity
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), _STREAM_BATCH)))
    u = rng.random((n, k))
    values = _draw_values(rng, (n, k), model.coeff_dist)
    supports = _uniform_supports(u, p, k)
    # signals[:, i] = sum_j D0[:, supports[i, j]] * values[i, j]
    gathered = D0.T[supports]  # (n, k, d)
    signals = np.einsum("nkd,nk->dn", gathered, values)
    if model.noise_sigma > 0.0:
        signals = signals + model.noise_sigma * rng.standard_normal((d, n))
    codes = None
    if keep_codes:
        codes = tuple(
            SparseCode(supports[i], values[i]) for i in range(n)
        )
    return SampleSet(signals, codes)
