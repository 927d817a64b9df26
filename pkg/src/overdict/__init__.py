"""Over-realized dictionary learning: train more atoms than the generating
model has, then distill back down by usage.

The package covers the full pipeline: synthetic sparse-signal generation
(:mod:`~overdict.model`), sparse coding (:mod:`~overdict.coding`), online
and batch dictionary learning (:mod:`~overdict.learning`), usage-based
distillation (:mod:`~overdict.distill`), recovery metrics with Monte-Carlo
bound checks (:mod:`~overdict.metrics`), and CSV experiment drivers
(:mod:`~overdict.experiments`) behind the ``overdict`` CLI.
"""

from .coding import (
    CodingResult,
    L0Constrained,
    L1Penalized,
    empirical_risk,
    lasso,
    lasso_batch,
    loss_fs,
    omp,
    omp_batch,
    save_coding_results,
)
from .distill import (
    DistillResult,
    fine_tune,
    oracle_prune,
    prune_by_usage,
    save_distill_result,
    selection_overlap,
)
from .experiments import (
    Algorithm,
    ExperimentConfig,
    SweepRow,
    run_noise_sweep,
    run_phase_transition,
    run_sweep,
)
from .learning import (
    InitScheme,
    TrainConfig,
    TrainReport,
    init_dictionary,
    ksvd_train,
    odl_train,
    save_train_report,
    usage_counts,
)
from .metrics import (
    AtomDiagnostics,
    BoundReport,
    atom_diagnostics,
    cross_coherence,
    cross_nu,
    dict_distance,
    generalization_gap,
    legacy_distance,
    lemma1_check,
    min_usage_statistic,
    mutual_coherence,
    theorem2_threshold,
    write_atom_diagnostics,
    write_bound_reports,
    zeta_k,
)
from .model import (
    CoeffDist,
    Dictionary,
    GenerativeModel,
    SampleSet,
    SparseCode,
    gen_dictionary,
    sample_batch,
    sample_code,
)
from .mtx import format_float, load_matrix, save_matrix

__version__ = "0.1.0"

__all__ = [
    "Algorithm",
    "AtomDiagnostics",
    "BoundReport",
    "CodingResult",
    "CoeffDist",
    "Dictionary",
    "DistillResult",
    "ExperimentConfig",
    "GenerativeModel",
    "InitScheme",
    "L0Constrained",
    "L1Penalized",
    "SampleSet",
    "SparseCode",
    "SweepRow",
    "TrainConfig",
    "TrainReport",
    "atom_diagnostics",
    "cross_coherence",
    "cross_nu",
    "dict_distance",
    "empirical_risk",
    "fine_tune",
    "format_float",
    "gen_dictionary",
    "generalization_gap",
    "init_dictionary",
    "ksvd_train",
    "lasso",
    "lasso_batch",
    "legacy_distance",
    "lemma1_check",
    "load_matrix",
    "loss_fs",
    "min_usage_statistic",
    "mutual_coherence",
    "odl_train",
    "omp",
    "omp_batch",
    "oracle_prune",
    "prune_by_usage",
    "run_noise_sweep",
    "run_phase_transition",
    "run_sweep",
    "sample_batch",
    "sample_code",
    "save_coding_results",
    "save_distill_result",
    "save_matrix",
    "save_train_report",
    "selection_overlap",
    "theorem2_threshold",
    "usage_counts",
    "write_atom_diagnostics",
    "write_bound_reports",
    "zeta_k",
]
