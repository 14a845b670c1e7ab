"""Kolmogorov-Arnold network engine with initialization schemes, fitting and
physics-informed benchmarks, and kernel spectrum analysis."""

from ._kanlab import (
    KanlabError,
    Network,
    basis_derivatives,
    basis_values,
    eval_target,
    feynman_task_ids,
    fingerprint,
    fit_task_ids,
    load_checkpoint,
    lower_median,
    main,
    read_loss_csv,
    read_results_csv,
    read_spectrum_csv,
    special,
    train,
    train_ntk,
)

RESULTS_COLUMNS = (
    "task", "depth", "width", "G", "scheme", "alpha", "beta", "seed",
    "final_loss", "rel_l2", "diverged", "wall_time_s",
)
LOSS_COLUMNS = ("epoch", "loss")
SPECTRUM_COLUMNS = ("iteration", "block_id", "rank", "eigenvalue")
MEDIANS_COLUMNS = (
    "task", "depth", "width", "G", "scheme", "alpha", "beta", "seeds",
    "median_final_loss", "median_rel_l2",
)
COMPARISON_COLUMNS = ("task", "scheme", "settings", "loss_pct", "l2_pct", "both_pct")

__all__ = [
    "KanlabError", "Network", "basis_derivatives", "basis_values", "eval_target",
    "feynman_task_ids", "fingerprint", "fit_task_ids", "load_checkpoint",
    "lower_median", "main", "read_loss_csv", "read_results_csv",
    "read_spectrum_csv", "special", "train", "train_ntk",
    "RESULTS_COLUMNS", "LOSS_COLUMNS", "SPECTRUM_COLUMNS", "MEDIANS_COLUMNS",
    "COMPARISON_COLUMNS",
]
