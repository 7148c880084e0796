"""Permutation significance testing, permutation feature importance,
polarity precision, z-score standardization, and feature correlations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ClassifierReport:
    tp: int
    fp: int
    precision: float


@dataclass(frozen=True)
class PermutationConfig:
    n_permutations: int = 10000
    seed: int = 0
    statistic: str = "mean_abs_err_diff"

    def __post_init__(self):
        if self.n_permutations < 100:
            raise ValueError("n_permutations must be >= 100")
        if self.statistic != "mean_abs_err_diff":
            raise ValueError(f"unknown statistic {self.statistic!r}")


def permutation_test(errors_a, errors_b, cfg: PermutationConfig | None = None) -> float:
    """Paired sign-flip permutation test on two per-window absolute error
    vectors. Observed statistic |mean(a) - mean(b)|; each permutation swaps
    every pair's labels independently with probability 1/2. Two-sided by
    construction; add-one smoothing keeps p > 0."""
    if cfg is None:
        cfg = PermutationConfig()
    a = np.asarray(errors_a, dtype=np.float64)
    b = np.asarray(errors_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"paired vectors required, got {a.shape} vs {b.shape}")
    n = a.size
    if n < 10:
        raise ValueError(f"need at least 10 pairs, got {n}")
    diffs = a - b
    observed = abs(diffs.mean())
    rng = np.random.default_rng(cfg.seed)
    hits = 0
    remaining = cfg.n_permutations
    block = max(1, min(remaining, 2_000_000 // n))
    while remaining > 0:
        size = min(block, remaining)
        signs = rng.integers(0, 2, size=(size, n)) * 2 - 1
        stats = np.abs((signs * diffs).mean(axis=1))
        hits += int(np.count_nonzero(stats >= observed))
        remaining -= size
    return (1 + hits) / (1 + cfg.n_permutations)


def permutation_importance(
    model, windows, targets, feature_index: int, n_repeats: int = 5, seed: int = 0
) -> float:
    """Mean MAE degradation after shuffling one feature column across samples.

    model is a callable mapping a (N, T, d) window stack to N predictions.
    The feature's T-long slice moves with its sample, so only the assignment
    of that feature's history to samples is broken, not its time structure.
    """
    windows = np.asarray(windows, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if windows.ndim != 3:
        raise ValueError(f"windows must be (N, T, d), got {windows.shape}")
    n, _, d = windows.shape
    if not 0 <= feature_index < d:
        raise ValueError(f"feature index {feature_index} outside 0..{d - 1}")
    if n == 0:
        raise ValueError("no samples")
    baseline = np.mean(np.abs(np.asarray(model(windows)) - targets))
    rng = np.random.default_rng(seed)
    degradations = []
    for _ in range(n_repeats):
        shuffled = windows.copy()
        perm = rng.permutation(n)
        shuffled[:, :, feature_index] = windows[perm, :, feature_index]
        err = np.mean(np.abs(np.asarray(model(shuffled)) - targets))
        degradations.append(err - baseline)
    return float(np.mean(degradations))


def precision(predicted, truth) -> ClassifierReport:
    """Polarity precision: correct predictions over all predictions."""
    predicted = list(predicted)
    truth = list(truth)
    if len(predicted) != len(truth):
        raise ValueError("length mismatch")
    if not predicted:
        raise ValueError("empty input")
    tp = sum(1 for p, t in zip(predicted, truth) if p == t)
    fp = len(predicted) - tp
    return ClassifierReport(tp=tp, fp=fp, precision=tp / (tp + fp))


@dataclass
class ZScoreStats:
    mean: np.ndarray
    std: np.ndarray
    zero_variance: list = field(default_factory=list)

    def apply(self, columns):
        columns = np.asarray(columns, dtype=np.float64)
        out = (columns - self.mean) / np.where(self.std > 0.0, self.std, 1.0)
        if self.zero_variance:
            out[..., self.zero_variance] = 0.0
        return out


def zscore_fit(train_columns) -> ZScoreStats:
    """Fit per-column mean and population std on the training columns only.
    Zero-variance columns are recorded and later standardized to zeros."""
    train = np.asarray(train_columns, dtype=np.float64)
    if train.ndim == 1:
        train = train[:, None]
    mean = train.mean(axis=0)
    std = train.std(axis=0)  # population (1/N) convention
    zero_variance = [int(i) for i in np.flatnonzero(std == 0.0)]
    return ZScoreStats(mean=mean, std=std, zero_variance=zero_variance)


def zscore_fit_apply(train_columns, other_columns=()):
    """Standardize train columns to mean 0 / std 1 and carry the fitted
    statistics onto the other column sets."""
    stats = zscore_fit(train_columns)
    train = np.asarray(train_columns, dtype=np.float64)
    if train.ndim == 1:
        train = train[:, None]
    others = [stats.apply(np.asarray(c, dtype=np.float64).reshape(len(c), -1))
              for c in other_columns]
    return stats.apply(train), others, stats


def pearson_matrix(columns) -> np.ndarray:
    """Pairwise Pearson correlations; symmetric with unit diagonal."""
    data = np.asarray(columns, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] < 2:
        raise ValueError("need a 2-D array with at least 2 columns")
    std = data.std(axis=0)
    if np.any(std == 0.0):
        bad = [int(i) for i in np.flatnonzero(std == 0.0)]
        raise ValueError(f"constant columns {bad}")
    centered = (data - data.mean(axis=0)) / std
    corr = centered.T @ centered / data.shape[0]
    corr = np.clip((corr + corr.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return corr
