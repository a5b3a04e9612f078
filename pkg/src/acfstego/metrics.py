"""Channel and security metrics: BER, effective information capacity, entropy,
and a frequency-based indistinguishability test."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import chi2_contingency

from .exceptions import DomainError, StatisticalPowerError

MIN_RUNS = 100


def ber(sent: Sequence[int], recovered: Sequence[int]) -> float:
    if len(sent) != len(recovered):
        raise DomainError(f"bit sequences differ in length ({len(sent)} vs {len(recovered)})")
    if not sent:
        raise DomainError("BER of an empty sequence is undefined")
    return sum(int(a) != int(b) for a, b in zip(sent, recovered)) / len(sent)


def binary_entropy(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"probability out of range: {p}")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def eic(total_bits: int, total_tokens: int, ber: float) -> float:
    """Effective information capacity in bits per 1000 tokens.

    Nominal rate scaled by the binary-symmetric-channel capacity 1 - H2(BER).
    """
    if total_tokens <= 0:
        raise DomainError("total_tokens must be positive")
    return total_bits / total_tokens * 1e3 * (1.0 - binary_entropy(ber))


def mean_generation_entropy(records) -> tuple[float, float]:
    """Step-weighted mean and standard deviation of per-step distribution entropy.

    ``records`` are objects with an ``entropies`` list (or plain lists).
    """
    steps = []
    for rec in records:
        steps.extend(getattr(rec, "entropies", rec))
    if not steps:
        raise DomainError("no per-step entropies recorded")
    arr = np.asarray(steps, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


@dataclass
class IndistinguishabilityResult:
    rejection_rate: float
    median_p_value: float
    p_values: np.ndarray
    alpha: float
    n_bins: int


def _bins(runs_a, runs_b, n_bins: int) -> dict[int, int]:
    counts = Counter()
    for run in list(runs_a) + list(runs_b):
        counts.update(run)
    top = [tok for tok, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[: n_bins - 1]]
    return {tok: i for i, tok in enumerate(top)}


def frequency_indistinguishability(
    runs_a: Sequence[Sequence[int]],
    runs_b: Sequence[Sequence[int]],
    n_resamples: int = 1000,
    sample_size: int = 100,
    n_bins: int = 8,
    alpha: float = 0.05,
    seed: int = 0,
) -> IndistinguishabilityResult:
    """Chi-square homogeneity test on token-frequency histograms, over resampled splits.

    Tokens within one run are dependent, so each resample takes one token at a
    random position from each of ``sample_size`` runs per group; the resulting
    samples are independent and the test is calibrated under the null. Tokens
    are binned as the ``n_bins - 1`` most frequent (pooled over both groups)
    plus an "other" bin.
    """
    runs_a = [list(r) for r in runs_a if len(r)]
    runs_b = [list(r) for r in runs_b if len(r)]
    if min(len(runs_a), len(runs_b)) < MIN_RUNS:
        raise StatisticalPowerError(f"need at least {MIN_RUNS} non-empty runs per group")
    if sample_size > min(len(runs_a), len(runs_b)):
        raise StatisticalPowerError("sample_size exceeds the number of runs available")
    mapping = _bins(runs_a, runs_b, n_bins)
    other = n_bins - 1
    rng = np.random.default_rng(seed)

    def draw(runs):
        hist = np.zeros(n_bins)
        for i in rng.choice(len(runs), size=sample_size, replace=False):
            run = runs[i]
            hist[mapping.get(run[rng.integers(len(run))], other)] += 1
        return hist

    pvals = np.empty(n_resamples)
    for b in range(n_resamples):
        table = np.stack([draw(runs_a), draw(runs_b)])
        table = table[:, table.sum(axis=0) > 0]
        if table.shape[1] < 2:
            pvals[b] = 1.0
            continue
        pvals[b] = chi2_contingency(table, correction=False).pvalue
    return IndistinguishabilityResult(
        rejection_rate=float(np.mean(pvals < alpha)),
        median_p_value=float(np.median(pvals)),
        p_values=pvals,
        alpha=alpha,
        n_bins=n_bins,
    )


def split_null(runs: Sequence[Sequence[int]], seed: int = 0):
    """Random halves of one population, for calibrating the test under the null."""
    rng = np.random.default_rng(seed)
    idx = rng.permutation(len(runs))
    half = len(runs) // 2
    return [runs[i] for i in idx[:half]], [runs[i] for i in idx[half:]]
