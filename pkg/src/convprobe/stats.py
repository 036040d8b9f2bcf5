"""Correlation, signed-rank test and histogram helpers."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

DEGENERATE_VARIANCE = 1e-12
EXACT_WILCOXON_MAX_N = 25


class Correlation(NamedTuple):
    r: float
    degenerate: bool


def pearson(x, y) -> Correlation:
    """Pearson correlation of two equal-length sequences.

    If either sequence has population variance below 1e-12 the correlation is
    defined as 0 and ``degenerate`` is set.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise ValueError("pearson needs two 1-D sequences of equal length")
    if x.size < 2:
        raise ValueError("pearson needs at least 2 observations")
    r, deg = pearson_columns(x[:, None], y[:, None])
    return Correlation(float(r[0, 0]), bool(deg[0, 0]))


def pearson_columns(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """All pairwise correlations between columns of ``a`` (n, p) and ``b`` (n, q).

    Returns ``(r, degenerate)`` each shaped (p, q). Two-pass centering keeps
    the result stable for large offsets.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ValueError("inputs must be (n, p) and (n, q) with matching n")
    n = a.shape[0]
    if n < 2:
        raise ValueError("need at least 2 observations")
    ac = a - a.mean(axis=0)
    bc = b - b.mean(axis=0)
    va = np.einsum("ij,ij->j", ac, ac) / n
    vb = np.einsum("ij,ij->j", bc, bc) / n
    deg_a = va < DEGENERATE_VARIANCE
    deg_b = vb < DEGENERATE_VARIANCE
    cov = ac.T @ bc / n
    denom = np.sqrt(np.outer(np.where(deg_a, 1.0, va), np.where(deg_b, 1.0, vb)))
    r = np.clip(cov / denom, -1.0, 1.0)
    deg = deg_a[:, None] | deg_b[None, :]
    r[deg] = 0.0
    return r, deg


def pearson_rows(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise correlation along the last axis of two equally shaped arrays."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.shape[-1] < 2:
        raise ValueError("inputs must share shape with at least 2 samples on the last axis")
    ac = a - a.mean(axis=-1, keepdims=True)
    bc = b - b.mean(axis=-1, keepdims=True)
    n = a.shape[-1]
    va = (ac * ac).sum(axis=-1) / n
    vb = (bc * bc).sum(axis=-1) / n
    deg = (va < DEGENERATE_VARIANCE) | (vb < DEGENERATE_VARIANCE)
    cov = (ac * bc).sum(axis=-1) / n
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.clip(cov / np.sqrt(va * vb), -1.0, 1.0)
    r = np.where(deg, 0.0, r)
    return r, deg


# --------------------------------------------------------------------------
# Wilcoxon signed-rank


class WilcoxonResult(NamedTuple):
    statistic: float  # W+, sum of ranks of positive differences
    pvalue: float
    n: int  # non-zero differences
    exact: bool
    degenerate: bool


def _midranks(v: np.ndarray) -> np.ndarray:
    order = np.argsort(v, kind="mergesort")
    sv = v[order]
    ranks = np.empty(v.size)
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def signed_rank_null_counts(doubled_ranks) -> np.ndarray:
    """Number of sign assignments giving each value of 2*W+.

    ``doubled_ranks`` are integer 2*rank values (midranks are half-integers).
    Entry ``s`` of the result counts assignments with 2*W+ == s.
    """
    dr = [int(r) for r in doubled_ranks]
    counts = np.zeros(sum(dr) + 1, dtype=np.int64)
    counts[0] = 1
    top = 0
    for r in dr:
        counts[r : top + r + 1] += counts[: top + 1].copy()
        top += r
    return counts


def wilcoxon_signed_rank(x, y=None, exact_max_n: int = EXACT_WILCOXON_MAX_N) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test of paired samples.

    Zero differences are dropped. For n <= ``exact_max_n`` the p-value comes
    from the exact null distribution of W+ (with midranks for ties); above
    that a normal approximation with continuity and tie corrections is used.
    If every difference is zero the result is flagged degenerate with p = 1.
    """
    d = np.asarray(x, dtype=np.float64)
    if y is not None:
        d = d - np.asarray(y, dtype=np.float64)
    d = d[d != 0]
    n = d.size
    if n == 0:
        return WilcoxonResult(0.0, 1.0, 0, True, True)
    ranks = _midranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    if n <= exact_max_n:
        counts = signed_rank_null_counts(np.rint(2 * ranks))
        total = float(2**n)
        s = int(round(2 * w_plus))
        lower = float(counts[: s + 1].sum()) / total
        upper = float(counts[s:].sum()) / total
        p = min(1.0, 2.0 * min(lower, upper))
        return WilcoxonResult(w_plus, p, n, True, False)
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(np.abs(d), return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_counts**3 - tie_counts)) / 48.0
    z = max(abs(w_plus - mean) - 0.5, 0.0) / math.sqrt(var)
    p = min(1.0, math.erfc(z / math.sqrt(2.0)))
    return WilcoxonResult(w_plus, p, n, False, False)


# --------------------------------------------------------------------------
# histogram


class Histogram(NamedTuple):
    edges: np.ndarray
    counts: np.ndarray
    relative: np.ndarray


def histogram(values, edges) -> Histogram:
    """Counts per bin, bins right-open except the last (closed).

    ``relative`` divides by the total number of values, so it sums to 1 only
    when every value is in range.
    """
    edges = np.asarray(edges, dtype=np.float64)
    if edges.ndim != 1 or edges.size < 2:
        raise ValueError("need at least two bin edges")
    if np.any(np.diff(edges) <= 0):
        raise ValueError("bin edges must be strictly increasing")
    values = np.asarray(values, dtype=np.float64).ravel()
    counts, _ = np.histogram(values, bins=edges)
    rel = counts / values.size if values.size else np.zeros(counts.shape)
    return Histogram(edges, counts.astype(np.int64), rel)


def phase_edges(n_bins: int = 16) -> np.ndarray:
    return np.linspace(-np.pi, np.pi, n_bins + 1)
