"""Reference tests: windowed kernel MMD and fixed-partition binning rules."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from renal.errors import InsufficientDataError, InvalidInputError
from renal.gof import BinGrid, _as_2d
from renal.rng import ROLE_CODES, make_rng
from renal.sequence import ObservationSequence


@dataclass(frozen=True)
class MmdConfig:
    n_subsequences: int = 50
    n_permutations: int = 200
    alpha: float = 0.05

    def __post_init__(self):
        if self.n_subsequences < 2:
            raise InvalidInputError("n_subsequences must be at least 2")
        if self.n_permutations < 100:
            raise InvalidInputError("n_permutations must be at least 100")
        if not 0.0 < self.alpha < 1.0:
            raise InvalidInputError("alpha must lie in (0, 1)")


@dataclass(frozen=True)
class MmdReport:
    statistic: float
    p_value: float
    reject: bool
    bandwidth: float

    def summary(self) -> dict:
        return {"statistic": self.statistic, "dof": None, "p_value": self.p_value, "reject": self.reject}


def split_windows(data, k: int) -> np.ndarray:
    """``k`` contiguous windows of length ``n // k``, flattened; the tail is dropped."""
    x = data.values if isinstance(data, ObservationSequence) else _as_2d(data)
    length = x.shape[0] // k
    if length < 1:
        raise InsufficientDataError(f"{x.shape[0]} observations cannot fill {k} windows")
    return x[: k * length].reshape(k, -1)


def median_bandwidth(pooled: np.ndarray) -> float:
    d2 = pdist(pooled, "sqeuclidean")
    bw = float(np.median(d2))
    return bw if bw > 0 else 1.0


def rbf_gram(pooled: np.ndarray, bandwidth: float) -> np.ndarray:
    return np.exp(-cdist(pooled, pooled, "sqeuclidean") / bandwidth)


def mmd2_unbiased(K: np.ndarray, n0: int) -> float:
    """Unbiased squared MMD from the pooled Gram matrix; first ``n0`` rows are sample 0."""
    Kxx = K[:n0, :n0]
    Kyy = K[n0:, n0:]
    Kxy = K[:n0, n0:]
    m, n = Kxx.shape[0], Kyy.shape[0]
    # fsum is exactly rounded, so the value does not depend on sample order
    sxx = (math.fsum(Kxx.ravel()) - math.fsum(np.diag(Kxx))) / (m * (m - 1))
    syy = (math.fsum(Kyy.ravel()) - math.fsum(np.diag(Kyy))) / (n * (n - 1))
    return sxx + syy - 2.0 * math.fsum(Kxy.ravel()) / (m * n)


def mmd_windows_test(w0: np.ndarray, w1: np.ndarray, cfg: MmdConfig, seed: int) -> MmdReport:
    """Permutation MMD test between two stacks of window vectors."""
    w0, w1 = _as_2d(w0), _as_2d(w1)
    if w0.shape[1] != w1.shape[1]:
        raise InvalidInputError("window vectors differ in length")
    if len(w0) < 2 or len(w1) < 2:
        raise InsufficientDataError("each sample needs at least two windows")
    pooled = np.vstack([w0, w1])
    bw = median_bandwidth(pooled)
    K = rbf_gram(pooled, bw)
    n0 = len(w0)
    stat = mmd2_unbiased(K, n0)
    rng = make_rng(seed, ROLE_CODES["method"])
    hits = 0
    for _ in range(cfg.n_permutations):
        idx = rng.permutation(len(pooled))
        if mmd2_unbiased(K[np.ix_(idx, idx)], n0) >= stat:
            hits += 1
    p = (1 + hits) / (1 + cfg.n_permutations)
    return MmdReport(stat, p, bool(p <= cfg.alpha), bw)


def mmd_test(d0, d1, cfg: MmdConfig = MmdConfig(), seed: int = 0) -> MmdReport:
    k = cfg.n_subsequences
    w0, w1 = split_windows(d0, k), split_windows(d1, k)
    if w0.shape[1] != w1.shape[1]:
        # unequal lengths: truncate both to the shorter window
        width = min(w0.shape[1], w1.shape[1])
        w0, w1 = w0[:, :width], w1[:, :width]
    return mmd_windows_test(w0, w1, cfg, seed)


def ewd_bins(embeddings, m: int) -> BinGrid:
    """Equal-width grid with ``m`` bins per dimension over the pooled range.

    Dimensions without spread get a single bin and are listed in
    ``degenerate_dims``.
    """
    if m < 2:
        raise InvalidInputError("EWD needs m >= 2")
    e = _as_2d(embeddings)
    lo, hi = e.min(axis=0), e.max(axis=0)
    flat = lo >= hi
    bins = tuple(1 if f else m for f in flat)
    return BinGrid(bins, np.where(flat, lo - 0.5, lo), np.where(flat, hi + 0.5, hi),
                   degenerate_dims=tuple(int(j) for j in np.flatnonzero(flat)))


def scott_rule(span: float, sigma: float, n: int) -> int:
    """``ceil(span / (3.5 sigma n^(-1/3)))``, or 1 when there is no spread."""
    if sigma <= 0.0 or span <= 0.0:
        return 1
    # multiply by cbrt(n) rather than divide by n^(-1/3) to keep exact cases exact
    return max(1, math.ceil(span * float(np.cbrt(n)) / (3.5 * sigma)))


def scott_bin_count(x) -> int:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size < 2:
        raise InsufficientDataError("Scott's rule needs at least two points")
    return scott_rule(float(x.max() - x.min()), float(np.std(x)), x.size)


def scott_bins(embeddings) -> BinGrid:
    e = _as_2d(embeddings)
    bins = tuple(scott_bin_count(e[:, j]) for j in range(e.shape[1]))
    lo, hi = e.min(axis=0), e.max(axis=0)
    flat = lo >= hi
    return BinGrid(bins, np.where(flat, lo - 0.5, lo), np.where(flat, hi + 0.5, hi),
                   degenerate_dims=tuple(int(j) for j in np.flatnonzero(flat)))
