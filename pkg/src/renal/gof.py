"""Discretized transition test on embedding trajectories.

Embeddings are binned on an equal-width grid, each trajectory is reduced to
a bin-to-bin transition table and the two tables are compared with a
chi-square homogeneity statistic. The bin count is chosen by maximizing the
Frobenius discrepancy between the two transition matrices plus a smoothness
reward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from renal.chi2 import chi_square_quantile, chi_square_sf
from renal.errors import DegenerateDataError, InsufficientDataError, InvalidInputError


@dataclass(frozen=True, eq=False)
class BinGrid:
    """Per-dimension equal-width partition with a row-major flattened index.

    ``bins_per_dim[j]`` is the number of intervals along dimension ``j``;
    state ``0`` is the cell at the lower corner and dimension 0 varies slowest.
    """

    bins_per_dim: tuple[int, ...]
    lower: np.ndarray
    upper: np.ndarray
    degenerate_dims: tuple[int, ...] = ()

    def __post_init__(self):
        lower = np.array(self.lower, dtype=np.float64).reshape(-1)
        upper = np.array(self.upper, dtype=np.float64).reshape(-1)
        bins = tuple(int(b) for b in np.atleast_1d(self.bins_per_dim))
        if len(bins) == 1 and lower.size > 1:
            bins = bins * lower.size
        if not (len(bins) == lower.size == upper.size) or lower.size == 0:
            raise InvalidInputError("bins, lower and upper must agree on the dimension")
        if any(b < 1 for b in bins):
            raise InvalidInputError(f"bin counts must be positive, got {bins}")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise InvalidInputError("grid bounds must be finite")
        if np.any(lower >= upper):
            raise InvalidInputError("grid requires lower < upper in every dimension")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "bins_per_dim", bins)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def n_states(self) -> int:
        return math.prod(self.bins_per_dim)

    @classmethod
    def spanning(cls, *sequences, bins) -> BinGrid:
        """Grid over the pooled componentwise range of the given embeddings.

        A dimension with zero spread is widened by 0.5 on each side so the
        grid stays valid; every point then lands in its middle bin.
        """
        pooled = np.vstack([_as_2d(s) for s in sequences if len(s)])
        lo = pooled.min(axis=0)
        hi = pooled.max(axis=0)
        flat = lo >= hi
        lo = np.where(flat, lo - 0.5, lo)
        hi = np.where(flat, hi + 0.5, hi)
        return cls(bins, lo, hi)

    def edges(self, j: int = 0) -> np.ndarray:
        return np.linspace(self.lower[j], self.upper[j], self.bins_per_dim[j] + 1)

    def to_dict(self) -> dict:
        return {
            "bins_per_dim": list(self.bins_per_dim),
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
        }


@dataclass(frozen=True, eq=False)
class TransitionTable:
    counts: np.ndarray
    probs: np.ndarray | None = None

    @property
    def m(self) -> int:
        return self.counts.shape[0]

    @property
    def row_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def n_events(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class BinSelectionConfig:
    """Search space and filters for the bin-count selector.

    ``lam`` weighs the smoothness reward against the discrepancy term.
    """

    lam: float = 0.08
    candidate_bins: tuple[int, ...] = tuple(range(2, 21))
    max_states: int = 100
    min_nonzero_fraction: float = 0.15

    def __post_init__(self):
        object.__setattr__(self, "candidate_bins", tuple(int(b) for b in self.candidate_bins))
        if self.lam < 0 or not math.isfinite(self.lam):
            raise InvalidInputError(f"lam must be a nonnegative real, got {self.lam!r}")
        if not self.candidate_bins or any(b < 1 for b in self.candidate_bins):
            raise InvalidInputError("candidate_bins must be a nonempty set of positive counts")
        if self.max_states < 1:
            raise InvalidInputError("max_states must be positive")
        if not 0.0 <= self.min_nonzero_fraction <= 1.0:
            raise InvalidInputError("min_nonzero_fraction must lie in [0, 1]")

    def candidates_for(self, dim: int) -> list[int]:
        return sorted({b for b in self.candidate_bins if b ** dim <= self.max_states})


@dataclass(frozen=True, eq=False)
class TestReport:
    statistic: float
    dof: int
    critical_value: float
    p_value: float
    alpha: float
    reject: bool
    selected_bins: BinGrid | None
    occupied_states: int
    extra: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class

    def summary(self) -> dict:
        return {
            "statistic": self.statistic,
            "dof": self.dof,
            "critical_value": self.critical_value,
            "p_value": self.p_value,
            "reject": self.reject,
            "occupied_states": self.occupied_states,
        }


def _as_2d(embeddings) -> np.ndarray:
    e = np.asarray(embeddings, dtype=np.float64)
    if e.ndim == 1:
        e = e[:, None]
    return e


def assign_bins(embeddings, grid: BinGrid) -> np.ndarray:
    """Flattened state index of every embedding.

    Intervals are half-open ``[lo, hi)`` except the topmost, which is closed.
    Points outside the grid are clamped to the nearest boundary bin.
    """
    e = np.asarray(embeddings, dtype=np.float64)
    if e.size == 0:
        return np.empty(0, dtype=np.int64)
    if e.ndim == 1:
        e = e[:, None] if grid.dim == 1 else e[None, :]
    if e.shape[1] != grid.dim:
        raise InvalidInputError(f"embedding dimension {e.shape[1]} does not match grid dimension {grid.dim}")
    bins = np.asarray(grid.bins_per_dim)
    scaled = (e - grid.lower) / (grid.upper - grid.lower) * bins
    idx = np.clip(np.floor(scaled), 0, bins - 1).astype(np.int64)
    return np.ravel_multi_index(tuple(idx.T), grid.bins_per_dim)


def transition_counts(states, m: int) -> TransitionTable:
    s = np.asarray(states, dtype=np.int64)
    if s.size < 2:
        raise InsufficientDataError("at least two states are needed to count transitions")
    if s.min() < 0 or s.max() >= m:
        raise InvalidInputError(f"state indices must lie in [0, {m})")
    flat = np.bincount(s[:-1] * m + s[1:], minlength=m * m)
    return TransitionTable(flat.reshape(m, m))


def transition_probabilities(table: TransitionTable) -> TransitionTable:
    """Row-normalize the counts; empty rows stay all-zero."""
    counts = table.counts
    totals = counts.sum(axis=1, keepdims=True)
    probs = np.divide(counts, totals, out=np.zeros(counts.shape), where=totals > 0)
    return TransitionTable(counts, probs)


def transition_table(states, m: int) -> TransitionTable:
    return transition_probabilities(transition_counts(states, m))


def smoothness(table) -> float:
    """Negative root-sum-square of the 5-point Laplacian over interior cells."""
    q = table.probs if isinstance(table, TransitionTable) else np.asarray(table, dtype=np.float64)
    if q.shape[0] < 3:
        return 0.0
    lap = q[2:, 1:-1] + q[:-2, 1:-1] + q[1:-1, 2:] + q[1:-1, :-2] - 4.0 * q[1:-1, 1:-1]
    return -math.sqrt(float(np.sum(lap * lap)))


def selection_objective(t0: TransitionTable, t1: TransitionTable, lam: float) -> float:
    gap = float(np.linalg.norm(t0.probs - t1.probs))
    return gap + lam * (smoothness(t0) + smoothness(t1))


def occupied_nonzero_fraction(t0: TransitionTable, t1: TransitionTable) -> float:
    """Share of nonzero cells in the pooled count matrix over occupied states."""
    pooled = t0.counts + t1.counts
    k = int(np.count_nonzero(pooled.sum(axis=1)))
    if k == 0:
        return 0.0
    return np.count_nonzero(pooled) / (k * k)


@dataclass(frozen=True, eq=False)
class BinSelection:
    grid: BinGrid
    table0: TransitionTable
    table1: TransitionTable
    objective: float
    scores: dict  # bin count -> objective, None when filtered out


def evaluate_bins(emb0, emb1, bins: int):
    """Grid over the pooled range with ``bins`` per dimension and both tables."""
    grid = BinGrid.spanning(emb0, emb1, bins=bins)
    m = grid.n_states
    t0 = transition_table(assign_bins(emb0, grid), m)
    t1 = transition_table(assign_bins(emb1, grid), m)
    return grid, t0, t1


def select_bin_grid(emb0, emb1, cfg: BinSelectionConfig) -> BinSelection:
    e0, e1 = _as_2d(emb0), _as_2d(emb1)
    if len(e0) == 0 or len(e1) == 0:
        raise InsufficientDataError("both embedding sequences must be nonempty")
    if e0.shape[1] != e1.shape[1]:
        raise InvalidInputError("embedding sequences differ in dimension")
    candidates = cfg.candidates_for(e0.shape[1])
    scores = {}
    best = None
    for b in candidates:
        grid, t0, t1 = evaluate_bins(e0, e1, b)
        if occupied_nonzero_fraction(t0, t1) < cfg.min_nonzero_fraction:
            scores[b] = None
            continue
        obj = selection_objective(t0, t1, cfg.lam)
        scores[b] = obj
        # strict comparison keeps the smaller count on ties
        if best is None or obj > best[0]:
            best = (obj, grid, t0, t1)
    if best is None:
        raise DegenerateDataError(
            f"no bin count among {candidates} leaves at least "
            f"{cfg.min_nonzero_fraction:.0%} nonzero transitions; lower min_nonzero_fraction"
        )
    obj, grid, t0, t1 = best
    return BinSelection(grid, t0, t1, obj, scores)


def chi_square_statistic(t0: TransitionTable, t1: TransitionTable) -> tuple[float, int]:
    """Two-sample transition discrepancy and the number of occupied states.

    Cells that neither sequence visits contribute zero.
    """
    c0 = np.asarray(t0.counts, dtype=np.float64)
    c1 = np.asarray(t1.counts, dtype=np.float64)
    if c0.shape != c1.shape:
        raise InvalidInputError(f"tables differ in size: {c0.shape} vs {c1.shape}")
    r0 = c0.sum(axis=1, keepdims=True)
    r1 = c1.sum(axis=1, keepdims=True)
    q0 = np.divide(c0, r0, out=np.zeros_like(c0), where=r0 > 0)
    q1 = np.divide(c1, r1, out=np.zeros_like(c1), where=r1 > 0)
    cell = c0 + c1
    weight = np.divide(r0 * r1, cell, out=np.zeros_like(cell), where=cell > 0)
    w = float(np.sum(weight * (q0 - q1) ** 2))
    occupied = int(np.count_nonzero((r0 + r1) > 0))
    return w, occupied


def decide(statistic: float, occupied: int, alpha: float, grid=None, **extra) -> TestReport:
    """Compare the statistic against the chi-square reference with m(m-1) dof.

    The degrees of freedom are floored at 1 so a single occupied state still
    yields a valid (accepting) reference distribution.
    """
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError(f"alpha must lie in (0, 1), got {alpha!r}")
    dof = max(occupied * (occupied - 1), 1)
    crit = chi_square_quantile(1.0 - alpha, dof)
    p = chi_square_sf(statistic, dof)
    return TestReport(
        statistic=statistic,
        dof=dof,
        critical_value=crit,
        p_value=p,
        alpha=alpha,
        reject=bool(statistic >= crit),
        selected_bins=grid,
        occupied_states=occupied,
        extra=extra,
    )


def test_embeddings(emb0, emb1, cfg: BinSelectionConfig, alpha: float = 0.05) -> TestReport:
    """Select the bin grid for two embedding trajectories and run the test."""
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError(f"alpha must lie in (0, 1), got {alpha!r}")
    sel = select_bin_grid(emb0, emb1, cfg)
    w, occupied = chi_square_statistic(sel.table0, sel.table1)
    return decide(w, occupied, alpha, sel.grid, objective=sel.objective)


test_embeddings.__test__ = False


def compact_states(*state_seqs):
    """Relabel states so only visited ones remain, preserving their order.

    Used for large fixed grids; unvisited states change neither the statistic
    nor the occupied count.
    """
    pooled = np.concatenate([np.asarray(s, dtype=np.int64) for s in state_seqs])
    visited, inverse = np.unique(pooled, return_inverse=True)
    out, start = [], 0
    for s in state_seqs:
        out.append(inverse[start:start + len(s)])
        start += len(s)
    return out, visited.size


def test_with_grid(emb0, emb1, grid: BinGrid, alpha: float = 0.05) -> TestReport:
    """Chi-square transition test on a fixed, caller-supplied grid."""
    y0 = assign_bins(emb0, grid)
    y1 = assign_bins(emb1, grid)
    (y0, y1), m = compact_states(y0, y1)
    w, occupied = chi_square_statistic(transition_counts(y0, m), transition_counts(y1, m))
    return decide(w, occupied, alpha, grid)


test_with_grid.__test__ = False


def run_renal_test(d0, d1, model, cfg: BinSelectionConfig, alpha: float = 0.05) -> TestReport:
    """Embed both sequences with the reference-trained model and test them."""
    from renal.embedding import embed_sequence

    if not 0.0 < alpha < 1.0:
        raise InvalidInputError(f"alpha must lie in (0, 1), got {alpha!r}")
    return test_embeddings(embed_sequence(model, d0), embed_sequence(model, d1), cfg, alpha)
