"""Residual/score matrices and candidate-split designs.

``make_gof`` turns a node fit into the row-wise matrix a split test
consumes: raw residuals, the two score columns, or their elementwise
sign indicators.  ``make_split_transform`` turns a split column into the
design the test statistic pairs with it: the identity for the linear
route, quartile-bin or level one-hot columns for the categorized route,
and after-the-candidate indicators for the maximally-selected route.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import CATEGORICAL, NUMERIC, SplitColumn, empirical_quartiles
from .linmod import LinearFit

__all__ = [
    "TransformError",
    "NoAdmissibleSplitError",
    "GofMatrix",
    "SplitTransform",
    "make_gof",
    "make_split_transform",
]

MODE_LIN = "lin"
MODE_CAT = "cat"
MODE_MAX = "max"
MODES = (MODE_LIN, MODE_CAT, MODE_MAX)


class TransformError(ValueError):
    """Raised when a transform cannot be built for a column."""


class NoAdmissibleSplitError(TransformError):
    """No candidate split satisfies the minimum-segment constraint."""


@dataclass(frozen=True)
class GofMatrix:
    """Row-wise goodness-of-fit contributions, one column per component."""

    values: np.ndarray
    dichotomized: bool

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise TransformError("gof values must be a 2-d array")
        if not np.all(np.isfinite(values)):
            raise TransformError("gof values must be finite")
        if self.dichotomized and not np.all((values == 0.0) | (values == 1.0)):
            raise TransformError("dichotomized gof must be 0/1 valued")
        object.__setattr__(self, "values", values)

    @property
    def k(self) -> int:
        return int(self.values.shape[1])

    @property
    def n(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class SplitTransform:
    """Design matrix a split column contributes to a test statistic.

    ``bin_breaks`` is set for quartile-binned numeric columns,
    ``candidate_splits`` for the maximally-selected route, and
    ``labels`` names the design columns for reporting.
    """

    mode: str
    design: np.ndarray
    labels: tuple[str, ...]
    bin_breaks: tuple[float, ...] | None = None
    candidate_splits: tuple[float, ...] | None = None


def make_gof(fit: LinearFit, use_scores: bool, dichotomize: bool) -> GofMatrix:
    """Build the per-row test input from a node fit.

    With ``use_scores`` the matrix has the two score columns, otherwise
    the single residual column.  ``dichotomize`` replaces each entry by
    the indicator of nonnegativity (zeros map to one).
    """
    if use_scores:
        if fit.scores is None:
            raise TransformError("fit carries no per-row scores")
        values = np.array(fit.scores, dtype=float)
    else:
        if fit.residuals is None:
            raise TransformError("fit carries no residuals")
        values = np.asarray(fit.residuals, dtype=float)[:, None]
    if dichotomize:
        values = (values >= 0.0).astype(float)
    return GofMatrix(values=values, dichotomized=dichotomize)


def _quartile_bins(col: SplitColumn) -> tuple[np.ndarray, tuple[float, ...]]:
    breaks = np.unique(np.asarray(empirical_quartiles(col)))
    # right-closed intervals (-inf, b1], (b1, b2], ..., (bk, +inf)
    bins = np.searchsorted(breaks, col.values, side="left")
    return bins, tuple(float(b) for b in breaks)


def _one_hot(codes: np.ndarray, count: int) -> np.ndarray:
    design = np.zeros((codes.shape[0], count))
    design[np.arange(codes.shape[0]), codes] = 1.0
    return design


def make_split_transform(col: SplitColumn, mode: str, min_segment: int = 1) -> SplitTransform:
    """Build the design matrix for one split column.

    Numeric columns support all three modes; categorical columns only
    the one-hot route.  For ``mode="max"`` every distinct value whose
    left and right groups both hold at least ``min_segment`` rows yields
    one after-the-candidate indicator column.
    """
    if mode not in MODES:
        raise TransformError(f"unknown transform mode {mode!r}")
    if col.kind == CATEGORICAL:
        if mode != MODE_CAT:
            raise TransformError(
                f"mode {mode!r} needs a numeric column, {col.name!r} is categorical"
            )
        counts = np.bincount(col.values, minlength=len(col.levels))
        kept = np.flatnonzero(counts)
        if kept.size == 0:
            raise TransformError(f"column {col.name!r} is empty")
        recode = np.zeros(len(col.levels), dtype=np.int64)
        recode[kept] = np.arange(kept.size)
        design = _one_hot(recode[col.values], kept.size)
        labels = tuple(col.levels[i] for i in kept)
        return SplitTransform(mode=MODE_CAT, design=design, labels=labels)
    values = col.values
    if mode == MODE_LIN:
        return SplitTransform(mode=MODE_LIN, design=values[:, None], labels=(col.name,))
    if mode == MODE_CAT:
        bins, breaks = _quartile_bins(col)
        counts = np.bincount(bins, minlength=len(breaks) + 1)
        kept = np.flatnonzero(counts)
        recode = np.zeros(len(breaks) + 1, dtype=np.int64)
        recode[kept] = np.arange(kept.size)
        design = _one_hot(recode[bins], kept.size)
        labels = tuple(f"bin{i + 1}" for i in range(kept.size))
        return SplitTransform(mode=MODE_CAT, design=design, labels=labels, bin_breaks=breaks)
    n = values.shape[0]
    if min_segment < 1:
        raise TransformError("min_segment must be at least 1")
    distinct, counts = np.unique(values, return_counts=True)
    left_sizes = np.cumsum(counts)
    admissible = (left_sizes >= min_segment) & (n - left_sizes >= min_segment)
    candidates = distinct[admissible]
    if candidates.size == 0:
        raise NoAdmissibleSplitError(
            f"column {col.name!r} admits no split with segments of {min_segment}"
        )
    design = (values[:, None] > candidates[None, :]).astype(float)
    labels = tuple(f"{col.name}>{c:g}" for c in candidates)
    return SplitTransform(
        mode=MODE_MAX,
        design=design,
        labels=labels,
        candidate_splits=tuple(float(c) for c in candidates),
    )
