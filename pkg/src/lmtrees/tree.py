"""Recursive partitioning around per-node linear fits.

Growth alternates two separated decisions: pick the split variable by
the configured instability test, then pick the split point on that
variable alone by exhaustive residual-sum-of-squares search.  Node ids
are assigned in preorder.  Stopping is structural (depth, node size,
no admissible point) or inferential (no significant variable while
prepruning is on).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from .dataset import CATEGORICAL, NUMERIC, CsvSchema, DataError, Dataset, SplitColumn
from .inference import (
    StrategyConfig,
    TestOutcome,
    argmin_outcome,
    parse_strategy,
    select_variable,
)
from .linmod import LinearFit, fit_ols, predict

__all__ = [
    "GrowControl",
    "Split",
    "TreeNode",
    "best_split_point",
    "grow",
    "partition_labels",
    "predict_tree",
    "iter_nodes",
    "leaves",
    "tree_depth",
    "tree_to_dict",
    "tree_from_dict",
    "tree_to_json",
    "tree_from_json",
    "format_tree",
]

TREE_FORMAT = "lmtrees-tree/1"


@dataclass(frozen=True)
class GrowControl:
    """Growth knobs shared by every strategy.

    ``min_segment`` of ``None`` keeps the per-node default used by the
    fluctuation test.  With ``prepruning`` off the tree splits on the
    smallest p-value regardless of ``alpha`` (post-pruning workflows).
    """

    alpha: float = 0.05
    min_node_size: int = 20
    min_segment: int | None = None
    max_depth: int = 5
    prepruning: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.min_node_size < 3:
            raise ValueError("min_node_size must be at least 3")
        if self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")
        if self.min_segment is not None and self.min_segment < 1:
            raise ValueError("min_segment must be at least 1")


@dataclass(frozen=True)
class Split:
    """A routing rule: numeric rows go left when ``value <= point``,
    categorical rows when their level is in ``left_levels``."""

    variable: str
    point: float | None = None
    left_levels: tuple[str, ...] | None = None
    right_levels: tuple[str, ...] | None = None


@dataclass(eq=False)
class TreeNode:
    """One node of a fitted tree; leaves have no children."""

    id: int
    depth: int
    n: int
    fit: LinearFit
    p_values: dict[str, float]
    outcomes: tuple[TestOutcome, ...] = ()
    split: Split | None = None
    children: tuple["TreeNode", ...] = ()
    rows: np.ndarray | None = field(default=None, repr=False)

    @property
    def is_leaf(self) -> bool:
        return not self.children


def iter_nodes(node: TreeNode) -> Iterator[TreeNode]:
    """Preorder traversal."""
    yield node
    for child in node.children:
        yield from iter_nodes(child)


def leaves(node: TreeNode) -> list[TreeNode]:
    return [n for n in iter_nodes(node) if n.is_leaf]


def tree_depth(node: TreeNode) -> int:
    return max(n.depth for n in iter_nodes(node))


def _prefix_rss(yc: np.ndarray, xc: np.ndarray, sxx_tol: float):
    # residual sums of squares of all prefixes and suffixes, via
    # cumulative first and second moments of the (already centered) data
    n = yc.shape[0]
    cx = np.cumsum(xc)
    cy = np.cumsum(yc)
    cxx = np.cumsum(xc * xc)
    cyy = np.cumsum(yc * yc)
    cxy = np.cumsum(xc * yc)
    m = np.arange(1, n + 1, dtype=float)

    def segment(sx, sy, sxx, syy, sxy, size):
        # the zero-size tail entry is never an admissible cut; mask it out
        with np.errstate(invalid="ignore", divide="ignore"):
            vxx = sxx - sx * sx / size
            vyy = syy - sy * sy / size
            vxy = sxy - sx * sy / size
            ok = vxx > sxx_tol
            rss = np.where(
                ok, vyy - np.divide(vxy * vxy, vxx, out=np.zeros_like(vxx), where=ok), np.inf
            )
        return np.maximum(rss, 0.0), ok

    left_rss, left_ok = segment(cx, cy, cxx, cyy, cxy, m)
    right_rss, right_ok = segment(cx[-1] - cx, cy[-1] - cy, cxx[-1] - cxx,
                                  cyy[-1] - cyy, cxy[-1] - cxy, m[-1] - m)
    return left_rss, left_ok, right_rss, right_ok


def _best_numeric_split(
    y: np.ndarray, x: np.ndarray, col: SplitColumn, min_node_size: int
) -> Split | None:
    n = y.shape[0]
    order = np.argsort(col.values, kind="stable")
    vs = col.values[order]
    yc = y[order] - y.mean()
    xc = x[order] - x.mean()
    total_sxx = float(xc @ xc)
    sxx_tol = max(total_sxx, 1.0) * 1e-12
    left_rss, left_ok, right_rss, right_ok = _prefix_rss(yc, xc, sxx_tol)
    lower = max(min_node_size, 3)
    best_total = np.inf
    best_cut = -1
    for m in range(lower, n - lower + 1):
        if vs[m - 1] == vs[m]:
            continue
        if not (left_ok[m - 1] and right_ok[m - 1]):
            continue
        total = left_rss[m - 1] + right_rss[m - 1]
        if total < best_total:
            best_total = total
            best_cut = m
    if best_cut < 0:
        return None
    point = 0.5 * (vs[best_cut - 1] + vs[best_cut])
    if not (vs[best_cut - 1] < point < vs[best_cut]):
        point = float(vs[best_cut - 1])
    return Split(variable=col.name, point=float(point))


def _segment_rss(y: np.ndarray, x: np.ndarray, sxx_tol: float) -> float | None:
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx <= sxx_tol:
        return None
    yc = y - y.mean()
    return max(float(yc @ yc) - float(xc @ yc) ** 2 / sxx, 0.0)


def _best_categorical_split(
    y: np.ndarray, x: np.ndarray, col: SplitColumn, min_node_size: int
) -> Split | None:
    observed = sorted(set(int(c) for c in col.values))
    if len(observed) < 2:
        return None
    if len(observed) > 16:
        raise DataError(f"column {col.name!r} has too many levels for exhaustive search")
    xc = x - x.mean()
    sxx_tol = max(float(xc @ xc), 1.0) * 1e-12
    lower = max(min_node_size, 3)
    rest = observed[1:]
    best = None
    best_total = np.inf
    for bits in range(2 ** len(rest)):
        left_set = {observed[0]} | {rest[i] for i in range(len(rest)) if bits >> i & 1}
        mask = np.isin(col.values, sorted(left_set))
        n_left = int(mask.sum())
        if n_left < lower or y.shape[0] - n_left < lower:
            continue
        rss_left = _segment_rss(y[mask], x[mask], sxx_tol)
        rss_right = _segment_rss(y[~mask], x[~mask], sxx_tol)
        if rss_left is None or rss_right is None:
            continue
        total = rss_left + rss_right
        if total < best_total:
            best_total = total
            left_codes = sorted(left_set)
            right_codes = sorted(set(observed) - left_set)
            best = Split(
                variable=col.name,
                left_levels=col.labels(left_codes),
                right_levels=col.labels(right_codes),
            )
    return best


def best_split_point(
    y: np.ndarray, x: np.ndarray, col: SplitColumn, min_node_size: int
) -> Split | None:
    """Exhaustive least-squares search for the best cut on one column.

    Numeric: candidate cuts sit halfway between consecutive distinct
    sorted values; both children must hold ``min_node_size`` rows and
    admit a slope fit; the total child residual sum of squares is
    minimized, ties going to the smallest point.  Categorical: the best
    binary partition of the observed levels under the same constraints.
    Returns ``None`` when no admissible cut exists.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if col.kind == NUMERIC:
        return _best_numeric_split(y, x, col, min_node_size)
    return _best_categorical_split(y, x, col, min_node_size)


def _route_mask(split: Split, col: SplitColumn) -> np.ndarray:
    if split.point is not None:
        return col.values <= split.point
    left = set(split.left_levels or ())
    labels = [col.levels[int(c)] for c in col.values]
    return np.array([lab in left for lab in labels], dtype=bool)


def grow(data: Dataset, strategy: StrategyConfig | str, control: GrowControl) -> TreeNode:
    """Grow a tree by test-based variable selection and RSS point search.

    A node is split when it is shallower than ``max_depth``, holds at
    least twice ``min_node_size`` rows, the selection gate names a
    variable (or, without prepruning, any non-degenerate test exists),
    and that variable admits a cut.  Test degeneracies never abort the
    recursion; they terminate the node.
    """
    if isinstance(strategy, str):
        strategy = parse_strategy(strategy)
    strategy = replace(strategy, alpha=control.alpha, min_segment=control.min_segment)
    counter = itertools.count()

    def build(rows: np.ndarray, depth: int) -> TreeNode:
        node_id = next(counter)
        sub = data.take(rows)
        fit = fit_ols(sub.y, sub.x)
        outcomes: tuple[TestOutcome, ...] = ()
        split = None
        children: tuple[TreeNode, ...] = ()
        if depth < control.max_depth and rows.shape[0] >= 2 * control.min_node_size:
            outcome_list, chosen = select_variable(strategy, fit, sub)
            outcomes = tuple(outcome_list)
            if not control.prepruning:
                best = argmin_outcome(outcome_list)
                chosen = best.variable if best is not None else None
            if chosen is not None:
                candidate = best_split_point(
                    sub.y, sub.x, sub.column(chosen), control.min_node_size
                )
                if candidate is not None:
                    mask = _route_mask(candidate, sub.column(chosen))
                    split = candidate
                    children = (build(rows[mask], depth + 1), build(rows[~mask], depth + 1))
        return TreeNode(
            id=node_id,
            depth=depth,
            n=rows.shape[0],
            fit=fit,
            p_values={o.variable: o.p_value for o in outcomes},
            outcomes=outcomes,
            split=split,
            children=children,
            rows=np.asarray(rows),
        )

    return build(np.arange(data.n), 0)


def _route_rows(node: TreeNode, data: Dataset, idx: np.ndarray, out: np.ndarray) -> None:
    if node.is_leaf or node.split is None:
        out[idx] = node.id
        return
    col = data.column(node.split.variable)
    if node.split.point is not None:
        mask = col.values[idx] <= node.split.point
    else:
        left = set(node.split.left_levels or ())
        right = set(node.split.right_levels or ())
        labels = [col.levels[int(c)] for c in col.values[idx]]
        known = np.array([lab in left or lab in right for lab in labels], dtype=bool)
        mask = np.array([lab in left for lab in labels], dtype=bool)
        if not known.all():
            # unseen level: follow the child that saw more training rows
            sizes = [child.n for child in node.children]
            go_left = sizes[0] >= sizes[1]
            mask[~known] = go_left
    _route_rows(node.children[0], data, idx[mask], out)
    _route_rows(node.children[1], data, idx[~mask], out)


def partition_labels(tree: TreeNode, data: Dataset) -> np.ndarray:
    """Leaf id reached by every row of ``data``."""
    out = np.empty(data.n, dtype=np.int64)
    _route_rows(tree, data, np.arange(data.n), out)
    return out


def predict_tree(tree: TreeNode, data: Dataset) -> np.ndarray:
    """Evaluate each row's leaf model at its regressor value."""
    labels = partition_labels(tree, data)
    by_id = {node.id: node for node in iter_nodes(tree)}
    out = np.empty(data.n, dtype=float)
    for leaf_id in np.unique(labels):
        mask = labels == leaf_id
        out[mask] = predict(by_id[int(leaf_id)].fit, data.x[mask])
    return out


# ---------------------------------------------------------------------------
# serialization


def _node_to_dict(node: TreeNode) -> dict:
    payload: dict = {
        "id": node.id,
        "depth": node.depth,
        "n": node.n,
        "coefficients": {"intercept": node.fit.beta0, "slope": node.fit.beta1},
        "rss": node.fit.rss,
        "p_values": {k: float(v) for k, v in node.p_values.items()},
    }
    if node.split is None:
        payload["split"] = None
    elif node.split.point is not None:
        payload["split"] = {"variable": node.split.variable, "point": node.split.point}
    else:
        payload["split"] = {
            "variable": node.split.variable,
            "left_levels": list(node.split.left_levels or ()),
            "right_levels": list(node.split.right_levels or ()),
        }
    payload["children"] = [_node_to_dict(child) for child in node.children]
    return payload


def _node_from_dict(payload: dict) -> TreeNode:
    children = tuple(_node_from_dict(c) for c in payload["children"])
    raw_split = payload.get("split")
    split = None
    if raw_split is not None:
        if "point" in raw_split:
            split = Split(variable=raw_split["variable"], point=float(raw_split["point"]))
        else:
            split = Split(
                variable=raw_split["variable"],
                left_levels=tuple(raw_split["left_levels"]),
                right_levels=tuple(raw_split["right_levels"]),
            )
    fit = LinearFit(
        beta0=float(payload["coefficients"]["intercept"]),
        beta1=float(payload["coefficients"]["slope"]),
        n=int(payload["n"]),
        rss=float(payload["rss"]),
    )
    return TreeNode(
        id=int(payload["id"]),
        depth=int(payload["depth"]),
        n=int(payload["n"]),
        fit=fit,
        p_values={k: float(v) for k, v in payload["p_values"].items()},
        split=split,
        children=children,
    )


def _schema_to_dict(schema: CsvSchema) -> dict:
    return {
        "response": schema.response,
        "regressor": schema.regressor,
        "splits": [{"name": n, "kind": k} for n, k in schema.splits],
    }


def _schema_from_dict(payload: dict) -> CsvSchema:
    return CsvSchema(
        response=payload["response"],
        regressor=payload["regressor"],
        splits=tuple((s["name"], s["kind"]) for s in payload["splits"]),
    )


def _strategy_to_dict(strategy: StrategyConfig) -> dict:
    return {
        "use_scores": strategy.use_scores,
        "dichotomize": strategy.dichotomize,
        "split_mode": strategy.split_mode,
        "alpha": strategy.alpha,
        "min_segment": strategy.min_segment,
        "multiplicity": strategy.multiplicity,
    }


def _strategy_from_dict(payload: dict) -> StrategyConfig:
    return StrategyConfig(
        use_scores=bool(payload["use_scores"]),
        dichotomize=bool(payload["dichotomize"]),
        split_mode=payload["split_mode"],
        alpha=float(payload["alpha"]),
        min_segment=payload["min_segment"],
        multiplicity=payload.get("multiplicity", "bonferroni"),
    )


def _control_to_dict(control: GrowControl) -> dict:
    return {
        "alpha": control.alpha,
        "min_node_size": control.min_node_size,
        "min_segment": control.min_segment,
        "max_depth": control.max_depth,
        "prepruning": control.prepruning,
    }


def _control_from_dict(payload: dict) -> GrowControl:
    return GrowControl(
        alpha=float(payload["alpha"]),
        min_node_size=int(payload["min_node_size"]),
        min_segment=payload["min_segment"],
        max_depth=int(payload["max_depth"]),
        prepruning=bool(payload["prepruning"]),
    )


def tree_to_dict(
    tree: TreeNode, schema: CsvSchema, strategy: StrategyConfig, control: GrowControl
) -> dict:
    return {
        "format": TREE_FORMAT,
        "schema": _schema_to_dict(schema),
        "strategy": _strategy_to_dict(strategy),
        "control": _control_to_dict(control),
        "root": _node_to_dict(tree),
    }


def tree_from_dict(payload: dict) -> tuple[TreeNode, CsvSchema, StrategyConfig, GrowControl]:
    if payload.get("format") != TREE_FORMAT:
        raise DataError(f"unsupported tree format {payload.get('format')!r}")
    return (
        _node_from_dict(payload["root"]),
        _schema_from_dict(payload["schema"]),
        _strategy_from_dict(payload["strategy"]),
        _control_from_dict(payload["control"]),
    )


def tree_to_json(
    tree: TreeNode, schema: CsvSchema, strategy: StrategyConfig, control: GrowControl
) -> str:
    return json.dumps(tree_to_dict(tree, schema, strategy, control), indent=2)


def tree_from_json(text: str) -> tuple[TreeNode, CsvSchema, StrategyConfig, GrowControl]:
    return tree_from_dict(json.loads(text))


def format_tree(tree: TreeNode) -> str:
    """Indented one-line-per-node summary for terminal output."""
    lines: list[str] = []

    def visit(node: TreeNode) -> None:
        pad = "  " * node.depth
        model = f"y = {node.fit.beta0:.4g} + {node.fit.beta1:.4g} x"
        if node.split is None:
            tail = "leaf"
        else:
            p = node.p_values.get(node.split.variable)
            shown = "n/a" if p is None else f"{p:.3g}"
            if node.split.point is not None:
                tail = f"split {node.split.variable} <= {node.split.point:.6g} (p={shown})"
            else:
                tail = f"split {node.split.variable} in {list(node.split.left_levels or ())} (p={shown})"
        lines.append(f"{pad}[{node.id}] n={node.n} {model} | {tail}")
        for child in node.children:
            visit(child)

    visit(tree)
    return "\n".join(lines)
