"""Post-pruning: cost-complexity path, cross-validated choice, AIC/BIC."""

import math
from dataclasses import replace

import numpy as np
import pytest

from lmtrees.dataset import NUMERIC, Dataset, SplitColumn
from lmtrees.inference import parse_strategy
from lmtrees.linmod import LinearFit
from lmtrees.prune import PruneResult, cost_complexity_path, cv_prune, ic_prune, prune_at
from lmtrees.tree import GrowControl, Split, TreeNode, grow, iter_nodes, leaves


def node(nid, depth, n, rss, children=(), variable="z1"):
    split = Split(variable=variable, point=0.0) if children else None
    return TreeNode(
        id=nid,
        depth=depth,
        n=n,
        fit=LinearFit(beta0=0.0, beta1=0.0, n=n, rss=rss),
        p_values={},
        split=split,
        children=tuple(children),
    )


def stump_data(seed=0, n=400, delta=2.0):
    rng = np.random.default_rng(seed)
    z1 = rng.uniform(-1, 1, n)
    x = rng.uniform(-1, 1, n)
    y = 1.0 + delta * (z1 > 0.0) + x + 0.3 * rng.normal(size=n)
    cols = (
        SplitColumn("z1", NUMERIC, z1),
        SplitColumn("z2", NUMERIC, rng.uniform(-1, 1, n)),
        SplitColumn("z3", NUMERIC, rng.normal(size=n)),
    )
    return Dataset(y, x, cols)


def null_data(seed, n=120):
    rng = np.random.default_rng(seed)
    cols = (
        SplitColumn("z1", NUMERIC, rng.uniform(-1, 1, n)),
        SplitColumn("z2", NUMERIC, rng.normal(size=n)),
    )
    return Dataset(rng.normal(size=n), rng.uniform(-1, 1, n), cols)


# -------------------------------------------------------- cost-complexity path


def test_path_of_hand_built_stump():
    stump = node(0, 0, 40, 10.0, children=(node(1, 1, 20, 3.0), node(2, 1, 20, 2.0)))
    path = cost_complexity_path(stump)
    assert len(path) == 2
    assert path[0][0] == 0.0 and path[0][1] is stump
    # collapsing the root costs (10 - 5) rss for 1 split: knot at 5
    assert path[1][0] == pytest.approx(5.0)
    assert path[1][1].is_leaf


def test_path_of_hand_built_chain_collapses_weakest_first():
    inner = node(1, 1, 20, 12.0, children=(node(2, 2, 10, 2.0), node(3, 2, 10, 3.0)))
    root = node(0, 0, 40, 30.0, children=(inner, node(4, 1, 20, 4.0)))
    path = cost_complexity_path(root)
    # g(inner) = (12-5)/1 = 7, g(root over 3 leaves) = (30-9)/2 = 10.5 -> inner first
    assert [alpha for alpha, _ in path] == pytest.approx([0.0, 7.0, 14.0])
    assert [len(leaves(t)) for _, t in path] == [3, 2, 1]
    # after the first collapse the root's rate is (30 - (12+4)) / 1 = 14
    assert path[1][1].children[0].is_leaf


def all_pruned_costs(tree):
    """Every (rss, leaf_count) achievable by collapsing internal nodes."""
    if tree.is_leaf:
        return [(tree.fit.rss, 1)]
    options = [(tree.fit.rss, 1)]
    for lrss, lcount in all_pruned_costs(tree.children[0]):
        for rrss, rcount in all_pruned_costs(tree.children[1]):
            options.append((lrss + rrss, lcount + rcount))
    return options


def grown_forced_tree(seed=50):
    data = stump_data(seed=seed, n=300, delta=1.0)
    control = GrowControl(alpha=0.05, min_node_size=30, max_depth=3, prepruning=False)
    return grow(data, "ctree", control)


def test_path_subtrees_minimize_penalized_loss():
    tree = grown_forced_tree()
    assert not tree.is_leaf
    path = cost_complexity_path(tree)
    options = all_pruned_costs(tree)
    knots = [alpha for alpha, _ in path]
    for k, (alpha, subtree) in enumerate(path):
        rss = sum(leaf.fit.rss for leaf in leaves(subtree))
        count = len(leaves(subtree))
        # probe at the knot itself and inside the interval to the next knot
        probes = [alpha]
        if k + 1 < len(path):
            nxt = knots[k + 1]
            probes.append(alpha + 0.5 * (nxt - alpha))
        for a in probes:
            best = min(orss + a * ocount for orss, ocount in options)
            assert rss + a * count <= best + 1e-9 * max(1.0, best)
        # among minimizers at the knot, the path tree has the fewest leaves
        best_at_knot = min(orss + alpha * ocount for orss, ocount in options)
        minimal_counts = [
            ocount
            for orss, ocount in options
            if orss + alpha * ocount <= best_at_knot + 1e-9 * max(1.0, best_at_knot)
        ]
        assert count == min(minimal_counts)


def test_path_is_nested_with_nondecreasing_knots():
    tree = grown_forced_tree(seed=51)
    path = cost_complexity_path(tree)
    alphas = [alpha for alpha, _ in path]
    assert alphas[0] == 0.0
    assert all(a2 >= a1 for a1, a2 in zip(alphas, alphas[1:]))
    counts = [len(leaves(t)) for _, t in path]
    assert all(c2 < c1 for c1, c2 in zip(counts, counts[1:]))
    assert counts[-1] == 1
    ids = [set(n.id for n in iter_nodes(t)) for _, t in path]
    for smaller, larger in zip(ids[1:], ids):
        assert smaller <= larger


def test_prune_at_tracks_the_path():
    tree = grown_forced_tree(seed=52)
    path = cost_complexity_path(tree)
    for k, (alpha, subtree) in enumerate(path):
        nxt = path[k + 1][0] if k + 1 < len(path) else alpha + 1.0
        probe = alpha + 0.25 * (nxt - alpha) if nxt > alpha else alpha
        got = prune_at(tree, probe)
        assert {n.id for n in iter_nodes(got)} == {n.id for n in iter_nodes(subtree)}
    assert prune_at(tree, -1e-9) is tree or {n.id for n in iter_nodes(prune_at(tree, -1e-9))} == {
        n.id for n in iter_nodes(tree)
    }
    assert prune_at(tree, 1e12).is_leaf


# -------------------------------------------------------------- cross-validation


def test_cv_prune_keeps_strong_stump():
    data = stump_data(seed=60, n=300, delta=3.0)
    control = GrowControl(alpha=0.05, min_node_size=30, max_depth=3)
    res = cv_prune(data, parse_strategy("mob"), control, folds=5, seed=1)
    assert isinstance(res, PruneResult)
    assert res.method == "cc"
    assert len(leaves(res.tree)) >= 2
    assert res.tree.split.variable == "z1"


def test_cv_prune_mostly_returns_root_under_the_null():
    control = GrowControl(alpha=0.05, min_node_size=25, max_depth=3)
    strategy = parse_strategy("ctree")
    reps = 40
    root_plain = root_one_se = 0
    for rep in range(reps):
        data = null_data(2000 + rep)
        plain = cv_prune(data, strategy, control, folds=5, seed=rep)
        conservative = cv_prune(data, strategy, control, folds=5, seed=rep, one_se=True)
        root_plain += len(leaves(plain.tree)) == 1
        root_one_se += len(leaves(conservative.tree)) == 1
    assert root_plain / reps >= 0.5
    assert root_one_se / reps >= 0.85
    assert root_one_se >= root_plain  # the one-SE rule never prunes less


def test_cv_prune_is_deterministic_given_seed():
    data = stump_data(seed=61, n=240, delta=1.0)
    control = GrowControl(alpha=0.05, min_node_size=25, max_depth=3)
    strategy = parse_strategy("ctree")
    a = cv_prune(data, strategy, control, folds=5, seed=7)
    b = cv_prune(data, strategy, control, folds=5, seed=7)
    assert a.chosen_alpha == b.chosen_alpha
    assert a.alpha_path == b.alpha_path
    assert {n.id for n in iter_nodes(a.tree)} == {n.id for n in iter_nodes(b.tree)}


def test_cv_prune_result_invariants():
    data = stump_data(seed=62, n=300, delta=1.5)
    control = GrowControl(alpha=0.05, min_node_size=30, max_depth=3)
    strategy = parse_strategy("mob")
    res = cv_prune(data, strategy, control, folds=5, seed=3)
    alphas = [row[0] for row in res.alpha_path]
    counts = [row[1] for row in res.alpha_path]
    losses = [row[2] for row in res.alpha_path]
    assert alphas[0] == 0.0
    assert all(a2 >= a1 for a1, a2 in zip(alphas, alphas[1:]))
    assert all(c2 < c1 for c1, c2 in zip(counts, counts[1:]))
    assert counts[-1] == 1
    assert all(isinstance(l, float) and l >= 0.0 for l in losses)
    assert res.chosen_alpha is not None and res.chosen_alpha >= 0.0
    # the returned tree is what pruning the (deterministic) main tree gives
    main = grow(data, strategy, replace(control, prepruning=False))
    expect = prune_at(main, res.chosen_alpha)
    assert {n.id for n in iter_nodes(res.tree)} == {n.id for n in iter_nodes(expect)}


def test_cv_prune_validates_folds():
    data = stump_data(seed=63, n=120)
    with pytest.raises(ValueError):
        cv_prune(data, parse_strategy("ctree"), GrowControl(), folds=1)


# -------------------------------------------------------------------- AIC / BIC


def neg2ll(rss, n):
    return n * (math.log(2.0 * math.pi * rss / n) + 1.0)


def test_ic_prune_hand_stump_keep_and_collapse():
    # split kept: subtree fits much better than the pooled leaf
    good = node(0, 0, 40, 40.0, children=(node(1, 1, 20, 5.0), node(2, 1, 20, 5.0)))
    kept = ic_prune(good, criterion="aic")
    assert not kept.tree.is_leaf
    want = neg2ll(5.0, 20) * 2 + 2.0 * (3 * 2 + 1)
    assert kept.score == pytest.approx(want)
    assert kept.method == "aic"

    # split dropped: children fit exactly as poorly as the pooled leaf
    flat = node(0, 0, 40, 40.0, children=(node(1, 1, 20, 20.0), node(2, 1, 20, 20.0)))
    dropped = ic_prune(flat, criterion="aic")
    assert dropped.tree.is_leaf
    assert dropped.score == pytest.approx(neg2ll(40.0, 40) + 2.0 * 3)


def test_ic_prune_threshold_matches_hand_arithmetic():
    # keep the split exactly when neg2ll(children) + 2*(6+1) < neg2ll(root) + 2*3
    root_rss, n = 40.0, 40
    bound = neg2ll(root_rss, n) - 8.0  # subtree neg2ll must beat this
    # child rss r on each side: subtree neg2ll = 2 * neg2ll(r, 20); solve near the edge
    r_keep, r_drop = 14.0, 17.0
    assert 2 * neg2ll(r_keep, 20) + 14.0 < neg2ll(root_rss, n) + 6.0
    assert 2 * neg2ll(r_drop, 20) + 14.0 > neg2ll(root_rss, n) + 6.0
    keep = node(0, 0, n, root_rss, children=(node(1, 1, 20, r_keep), node(2, 1, 20, r_keep)))
    drop = node(0, 0, n, root_rss, children=(node(1, 1, 20, r_drop), node(2, 1, 20, r_drop)))
    assert not ic_prune(keep, "aic").tree.is_leaf
    assert ic_prune(drop, "aic").tree.is_leaf
    assert bound == pytest.approx(neg2ll(root_rss, n) - 8.0)


def test_ic_prune_zero_rss_split_is_retained():
    exact = node(0, 0, 40, 25.0, children=(node(1, 1, 20, 0.0), node(2, 1, 20, 0.0)))
    res = ic_prune(exact, "aic")
    assert not res.tree.is_leaf
    assert res.score == -math.inf


def test_bic_prunes_at_least_as_hard_as_aic():
    data = stump_data(seed=70, n=400, delta=0.8)
    control = GrowControl(alpha=0.05, min_node_size=30, max_depth=4, prepruning=False)
    tree = grow(data, "ctree", control)
    aic = ic_prune(tree, "aic")
    bic = ic_prune(tree, "bic")
    assert bic.method == "bic"
    assert len(leaves(bic.tree)) <= len(leaves(aic.tree))
    # both results are genuine subtrees of the input
    full_ids = {n.id for n in iter_nodes(tree)}
    for res in (aic, bic):
        assert {n.id for n in iter_nodes(res.tree)} <= full_ids
        assert res.chosen_alpha is None


def test_ic_prune_is_idempotent_and_validates_criterion():
    tree = grown_forced_tree(seed=71)
    once = ic_prune(tree, "aic")
    twice = ic_prune(once.tree, "aic")
    assert {n.id for n in iter_nodes(twice.tree)} == {n.id for n in iter_nodes(once.tree)}
    assert twice.score == pytest.approx(once.score)
    with pytest.raises(ValueError):
        ic_prune(tree, "aicc")
