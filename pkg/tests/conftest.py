import sys

import numpy as np
import pytest

from utilmax.geometry import worst_loss

from utilmax import tree_from_dict, validate_tree


def random_na_tree(rng, **kw):
    """Random arbitrage-free tree.

    Increments at each node are recentred on a strictly positive convex
    combination of themselves, which puts 0 in the relative interior of their
    hull. Moves sit on a dyadic grid so that price differences are exact; the
    rare draw that rounding pushes into arbitrage is thrown away. With
    probability ``degenerate`` a 2-d node gets collinear moves.
    """
    while True:
        tree = _draw_tree(rng, **kw)
        if validate_tree(tree, certify=False).na:
            return tree


def _draw_tree(rng, T=None, d=None, max_branches=3, degenerate=0.15):
    T = int(rng.integers(1, 4)) if T is None else T
    d = int(rng.integers(1, 3)) if d is None else d
    nodes = [{"id": 0, "parent": None, "prob": 1, "prices": [round(float(v) * 1024) / 1024 for v in rng.normal(0, 1, d)]}]
    frontier = [0]
    for _ in range(T):
        nxt = []
        for nid in frontier:
            Y = _moves(rng, d, max_branches, degenerate)
            k = len(Y)
            p = rng.dirichlet(np.ones(k) * 2) * 0.9 + 0.1 / k
            p = p / p.sum()
            s = np.asarray(nodes[nid]["prices"])
            for y, pi in zip(Y, p):
                cid = len(nodes)
                nodes.append({"id": cid, "parent": nid, "prob": float(pi), "prices": (s + y).tolist()})
                nxt.append(cid)
        frontier = nxt
    return tree_from_dict({"d": d, "T": T, "nodes": nodes})


def _moves(rng, d, max_branches, degenerate):
    while True:
        k = int(rng.integers(2, max_branches + 1))
        q = rng.dirichlet(np.ones(k) * 2)
        if d == 2 and (k == 2 or rng.random() < degenerate):
            # collinear moves along an exactly representable direction
            a = rng.normal(0, 1, k)
            a = np.round((a - q @ a) * 1024) / 1024  # dyadic, so price sums stay exact
            if min(-a.min(), a.max()) > 0.2:
                return np.outer(a, [1.0, [2.0, -0.5, 0.25][int(rng.integers(3))]])
            continue
        Y = rng.normal(0, 1, (k, d))
        Y = np.round((Y - q @ Y) * 1024) / 1024
        sv = np.linalg.svd(Y, compute_uv=False)
        if sv[min(k - 1, d) - 1] > 0.3 * sv[0] and worst_loss(Y)[0] > 0.2:
            return Y


def random_trees(n, seed=2024, **kw):
    rng = np.random.default_rng(seed)
    return [random_na_tree(rng, **kw) for _ in range(n)]


@pytest.fixture(scope="session")
def na_trees():
    return random_trees(20)


def seed_arbitrage(tree, node, push):
    """Copy of ``tree`` with every increment at ``node`` moved by ``push``.

    Whole child subtrees are translated, so deeper increments are unchanged.
    """
    doc = tree.to_dict()
    push = np.asarray(push, dtype=float)
    moved = set()
    for c in tree.children(node):
        moved.update(tree.subtree(c))
    for raw in doc["nodes"]:
        if raw["id"] in moved:
            raw["prices"] = (np.asarray(raw["prices"], dtype=float) + push).tolist()
    return tree_from_dict(doc)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in mod.LINES:
            terminalreporter.write_line(line)
