"""Finite scenario trees: the discrete filtered market model.

A tree is read from JSON of the form::

    {"d": 1, "T": 1,
     "nodes": [{"id": 0, "parent": null, "prob": 1, "prices": [0]},
               {"id": 1, "parent": 0, "prob": "0.75", "prices": [1]},
               {"id": 2, "parent": 0, "prob": "0.25", "prices": [-1]}]}

Node ids are arbitrary unique integers. ``prob`` is the branch probability
from the parent and may be a number or a decimal string.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from functools import cached_property
from typing import IO, Dict, List, Optional, Sequence, Union

import numpy as np

from .errors import BrokenFiliation, InvalidProbabilities, LeafNode, MalformedInput

PROB_TOL = 1e-12
DEFAULT_MAX_NODES = 10**6


@dataclass(frozen=True)
class Node:
    id: int
    time: int
    parent: Optional[int]
    branch_prob: float
    prices: tuple


@dataclass(frozen=True)
class ConditionalDist:
    """Law of the price increment over one period, given a node.

    ``increments`` has one row per distinct increment vector; siblings with
    identical increments are merged and their probabilities added.
    """

    node: int
    increments: np.ndarray
    probs: np.ndarray
    children: tuple = ()

    @property
    def d(self) -> int:
        return self.increments.shape[1]

    def mean(self) -> np.ndarray:
        return self.probs @ self.increments


class ScenarioTree:
    """Immutable rooted tree with one price vector per node."""

    def __init__(self, d: int, T: int, nodes: Sequence[Node]):
        self.d = int(d)
        self.T = int(T)
        self.nodes: Dict[int, Node] = {n.id: n for n in nodes}
        roots = [n.id for n in nodes if n.parent is None]
        self.root = roots[0]
        kids: Dict[int, List[int]] = {n.id: [] for n in nodes}
        for n in nodes:
            if n.parent is not None:
                kids[n.parent].append(n.id)
        self._children = {k: tuple(v) for k, v in kids.items()}

    # structure -----------------------------------------------------------
    def children(self, node: int) -> tuple:
        return self._children[node]

    def is_leaf(self, node: int) -> bool:
        return not self._children[node]

    def prices(self, node: int) -> np.ndarray:
        return np.asarray(self.nodes[node].prices, dtype=float)

    @cached_property
    def order(self) -> tuple:
        """Node ids in breadth-first order from the root."""
        out, frontier = [], [self.root]
        while frontier:
            out.extend(frontier)
            frontier = [c for n in frontier for c in self._children[n]]
        return tuple(out)

    @cached_property
    def leaves(self) -> tuple:
        return tuple(n for n in self.order if self.is_leaf(n))

    @cached_property
    def interior(self) -> tuple:
        return tuple(n for n in self.order if not self.is_leaf(n))

    def slice(self, t: int) -> tuple:
        return tuple(n for n in self.order if self.nodes[n].time == t)

    @cached_property
    def path_probs(self) -> Dict[int, float]:
        out = {self.root: 1.0}
        for n in self.order[1:]:
            node = self.nodes[n]
            out[n] = out[node.parent] * node.branch_prob
        return out

    def path(self, node: int) -> List[int]:
        """Node ids from the root down to ``node`` inclusive."""
        out = [node]
        while self.nodes[out[-1]].parent is not None:
            out.append(self.nodes[out[-1]].parent)
        return out[::-1]

    def subtree(self, node: int) -> List[int]:
        out, frontier = [], [node]
        while frontier:
            out.extend(frontier)
            frontier = [c for n in frontier for c in self._children[n]]
        return out

    def increments(self, node: int) -> np.ndarray:
        """Raw per-child increments (one row per child, child order kept)."""
        s0 = self.prices(node)
        return np.array([self.prices(c) - s0 for c in self._children[node]]).reshape(-1, self.d)

    def branch_probs(self, node: int) -> np.ndarray:
        return np.array([self.nodes[c].branch_prob for c in self._children[node]])

    def __len__(self) -> int:
        return len(self.nodes)

    # serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        nodes = []
        for n in self.order:
            node = self.nodes[n]
            nodes.append({
                "id": node.id,
                "parent": node.parent,
                "prob": node.branch_prob,
                "prices": [float(v) for v in node.prices],
            })
        return {"d": self.d, "T": self.T, "nodes": nodes}

    def dumps(self) -> str:
        return json.dumps(self.to_dict())


def conditional_dist(tree: ScenarioTree, node: int, merge: bool = True) -> ConditionalDist:
    if node not in tree.nodes:
        raise MalformedInput(f"unknown node {node}")
    if tree.is_leaf(node):
        raise LeafNode(f"node {node} is a leaf")
    ys = tree.increments(node)
    ps = tree.branch_probs(node)
    kids = tree.children(node)
    if not merge:
        return ConditionalDist(node, ys, ps, tuple((k,) for k in kids))
    rows: List[np.ndarray] = []
    probs: List[float] = []
    groups: List[list] = []
    for y, p, k in zip(ys, ps, kids):
        for j, r in enumerate(rows):
            if np.array_equal(r, y):
                probs[j] += p
                groups[j].append(k)
                break
        else:
            rows.append(y)
            probs.append(float(p))
            groups.append([k])
    return ConditionalDist(node, np.array(rows), np.array(probs), tuple(tuple(g) for g in groups))


def _parse_prob(raw) -> float:
    if isinstance(raw, bool):
        raise MalformedInput("probability must be a number or decimal string")
    if isinstance(raw, (int, float)):
        return float(raw)
    if isinstance(raw, str):
        try:
            return float(raw.strip())
        except ValueError:
            raise MalformedInput(f"bad probability string {raw!r}") from None
    raise MalformedInput(f"bad probability {raw!r}")


def tree_from_dict(data: dict, max_nodes: int = DEFAULT_MAX_NODES) -> ScenarioTree:
    if not isinstance(data, dict):
        raise MalformedInput("tree JSON must be an object")
    for key in ("d", "T", "nodes"):
        if key not in data:
            raise MalformedInput(f"missing field {key!r}")
    d, T, raw_nodes = data["d"], data["T"], data["nodes"]
    if not isinstance(d, int) or isinstance(d, bool) or d < 1:
        raise MalformedInput("d must be a positive integer")
    if not isinstance(T, int) or isinstance(T, bool) or T < 1:
        raise MalformedInput("T must be an integer >= 1")
    if not isinstance(raw_nodes, list) or not raw_nodes:
        raise MalformedInput("nodes must be a nonempty list")
    if len(raw_nodes) > max_nodes:
        raise MalformedInput(f"tree has {len(raw_nodes)} nodes, limit is {max_nodes}")

    parsed = {}
    for raw in raw_nodes:
        if not isinstance(raw, dict) or "id" not in raw or "prices" not in raw:
            raise MalformedInput("each node needs 'id' and 'prices'")
        nid = raw["id"]
        if not isinstance(nid, int) or isinstance(nid, bool):
            raise MalformedInput(f"node id {nid!r} is not an integer")
        if nid in parsed:
            raise MalformedInput(f"duplicate node id {nid}")
        parent = raw.get("parent")
        if parent is not None and (not isinstance(parent, int) or isinstance(parent, bool)):
            raise MalformedInput(f"node {nid}: parent must be an integer or null")
        prices = raw["prices"]
        if not isinstance(prices, list) or len(prices) != d:
            raise MalformedInput(f"node {nid}: prices must be a list of length {d}")
        try:
            vec = tuple(float(v) for v in prices)
        except (TypeError, ValueError):
            raise MalformedInput(f"node {nid}: non-numeric price") from None
        if not all(math.isfinite(v) for v in vec):
            raise MalformedInput(f"node {nid}: non-finite price")
        prob = _parse_prob(raw.get("prob", 1.0 if parent is None else None))
        if not math.isfinite(prob):
            raise InvalidProbabilities(f"node {nid}: non-finite probability")
        parsed[nid] = (parent, prob, vec)

    roots = [k for k, v in parsed.items() if v[0] is None]
    if len(roots) != 1:
        raise BrokenFiliation(f"expected exactly one root, found {len(roots)}")
    root = roots[0]
    if abs(parsed[root][1] - 1.0) > PROB_TOL:
        raise InvalidProbabilities("root probability must be 1")
    for k, (parent, prob, _) in parsed.items():
        if parent is not None and parent not in parsed:
            raise BrokenFiliation(f"node {k}: unknown parent {parent}")
        if k != root and not 0.0 < prob <= 1.0:
            raise InvalidProbabilities(f"node {k}: branch probability {prob} not in (0, 1]")

    kids: Dict[int, list] = {k: [] for k in parsed}
    for k, (parent, _, _) in parsed.items():
        if parent is not None:
            kids[parent].append(k)
    times = {root: 0}
    frontier = [root]
    while frontier:
        nxt = []
        for n in frontier:
            for c in kids[n]:
                times[c] = times[n] + 1
                nxt.append(c)
        frontier = nxt
    if len(times) != len(parsed):
        raise BrokenFiliation("tree contains a cycle or nodes unreachable from the root")
    for k, t in times.items():
        if t > T:
            raise BrokenFiliation(f"node {k} lies at time {t} > T={T}")
        if not kids[k] and t != T:
            raise BrokenFiliation(f"leaf {k} lies at time {t}, expected T={T}")
        if kids[k]:
            total = math.fsum(parsed[c][1] for c in kids[k])
            if abs(total - 1.0) > PROB_TOL:
                raise InvalidProbabilities(f"children of node {k} sum to {total!r}")

    nodes = [Node(k, times[k], p, 1.0 if p is None else pr, v) for k, (p, pr, v) in parsed.items()]
    return ScenarioTree(d, T, nodes)


def load_tree(source: Union[str, bytes, os.PathLike, IO], max_nodes: int = DEFAULT_MAX_NODES) -> ScenarioTree:
    """Parse and validate a tree from a path, a JSON string/bytes, or a stream."""
    if hasattr(source, "read"):
        text = source.read()
    elif isinstance(source, (bytes, bytearray)):
        text = bytes(source)
    elif isinstance(source, str) and source.lstrip().startswith("{"):
        text = source
    else:
        with open(source, "rb") as fh:
            text = fh.read()
    if isinstance(text, (bytes, bytearray)):
        text = text.decode("utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"invalid JSON: {exc}") from None
    return tree_from_dict(data, max_nodes=max_nodes)


def save_tree(tree: ScenarioTree, dest: Union[str, os.PathLike, IO]) -> None:
    text = tree.dumps()
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        with open(dest, "w") as fh:
            fh.write(text)


# builders used by the demos and tests ------------------------------------

def build_tree(d: int, spec: dict, s0: Sequence[float]) -> ScenarioTree:
    """Build a tree from a nested ``{"children": [(prob, prices, spec), ...]}`` dict."""
    nodes = [{"id": 0, "parent": None, "prob": 1, "prices": list(map(float, s0))}]
    depth = [0]

    def walk(nid, sub, t):
        depth[0] = max(depth[0], t)
        for prob, prices, child in sub.get("children", []):
            cid = len(nodes)
            nodes.append({"id": cid, "parent": nid, "prob": prob, "prices": list(map(float, prices))})
            walk(cid, child or {}, t + 1)

    walk(0, spec, 0)
    return tree_from_dict({"d": d, "T": depth[0], "nodes": nodes})


def uniform_tree(d: int, T: int, moves: Sequence[Sequence[float]], probs: Sequence[float],
                     s0: Optional[Sequence[float]] = None) -> ScenarioTree:
    """Non-recombining tree that applies the same additive moves at every node."""
    s0 = np.zeros(d) if s0 is None else np.asarray(s0, dtype=float)
    moves = np.asarray(moves, dtype=float).reshape(len(probs), d)
    nodes = [{"id": 0, "parent": None, "prob": 1, "prices": s0.tolist()}]
    frontier = [(0, s0)]
    for _ in range(T):
        nxt = []
        for nid, s in frontier:
            for p, m in zip(probs, moves):
                cid = len(nodes)
                nodes.append({"id": cid, "parent": nid, "prob": p, "prices": (s + m).tolist()})
                nxt.append((cid, s + m))
        frontier = nxt
    return tree_from_dict({"d": d, "T": T, "nodes": nodes})


def binomial_tree(up: float = 1.0, down: float = -1.0, p_up: float = 0.75, T: int = 1,
                  s0: float = 0.0) -> ScenarioTree:
    """One-asset additive binomial tree; the defaults give the 3/4 vs 1/4 coin market."""
    return uniform_tree(1, T, [[up], [down]], [p_up, 1.0 - p_up], [s0])
