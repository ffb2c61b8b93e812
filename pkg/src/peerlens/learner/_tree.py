"""Flat-array regression trees grown by exact greedy search on gradient statistics.

Both ensemble modes share this grower. A split is scored with the
second-order gain

    G_L^2 / (H_L + lam) + G_R^2 / (H_R + lam) - G^2 / (H + lam)

For the forest, ``g = y``, ``h = 1`` and ``lam = 0``; the gain is then half
the count-weighted Gini decrease, so the best-gain split is the best-Gini
split. Rows go left when ``x < threshold``; missing values go the side
learned at training time.
"""

from __future__ import annotations

from collections.abc import Callable, Iterator
from dataclasses import dataclass

import numpy as np

LEAF = -1


@dataclass(frozen=True)
class Split:
    gain: float
    feature: int
    threshold: float
    missing_left: bool


def _best_sorted(xs: np.ndarray, gs: np.ndarray, hs: np.ndarray, features: np.ndarray,
                 G: float, H: float, lam: float, min_child_weight: float) -> Split | None:
    """Best split given per-feature sorted values (missing as +inf) and statistics.

    ``xs``, ``gs`` and ``hs`` have one row per entry of ``features``.
    """
    k, m = xs.shape
    if m < 2 or k == 0:
        return None
    cg = np.cumsum(gs, axis=1)
    ch = np.cumsum(hs, axis=1)
    n_finite = np.isfinite(xs).sum(axis=1)
    last = np.maximum(n_finite - 1, 0)
    rows = np.arange(k)
    Gm = np.where(n_finite > 0, G - cg[rows, last], G)
    Hm = np.where(n_finite > 0, H - ch[rows, last], H)
    distinct = (xs[:, 1:] > xs[:, :-1]) & np.isfinite(xs[:, 1:])
    fi, pos = np.nonzero(distinct)  # row-major: feature, then ascending threshold
    if fi.size == 0:
        return None
    GL = np.empty((fi.size, 2))
    HL = np.empty((fi.size, 2))
    GL[:, 1], HL[:, 1] = cg[fi, pos], ch[fi, pos]  # missing right
    GL[:, 0], HL[:, 0] = GL[:, 1] + Gm[fi], HL[:, 1] + Hm[fi]  # missing left
    HR = H - HL
    ok = (HL >= min_child_weight) & (HR >= min_child_weight)
    with np.errstate(divide="ignore", invalid="ignore"):
        gains = GL * GL / (HL + lam) + (G - GL) ** 2 / (HR + lam) - G * G / (H + lam)
    gains = np.where(ok, gains, -np.inf)
    best = gains.max()
    if not np.isfinite(best):
        return None
    tol = 1e-12 * max(1.0, abs(best))
    flat = int(np.flatnonzero(gains.ravel() >= best - tol)[0])
    c, direction = divmod(flat, 2)
    f, p = fi[c], pos[c]
    lo, hi = xs[f, p], xs[f, p + 1]
    thr = lo / 2.0 + hi / 2.0
    if not lo < thr <= hi:
        thr = hi
    return Split(float(gains[c, direction]), int(features[f]), float(thr), direction == 0)


def best_split(Xn: np.ndarray, g: np.ndarray, h: np.ndarray, features: np.ndarray,
               lam: float, min_child_weight: float) -> Split | None:
    """Exhaustive best split of one node over ``features`` (ascending order).

    Candidates are midpoints between consecutive distinct values, each tried
    with missing rows sent left and right. Ties resolve to the lowest
    feature, then the lowest threshold, then missing-left.
    """
    features = np.asarray(features, dtype=np.int64)
    cols = np.where(np.isnan(Xn[:, features]), np.inf, Xn[:, features]).T
    order = np.argsort(cols, axis=1, kind="stable")
    return _best_sorted(np.take_along_axis(cols, order, axis=1), g[order], h[order], features,
                        float(g.sum()), float(h.sum()), lam, min_child_weight)


@dataclass(frozen=True)
class Tree:
    """Binary tree in parallel arrays; node 0 is the root, leaves have ``feature == -1``.

    ``grad`` and ``cover`` hold the gradient and hessian sums of the training
    rows reaching each node (positive count and row count for forest trees).
    """

    feature: np.ndarray
    threshold: np.ndarray
    missing_left: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    grad: np.ndarray
    cover: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int((self.feature == LEAF).sum())

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):  # children always have larger ids
            if self.feature[i] != LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.feature[node] != LEAF)
        while active.size:
            cur = node[active]
            x = X[active, self.feature[cur]]
            go_left = np.where(np.isnan(x), self.missing_left[cur], x < self.threshold[cur])
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = active[self.feature[node[active]] != LEAF]
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    # nested-node form used by the model file

    def to_node(self, i: int = 0, counts: bool = False) -> dict:
        if self.feature[i] == LEAF:
            node = {"leaf": float(self.value[i]), "cover": float(self.cover[i])}
            if counts:
                node["counts"] = [float(self.cover[i] - self.grad[i]), float(self.grad[i])]
            else:
                node["grad"] = float(self.grad[i])
            return node
        return {
            "feature": int(self.feature[i]),
            "threshold": float(self.threshold[i]),
            "missing": "left" if self.missing_left[i] else "right",
            "gain": float(self.gain[i]),
            "grad": float(self.grad[i]),
            "cover": float(self.cover[i]),
            "left": self.to_node(int(self.left[i]), counts),
            "right": self.to_node(int(self.right[i]), counts),
        }

    @classmethod
    def from_node(cls, root: dict) -> "Tree":
        rows: list[list] = []

        def walk(node) -> int:
            i = len(rows)
            rows.append(None)
            if "leaf" in node:
                grad = node["counts"][1] if "counts" in node else node["grad"]
                rows[i] = [LEAF, 0.0, True, LEAF, LEAF, float(node["leaf"]), 0.0, float(grad), float(node["cover"])]
                return i
            thr = float(node["threshold"])
            if not np.isfinite(thr):
                raise ValueError("non-finite split threshold")
            if node["missing"] not in ("left", "right"):
                raise ValueError(f"bad missing direction {node['missing']!r}")
            l = walk(node["left"])
            r = walk(node["right"])
            rows[i] = [int(node["feature"]), thr, node["missing"] == "left", l, r, 0.0,
                       float(node["gain"]), float(node["grad"]), float(node["cover"])]
            return i

        walk(root)
        return _from_rows(rows)


def _from_rows(rows: list[list]) -> Tree:
    cols = list(zip(*rows))
    return Tree(np.array(cols[0], dtype=np.int64), np.array(cols[1], dtype=float),
                np.array(cols[2], dtype=bool), np.array(cols[3], dtype=np.int64),
                np.array(cols[4], dtype=np.int64), np.array(cols[5], dtype=float),
                np.array(cols[6], dtype=float), np.array(cols[7], dtype=float),
                np.array(cols[8], dtype=float))


def grow_tree(X: np.ndarray, y: np.ndarray, g: np.ndarray, h: np.ndarray, *, lam: float,
              max_depth: int | None, min_child_weight: float,
              leaf_value: Callable[[float, float], float],
              feature_blocks: Callable[[], Iterator[np.ndarray]],
              stop_when_pure: bool) -> Tree:
    """Depth-first growth; node ids are assigned left subtree first.

    ``feature_blocks`` yields candidate feature arrays for a node; the next
    block is tried only when the previous one has no valid split. A
    split is taken when its gain is positive, or zero in a node whose labels
    are mixed (a zero-gain first cut is what makes XOR learnable).
    """
    rows: list[list] = []
    d = X.shape[1]
    XT = np.ascontiguousarray(np.where(np.isnan(X), np.inf, X).T)
    # per-feature sorted row ids, partitioned stably into the children
    stack = [(np.argsort(XT, axis=1, kind="stable"), 0, -1, False)]
    go_left_all = np.zeros(len(y), dtype=bool)
    while stack:
        order, depth, parent, is_right = stack.pop()
        i = len(rows)
        if parent >= 0:
            rows[parent][4 if is_right else 3] = i
        idx = order[0]
        G, H = float(g[idx].sum()), float(h[idx].sum())
        yi = y[idx]
        mixed = bool(yi.min() != yi.max())
        split = None
        if (max_depth is None or depth < max_depth) and (mixed or not stop_when_pure) and len(idx) > 1:
            for block in feature_blocks():
                sub = order[block]
                split = _best_sorted(XT[block[:, None], sub], g[sub], h[sub], block, G, H,
                                     lam, min_child_weight)
                if split is not None:
                    break
            if split is not None:
                tol = 1e-12 * max(1.0, G * G / (H + lam) if H + lam > 0 else 1.0)
                if not (split.gain > tol or (split.gain >= -tol and mixed)):
                    split = None
        if split is None:
            rows.append([LEAF, 0.0, True, LEAF, LEAF, leaf_value(G, H), 0.0, G, H])
            continue
        rows.append([split.feature, split.threshold, split.missing_left, LEAF, LEAF, 0.0,
                     max(split.gain, 0.0), G, H])
        x = X[idx, split.feature]
        go_left_all[idx] = np.where(np.isnan(x), split.missing_left, x < split.threshold)
        sel = go_left_all[order]
        n_left = int(sel[0].sum())
        left, right = order[sel].reshape(d, n_left), order[~sel].reshape(d, len(idx) - n_left)
        # push right first so the left child gets the next id
        stack.append((right, depth + 1, i, True))
        stack.append((left, depth + 1, i, False))
    return _from_rows(rows)
