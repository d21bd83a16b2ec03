"""Self-contained classic classifiers: KNN, multinomial logistic regression,
CART decision tree, and a bootstrap-bagged random forest.

All are deterministic under their seed and usable on raw pair vectors or on
frozen latent vectors. Probability rows always sum to 1; predicted labels
break ties toward the lowest class index.
"""

from dataclasses import dataclass, field

import numpy as np

from .checkpoint import load_tensors, save_tensors
from .errors import CheckpointError, ConfigError, DimensionError

BASELINE_KINDS = ("knn", "logreg", "tree", "forest")


@dataclass
class BaselineHyper:
    knn_k: int = 5
    logreg_lr: float = 0.1
    logreg_l2: float = 1e-4
    logreg_iters: int = 500
    tree_max_depth: int = 12
    tree_min_leaf: int = 2
    forest_trees: int = 100

    def to_dict(self):
        return {f: getattr(self, f) for f in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown baseline fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TreeArrays:
    """Flat binary-tree storage: feature < 0 marks a leaf; children index
    into the same arrays; hist rows are leaf class histograms (also filled
    for internal nodes)."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    hist: np.ndarray

    @property
    def n_nodes(self):
        return self.feature.size

    def depth(self):
        def node_depth(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(node_depth(self.left[i]), node_depth(self.right[i]))

        return node_depth(0)


@dataclass
class BaselineModel:
    kind: str
    n_classes: int
    n_features: int
    hyper: BaselineHyper
    state: dict = field(default_factory=dict)


def _validate_xy(x, y, n_classes):
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise DimensionError(f"X {x.shape} and y {y.shape} disagree")
    if x.shape[0] == 0:
        raise ConfigError("empty training set")
    if n_classes < 2:
        raise ConfigError("need at least 2 classes")
    if y.min() < 0 or y.max() >= n_classes:
        raise ConfigError(f"labels outside [0, {n_classes})")
    return x, y


def _gini_from_counts(counts, n):
    frac = counts / n
    return 1.0 - (frac * frac).sum()


def _best_split(x, y, indices, n_classes, feature_ids, min_leaf):
    """Greedy Gini split over the given features; ties break toward the
    lowest (feature, threshold). Returns (cost, feature, threshold) or None."""
    best = None
    n = indices.size
    for f in feature_ids:
        vals = x[indices, f]
        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        sy = y[indices[order]]
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), sy] = 1.0
        prefix = onehot.cumsum(axis=0)
        totals = prefix[-1]
        # split after position i (left = first i+1 rows); valid where the
        # value changes and both children have >= min_leaf rows
        cut = np.arange(min_leaf - 1, n - min_leaf)
        if cut.size == 0:
            continue
        changed = sv[cut] < sv[cut + 1]
        cut = cut[changed]
        if cut.size == 0:
            continue
        n_left = (cut + 1).astype(np.float64)
        n_right = n - n_left
        left_counts = prefix[cut]
        right_counts = totals - left_counts
        gini_left = 1.0 - ((left_counts / n_left[:, None]) ** 2).sum(axis=1)
        gini_right = 1.0 - ((right_counts / n_right[:, None]) ** 2).sum(axis=1)
        cost = (n_left * gini_left + n_right * gini_right) / n
        j = int(np.argmin(cost))
        threshold = 0.5 * (sv[cut[j]] + sv[cut[j] + 1])
        cand = (float(cost[j]), int(f), float(threshold))
        if best is None or cand < best:
            best = cand
    return best


def _grow_tree(x, y, n_classes, max_depth, min_leaf, mtry=None, rng=None):
    feature_arr, threshold_arr, left_arr, right_arr, hist_arr = [], [], [], [], []

    def leaf_hist(indices):
        counts = np.bincount(y[indices], minlength=n_classes).astype(np.float64)
        return counts / indices.size

    def add_node():
        feature_arr.append(-1)
        threshold_arr.append(np.nan)
        left_arr.append(-1)
        right_arr.append(-1)
        hist_arr.append(None)
        return len(feature_arr) - 1

    def build(indices, depth):
        node = add_node()
        hist_arr[node] = leaf_hist(indices)
        counts = np.bincount(y[indices], minlength=n_classes)
        pure = counts.max() == indices.size
        if pure or depth >= max_depth or indices.size < 2 * min_leaf:
            return node
        if mtry is None:
            feature_ids = np.arange(x.shape[1])
        else:
            feature_ids = np.sort(rng.choice(x.shape[1], size=mtry, replace=False))
        split = _best_split(x, y, indices, n_classes, feature_ids, min_leaf)
        if split is None:
            return node
        cost, f, threshold = split
        if cost >= _gini_from_counts(counts.astype(np.float64), indices.size) - 1e-12:
            return node  # no impurity decrease
        mask = x[indices, f] <= threshold
        feature_arr[node] = f
        threshold_arr[node] = threshold
        left_arr[node] = build(indices[mask], depth + 1)
        right_arr[node] = build(indices[~mask], depth + 1)
        return node

    build(np.arange(x.shape[0]), 0)
    return TreeArrays(
        feature=np.array(feature_arr, dtype=np.int64),
        threshold=np.array(threshold_arr, dtype=np.float64),
        left=np.array(left_arr, dtype=np.int64),
        right=np.array(right_arr, dtype=np.int64),
        hist=np.array(hist_arr, dtype=np.float64),
    )


def _tree_probs(tree, x):
    """Vectorized root-to-leaf walk; returns leaf histogram rows."""
    node = np.zeros(x.shape[0], dtype=np.int64)
    active = tree.feature[node] >= 0
    while active.any():
        rows = np.nonzero(active)[0]
        cur = node[rows]
        go_left = x[rows, tree.feature[cur]] <= tree.threshold[cur]
        node[rows] = np.where(go_left, tree.left[cur], tree.right[cur])
        active = tree.feature[node] >= 0
    return tree.hist[node]


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def fit_baseline(kind, x, y, n_classes, hyper=None, seed=0):
    """Fit one classic model; deterministic under seed (forest bootstrap and
    per-split feature subsampling derive from it)."""
    if kind not in BASELINE_KINDS:
        raise ConfigError(f"unknown baseline kind {kind!r}; choices {BASELINE_KINDS}")
    x, y = _validate_xy(x, y, n_classes)
    if hyper is None:
        hyper = BaselineHyper()
    model = BaselineModel(kind=kind, n_classes=n_classes, n_features=x.shape[1],
                          hyper=hyper)

    if kind == "knn":
        if hyper.knn_k < 1:
            raise ConfigError("knn_k must be >= 1")
        model.state = {"x": x.copy(), "y": y.copy()}
        return model

    if kind == "logreg":
        w = np.zeros((n_classes, x.shape[1]))
        b = np.zeros(n_classes)
        n = x.shape[0]
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), y] = 1.0
        for _ in range(hyper.logreg_iters):
            probs = _softmax(x @ w.T + b)
            err = (probs - onehot) / n
            w -= hyper.logreg_lr * (err.T @ x + hyper.logreg_l2 * w)
            b -= hyper.logreg_lr * err.sum(axis=0)
        model.state = {"w": w, "b": b}
        return model

    if kind == "tree":
        tree = _grow_tree(x, y, n_classes, hyper.tree_max_depth, hyper.tree_min_leaf)
        model.state = {"tree": tree}
        return model

    # forest: bootstrap bag per tree, sqrt(D) features per split
    mtry = max(1, int(np.sqrt(x.shape[1])))
    trees = []
    for child in np.random.SeedSequence(seed).spawn(hyper.forest_trees):
        rng = np.random.default_rng(child)
        boot = rng.integers(0, x.shape[0], size=x.shape[0])
        trees.append(_grow_tree(x[boot], y[boot], n_classes,
                                hyper.tree_max_depth, hyper.tree_min_leaf,
                                mtry=mtry, rng=rng))
    model.state = {"trees": trees, "mtry": mtry}
    return model


def predict_baseline(model, x):
    """(labels, probability matrix); rows sum to 1, argmax breaks ties low."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise DimensionError(
            f"X has width {x.shape[1] if x.ndim == 2 else '?'}, expected {model.n_features}"
        )
    if model.kind == "knn":
        train_x, train_y = model.state["x"], model.state["y"]
        k = min(model.hyper.knn_k, train_x.shape[0])
        # squared euclidean; monotone-equivalent to euclidean and cheaper
        d2 = (x * x).sum(axis=1)[:, None] - 2.0 * (x @ train_x.T) \
            + (train_x * train_x).sum(axis=1)[None, :]
        nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
        probs = np.zeros((x.shape[0], model.n_classes))
        for c in range(model.n_classes):
            probs[:, c] = (train_y[nearest] == c).sum(axis=1) / k
    elif model.kind == "logreg":
        probs = _softmax(x @ model.state["w"].T + model.state["b"])
    elif model.kind == "tree":
        probs = _tree_probs(model.state["tree"], x)
    else:
        probs = np.zeros((x.shape[0], model.n_classes))
        for tree in model.state["trees"]:
            probs += _tree_probs(tree, x)
        probs /= len(model.state["trees"])
    return probs.argmax(axis=1), probs


def _tree_tensors(prefix, tree):
    return [
        (f"{prefix}.feature", tree.feature.astype(np.float64)),
        (f"{prefix}.threshold", tree.threshold),
        (f"{prefix}.left", tree.left.astype(np.float64)),
        (f"{prefix}.right", tree.right.astype(np.float64)),
        (f"{prefix}.hist", tree.hist),
    ]


def _tree_from_tensors(tensors, prefix):
    return TreeArrays(
        feature=tensors[f"{prefix}.feature"].astype(np.int64),
        threshold=tensors[f"{prefix}.threshold"],
        left=tensors[f"{prefix}.left"].astype(np.int64),
        right=tensors[f"{prefix}.right"].astype(np.int64),
        hist=tensors[f"{prefix}.hist"],
    )


def save_baseline(manifest_path, blob_path, model):
    """Serialize with the shared manifest+blob scheme (integer columns as
    exact float64)."""
    named = []
    if model.kind == "knn":
        named = [("knn.x", model.state["x"]),
                 ("knn.y", model.state["y"].astype(np.float64))]
    elif model.kind == "logreg":
        named = [("logreg.w", model.state["w"]), ("logreg.b", model.state["b"])]
    elif model.kind == "tree":
        named = _tree_tensors("tree", model.state["tree"])
    else:
        for i, tree in enumerate(model.state["trees"]):
            named.extend(_tree_tensors(f"forest.{i}", tree))
    header = {
        "kind": "adep-baseline",
        "baseline": model.kind,
        "n_classes": model.n_classes,
        "n_features": model.n_features,
        "hyper": model.hyper.to_dict(),
        "n_trees": len(model.state.get("trees", [])) or None,
        "mtry": model.state.get("mtry"),
    }
    return save_tensors(manifest_path, blob_path, header, named)


def load_baseline(manifest_path, blob_path):
    manifest, tensors = load_tensors(manifest_path, blob_path)
    if manifest.get("kind") != "adep-baseline":
        raise CheckpointError(f"checkpoint kind {manifest.get('kind')!r} is not a baseline")
    model = BaselineModel(
        kind=manifest["baseline"],
        n_classes=manifest["n_classes"],
        n_features=manifest["n_features"],
        hyper=BaselineHyper.from_dict(manifest["hyper"]),
    )
    if model.kind == "knn":
        model.state = {"x": tensors["knn.x"], "y": tensors["knn.y"].astype(np.int64)}
    elif model.kind == "logreg":
        model.state = {"w": tensors["logreg.w"], "b": tensors["logreg.b"]}
    elif model.kind == "tree":
        model.state = {"tree": _tree_from_tensors(tensors, "tree")}
    else:
        trees = [_tree_from_tensors(tensors, f"forest.{i}")
                 for i in range(manifest["n_trees"])]
        model.state = {"trees": trees, "mtry": manifest.get("mtry")}
    return model
