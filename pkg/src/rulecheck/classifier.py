"""Gradient-boosted decision trees for per-principle violation prediction.

A compact second-order boosting learner for binary logistic loss on the
dense feature vectors from :mod:`rulecheck.features`, plus the repeated
stratified cross-validation and grid search used to tune it.

Split search is exact: every midpoint between consecutive distinct values
of a feature is a candidate.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from sklearn.model_selection import RepeatedStratifiedKFold

from .checkers import PRINCIPLES
from .features import FEATURE_NAMES, SCHEMA_HASH, FeatureVector, feature_matrix, vectorize

MODEL_FORMAT = "rulecheck-gbdt/1"
LABEL_COLUMNS = ("sid", "rev", "group", *PRINCIPLES)

PAPER_GRID_AXES = {
    "eta": (0.01, 0.1, 0.3),
    "feature_sampling_rate": (0.25, 0.5, 0.75, 1.0),
    "sample_weight_scaling": (0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 10.0),
    "max_depth": (1, 3),
    "min_child_weight": (1.0,),
    "gamma": (0.0, 0.1),
    "lambda_l2": (0.0, 0.01, 0.1),
    "alpha_l1": (0.0, 0.01, 0.1),
}
PAPER_N_TREES = 1000

EARLY_EXIT_TOL = 1e-12
EARLY_EXIT_PATIENCE = 10


class DegenerateClassError(ValueError):
    """Training or evaluation data lacks one of the two classes."""


class SchemaMismatchError(ValueError):
    """Model was trained on a different feature layout."""


@dataclass(frozen=True)
class HyperParams:
    n_trees: int = PAPER_N_TREES
    eta: float = 0.3
    feature_sampling_rate: float = 1.0
    sample_weight_scaling: float = 1.0
    max_depth: int = 3
    min_child_weight: float = 1.0
    gamma: float = 0.0
    lambda_l2: float = 0.1
    alpha_l1: float = 0.0

    def __post_init__(self):
        if self.n_trees < 0 or self.max_depth < 0:
            raise ValueError("n_trees and max_depth must be non-negative")
        if self.eta <= 0 or not 0 < self.feature_sampling_rate <= 1:
            raise ValueError("eta must be positive and feature_sampling_rate in (0, 1]")
        if self.sample_weight_scaling <= 0:
            raise ValueError("sample_weight_scaling must be positive")
        if min(self.min_child_weight, self.gamma, self.lambda_l2, self.alpha_l1) < 0:
            raise ValueError("regularization parameters must be non-negative")

    def within_paper_grid(self) -> bool:
        """True when every tuned value lies inside the paper grid's bounds."""
        for name, axis in PAPER_GRID_AXES.items():
            if not min(axis) <= getattr(self, name) <= max(axis):
                return False
        return self.n_trees <= PAPER_N_TREES


def paper_grid(n_trees: int = PAPER_N_TREES) -> list[HyperParams]:
    """The full 3024-point grid, in axis order."""
    names = list(PAPER_GRID_AXES)
    return [
        HyperParams(n_trees=n_trees, **dict(zip(names, values)))
        for values in itertools.product(*PAPER_GRID_AXES.values())
    ]


def quick_grid(n_trees: int = PAPER_N_TREES) -> list[HyperParams]:
    """27-point desk-scale grid: eta x lambda x weight-scaling corners."""
    return [
        HyperParams(
            n_trees=n_trees,
            eta=eta,
            lambda_l2=lam,
            sample_weight_scaling=w,
            feature_sampling_rate=1.0,
            max_depth=3,
            min_child_weight=1.0,
            gamma=0.0,
            alpha_l1=0.0,
        )
        for eta in PAPER_GRID_AXES["eta"]
        for lam in PAPER_GRID_AXES["lambda_l2"]
        for w in (0.1, 1.0, 10.0)
    ]


GRID_PRESETS = {"paper": paper_grid, "quick": quick_grid}


@dataclass
class Node:
    leaf_value: float = 0.0
    feature: int | None = None
    threshold: float | None = None
    left: "Node | None" = None
    right: "Node | None" = None
    gain: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"leaf_value": self.leaf_value}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Node":
        if "leaf_value" in data:
            return cls(leaf_value=float(data["leaf_value"]))
        return cls(
            feature=int(data["feature"]),
            threshold=float(data["threshold"]),
            left=cls.from_dict(data["left"]),
            right=cls.from_dict(data["right"]),
        )

    def predict(self, X: np.ndarray) -> np.ndarray:
        if self.is_leaf:
            return np.full(X.shape[0], self.leaf_value)
        out = np.empty(X.shape[0])
        go_left = X[:, self.feature] < self.threshold
        out[go_left] = self.left.predict(X[go_left])
        out[~go_left] = self.right.predict(X[~go_left])
        return out

    def leaves(self) -> list["Node"]:
        if self.is_leaf:
            return [self]
        return self.left.leaves() + self.right.leaves()

    def depth(self) -> int:
        return 0 if self.is_leaf else 1 + max(self.left.depth(), self.right.depth())


@dataclass(frozen=True)
class BoostedModel:
    trees: tuple[Node, ...]
    learning_rate: float
    base_score: float = 0.0
    trained_on: str = SCHEMA_HASH
    principle: str = ""
    hyperparams: HyperParams | None = None
    train_loss: tuple[float, ...] = field(default=(), compare=False)

    def margin(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(X)
        return out

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(self.margin(X))

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "principle": self.principle,
            "schema_hash": self.trained_on,
            "feature_names": list(FEATURE_NAMES),
            "learning_rate": self.learning_rate,
            "base_score": self.base_score,
            "hyperparams": None if self.hyperparams is None else asdict(self.hyperparams),
            "trees": [tree.to_dict() for tree in self.trees],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "BoostedModel":
        if data.get("format") != MODEL_FORMAT:
            raise ValueError(f"unsupported model format {data.get('format')!r}")
        hp = data.get("hyperparams")
        return cls(
            trees=tuple(Node.from_dict(t) for t in data["trees"]),
            learning_rate=float(data["learning_rate"]),
            base_score=float(data["base_score"]),
            trained_on=data["schema_hash"],
            principle=data.get("principle", ""),
            hyperparams=None if hp is None else HyperParams(**hp),
        )


def save_model(model: BoostedModel, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(model.to_dict(), handle, indent=2, sort_keys=True)
        handle.write("\n")


def load_model(path: str | os.PathLike) -> BoostedModel:
    with open(path, encoding="utf-8") as handle:
        return BoostedModel.from_dict(json.load(handle))


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _threshold_l1(G, alpha):
    return np.sign(G) * np.maximum(np.abs(G) - alpha, 0.0)


def leaf_weight(G: float, H: float, hp: HyperParams) -> float:
    """Newton step for one leaf; zero when the hessian sum is below min_child_weight."""
    if H < hp.min_child_weight or H <= 0.0:
        return 0.0
    return float(-_threshold_l1(G, hp.alpha_l1) / (H + hp.lambda_l2))


def _score(G, H, hp: HyperParams):
    G = np.asarray(G, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    denom = H + hp.lambda_l2
    ok = (H >= hp.min_child_weight) & (denom > 0)
    safe = np.where(ok, denom, 1.0)
    return np.where(ok, _threshold_l1(G, hp.alpha_l1) ** 2 / safe, 0.0)


def split_gain(GL, HL, GR, HR, hp: HyperParams):
    """Loss reduction of a split (no 1/2 factor; compared directly against gamma)."""
    return _score(GL, HL, hp) + _score(GR, HR, hp) - _score(GL + GR, HL + HR, hp)


class _SplitTable:
    """Candidate splits of a dense matrix, built once per fit.

    ``goes_left[i, c]`` is 1.0 when sample ``i`` falls left of candidate
    ``c``; left-side gradient/hessian/count sums for every candidate of a
    node are then a single matrix product.
    """

    def __init__(self, X: np.ndarray):
        feats, thrs = [], []
        for j in range(X.shape[1]):
            uniq = np.unique(X[:, j])
            feats.extend([j] * (len(uniq) - 1))
            thrs.extend((uniq[:-1] + uniq[1:]) / 2.0)
        self.feature = np.asarray(feats, dtype=np.int64)
        self.threshold = np.asarray(thrs, dtype=np.float64)
        self.goes_left = np.ascontiguousarray(
            (X[:, self.feature] < self.threshold).astype(np.float64)
        )

    @property
    def size(self) -> int:
        return self.feature.size


def _best_split(idx, ghn, table: _SplitTable, allowed: np.ndarray, hp: HyperParams, G, H):
    """Best (feature, threshold, gain, GL, HL) for a node, or None."""
    if table.size == 0 or idx.size < 2:
        return None
    if idx.size == ghn.shape[0]:
        node_ghn, left = ghn, table.goes_left
    else:
        node_ghn, left = ghn[idx], table.goes_left[idx]
    GL, HL, NL = node_ghn.T @ left
    GR, HR = G - GL, H - HL
    mcw = hp.min_child_weight
    valid = allowed & (NL >= 0.5) & (NL <= idx.size - 0.5) & (HL >= mcw) & (HR >= mcw)
    if hp.lambda_l2 <= 0.0:
        valid &= (HL > 0.0) & (HR > 0.0)
    if not valid.any():
        return None
    if hp.alpha_l1 > 0.0:
        gains = split_gain(GL, HL, GR, HR, hp)
    else:
        lam = hp.lambda_l2
        with np.errstate(divide="ignore", invalid="ignore"):
            gains = GL * GL / (HL + lam) + GR * GR / (HR + lam)
        gains -= float(_score(G, H, hp))
    gains[~valid] = -np.inf
    best = int(np.argmax(gains))
    if not gains[best] > EARLY_EXIT_TOL:
        return None
    return (
        int(table.feature[best]),
        float(table.threshold[best]),
        float(gains[best]),
        float(GL[best]),
        float(HL[best]),
    )


def _grow(idx, depth, X, ghn, table, allowed, hp, update, G, H) -> Node:
    if depth < hp.max_depth:
        split = _best_split(idx, ghn, table, allowed, hp, G, H)
        if split is not None:
            feature, threshold, gain, GL, HL = split
            go_left = X[idx, feature] < threshold
            args = (X, ghn, table, allowed, hp, update)
            left = _grow(idx[go_left], depth + 1, *args, GL, HL)
            right = _grow(idx[~go_left], depth + 1, *args, G - GL, H - HL)
            # gamma pruning: collapse a split whose children are leaves and whose
            # loss reduction does not reach gamma.
            if not (left.is_leaf and right.is_leaf and gain < hp.gamma):
                return Node(feature=feature, threshold=threshold, left=left, right=right, gain=gain)
    value = leaf_weight(G, H, hp)
    update[idx] = value
    return Node(leaf_value=value)


def sample_weights(y: np.ndarray, hp: HyperParams) -> np.ndarray:
    return np.where(y > 0.5, hp.sample_weight_scaling, 1.0)


def logistic_loss(margin: np.ndarray, y: np.ndarray, w: np.ndarray) -> float:
    """Weighted mean negative log-likelihood."""
    # log(1 + exp(-m)) for y=1, log(1 + exp(m)) for y=0
    signs = np.where(y > 0.5, -1.0, 1.0)
    return float(w @ np.logaddexp(0.0, signs * margin)) / float(w.sum())


def fit_arrays(
    X: np.ndarray,
    y: np.ndarray,
    hp: HyperParams,
    seed: int = 0,
    *,
    strict: bool = False,
    base_score: float = 0.0,
    principle: str = "",
) -> BoostedModel:
    """Train on a dense matrix. ``strict`` disables the early exit."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n_pos = int((y > 0.5).sum())
    if n_pos == 0 or n_pos == len(y):
        raise DegenerateClassError("both classes must be present to train")
    rng = np.random.default_rng(seed)
    table = _SplitTable(X)
    d = X.shape[1]
    w = sample_weights(y, hp)
    margin = np.full(len(y), base_score)
    all_idx = np.arange(len(y))
    trees: list[Node] = []
    signs = np.where(y > 0.5, -1.0, 1.0)
    w_total = float(w.sum())
    losses = [float(w @ np.logaddexp(0.0, signs * margin)) / w_total]
    stalled = 0
    n_keep = max(1, int(math.floor(hp.feature_sampling_rate * d)))
    ghn = np.ones((len(y), 3))
    every = np.ones(table.size, dtype=bool)
    for _ in range(hp.n_trees):
        if n_keep < d:
            chosen = np.zeros(d, dtype=bool)
            chosen[rng.choice(d, size=n_keep, replace=False)] = True
            allowed = chosen[table.feature]
        else:
            allowed = every
        p = _sigmoid(margin)
        ghn[:, 0] = w * (p - y)
        ghn[:, 1] = w * p * (1.0 - p)
        update = np.zeros(len(y))
        G, H = ghn[:, :2].sum(axis=0)
        trees.append(_grow(all_idx, 0, X, ghn, table, allowed, hp, update, float(G), float(H)))
        margin = margin + hp.eta * update
        losses.append(float(w @ np.logaddexp(0.0, signs * margin)) / w_total)
        if not strict:
            stalled = stalled + 1 if losses[-2] - losses[-1] < EARLY_EXIT_TOL else 0
            if stalled >= EARLY_EXIT_PATIENCE:
                break
    return BoostedModel(
        trees=tuple(trees),
        learning_rate=hp.eta,
        base_score=base_score,
        principle=principle,
        hyperparams=hp,
        train_loss=tuple(losses),
    )


@dataclass(frozen=True)
class LabeledRule:
    sid: int
    rev: int
    group: str
    features: FeatureVector
    labels: Mapping[str, bool]

    def __post_init__(self):
        if not self.group:
            raise ValueError("group must be non-empty")
        missing = set(PRINCIPLES) - set(self.labels)
        if missing:
            raise ValueError(f"missing labels: {sorted(missing)}")


def labeled_arrays(data: Sequence[LabeledRule], principle: str) -> tuple[np.ndarray, np.ndarray]:
    if principle not in PRINCIPLES:
        raise ValueError(f"unknown principle {principle!r}")
    X = feature_matrix(item.features for item in data)
    y = np.array([1.0 if item.labels[principle] else 0.0 for item in data])
    return X, y


def train(
    data: Sequence[LabeledRule], principle: str, hp: HyperParams, seed: int = 0, *, strict=False
) -> BoostedModel:
    X, y = labeled_arrays(data, principle)
    return fit_arrays(X, y, hp, seed, strict=strict, principle=principle)


def predict(model: BoostedModel, fv: FeatureVector) -> float:
    if model.trained_on != SCHEMA_HASH:
        raise SchemaMismatchError(
            f"model schema {model.trained_on} does not match features {SCHEMA_HASH}"
        )
    return float(model.predict_proba(vectorize(fv)[None, :])[0])


def weighted_f1(precision: float, recall: float, w_p: float = 10.0, w_r: float = 1.0) -> float:
    """Weighted harmonic mean of precision and recall (precision weighted ``w_p``)."""
    if precision <= 0.0 or recall <= 0.0:
        return 0.0
    return (w_p + w_r) / (w_p / precision + w_r / recall)


@dataclass(frozen=True)
class CVReport:
    principle: str
    precision: float
    recall: float
    weighted_f1: float
    folds: int = 2
    repeats: int = 10
    stratified: bool = True
    fold_scores: tuple[tuple[float, float, float], ...] = ()

    def to_dict(self) -> dict:
        out = asdict(self)
        out["fold_scores"] = [list(s) for s in self.fold_scores]
        return out


def _precision_recall(y_true: np.ndarray, y_pred: np.ndarray) -> tuple[float, float]:
    tp = float(np.sum((y_true > 0.5) & y_pred))
    fp = float(np.sum((y_true <= 0.5) & y_pred))
    fn = float(np.sum((y_true > 0.5) & ~y_pred))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return precision, recall


def stratified_splits(y: np.ndarray, folds: int, repeats: int, seed: int):
    splitter = RepeatedStratifiedKFold(n_splits=folds, n_repeats=repeats, random_state=seed)
    return list(splitter.split(np.zeros((len(y), 1)), (y > 0.5).astype(int)))


def cross_validate_arrays(
    X: np.ndarray,
    y: np.ndarray,
    hp: HyperParams,
    *,
    repeats: int = 10,
    folds: int = 2,
    seed: int = 0,
    principle: str = "",
    strict: bool = False,
) -> CVReport:
    n_pos = int((y > 0.5).sum())
    if min(n_pos, len(y) - n_pos) < folds:
        raise DegenerateClassError(f"need at least {folds} samples of each class")
    scores = []
    for k, (train_idx, test_idx) in enumerate(stratified_splits(y, folds, repeats, seed)):
        model = fit_arrays(X[train_idx], y[train_idx], hp, seed + k, strict=strict)
        pred = model.predict_proba(X[test_idx]) >= 0.5
        precision, recall = _precision_recall(y[test_idx], pred)
        scores.append((precision, recall, weighted_f1(precision, recall)))
    arr = np.asarray(scores)
    return CVReport(
        principle=principle,
        precision=float(arr[:, 0].mean()),
        recall=float(arr[:, 1].mean()),
        weighted_f1=float(arr[:, 2].mean()),
        folds=folds,
        repeats=repeats,
        stratified=True,
        fold_scores=tuple(tuple(float(v) for v in s) for s in scores),
    )


def cross_validate(
    data: Sequence[LabeledRule],
    principle: str,
    hp: HyperParams,
    repeats: int = 10,
    folds: int = 2,
    seed: int = 0,
    *,
    strict: bool = False,
) -> CVReport:
    X, y = labeled_arrays(data, principle)
    return cross_validate_arrays(
        X, y, hp, repeats=repeats, folds=folds, seed=seed, principle=principle, strict=strict
    )


def thread_limit() -> int:
    """Worker cap from RULECHECK_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("RULECHECK_THREADS", "1")))
    except ValueError:
        return 1


def grid_search(
    data: Sequence[LabeledRule],
    principle: str,
    grid: Sequence[HyperParams],
    seed: int = 0,
    *,
    repeats: int = 10,
    folds: int = 2,
    n_jobs: int | None = None,
) -> tuple[HyperParams, CVReport]:
    """Pick the grid point with the highest CV weighted F1.

    Ties go to the smaller max_depth, then the larger lambda_l2, then the
    earlier grid position.
    """
    if not grid:
        raise ValueError("grid must not be empty")
    X, y = labeled_arrays(data, principle)
    n_jobs = thread_limit() if n_jobs is None else n_jobs

    def run(hp):
        return cross_validate_arrays(
            X, y, hp, repeats=repeats, folds=folds, seed=seed, principle=principle
        )

    if n_jobs > 1:
        from joblib import Parallel, delayed

        reports = Parallel(n_jobs=n_jobs)(delayed(run)(hp) for hp in grid)
    else:
        reports = [run(hp) for hp in grid]
    best = max(
        range(len(grid)),
        key=lambda i: (reports[i].weighted_f1, -grid[i].max_depth, grid[i].lambda_l2, -i),
    )
    return grid[best], reports[best]


def read_labels(path: str | os.PathLike) -> list[dict]:
    """Rows of the labels CSV with ints for sid/rev and bools per principle."""
    rows = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        missing = set(LABEL_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"labels file lacks columns: {sorted(missing)}")
        for row in reader:
            out = {"sid": int(row["sid"]), "rev": int(row["rev"]), "group": row["group"].strip()}
            for p in PRINCIPLES:
                cell = row[p].strip()
                if cell not in ("0", "1"):
                    raise ValueError(f"label cell for {p} must be 0 or 1, got {cell!r}")
                out[p] = cell == "1"
            for extra in set(row) - set(LABEL_COLUMNS):
                out[extra] = row[extra]
            rows.append(out)
    return rows


def write_labels(rows: Iterable[Mapping], path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(LABEL_COLUMNS)
        for row in rows:
            writer.writerow(
                [row["sid"], row["rev"], row["group"], *(int(bool(row[p])) for p in PRINCIPLES)]
            )


def join_labels(rules, label_rows: Iterable[Mapping]) -> list[LabeledRule]:
    """Pair label rows with parsed rules by (sid, rev); unmatched rows raise KeyError."""
    from .features import extract_features

    by_key = {(r.sid, r.rev): r for r in rules}
    out = []
    for row in label_rows:
        key = (row["sid"], row["rev"])
        if key not in by_key:
            raise KeyError(f"no rule for sid {key[0]} rev {key[1]}")
        out.append(
            LabeledRule(
                sid=key[0],
                rev=key[1],
                group=row["group"],
                features=extract_features(by_key[key]),
                labels={p: bool(row[p]) for p in PRINCIPLES},
            )
        )
    return out
