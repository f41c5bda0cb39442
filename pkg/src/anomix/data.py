"""Dataset ingestion, normalization, splitting, and synthetic generators.

A Dataset couples a float64 feature matrix with ground-truth anomaly
flags and a per-row role: labeled anomaly, unlabeled (the training pool,
possibly contaminated), validation, or test. All operations are pure:
they return new datasets and never mutate their inputs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np

from .errors import (
    ContractViolationError,
    DatasetError,
    InvalidParameterError,
    UnusableDatasetError,
)
from .rng import substream


class Role(IntEnum):
    UNASSIGNED = 0
    LABELED_ANOMALY = 1
    UNLABELED = 2
    VALID = 3
    TEST = 4


_TRAIN_ROLES = (Role.LABELED_ANOMALY, Role.UNLABELED)


@dataclass
class NormState:
    """Per-feature (min, max) recorded from training-role rows."""

    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        self.mins = np.asarray(self.mins, dtype=np.float64)
        self.maxs = np.asarray(self.maxs, dtype=np.float64)
        if self.mins.shape != self.maxs.shape or self.mins.ndim != 1:
            raise ContractViolationError("normalization bounds must be matching vectors")


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    roles: np.ndarray
    feature_names: list[str] = field(default_factory=list)
    norm_state: NormState | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.roles = np.asarray(self.roles, dtype=np.int64)
        if self.X.ndim != 2:
            raise ContractViolationError("X must be a 2-d matrix")
        n = self.X.shape[0]
        if self.y.shape != (n,) or self.roles.shape != (n,):
            raise ContractViolationError("labels and roles must have one entry per row")
        if not self.feature_names:
            self.feature_names = [f"f{i}" for i in range(self.X.shape[1])]
        if len(self.feature_names) != self.X.shape[1]:
            raise ContractViolationError("feature name count must match columns")
        if not np.isin(self.y, (0, 1)).all():
            raise ContractViolationError("labels must be 0 (normal) or 1 (anomaly)")
        if not np.isin(self.roles, [int(r) for r in Role]).all():
            raise ContractViolationError("unknown role code")
        bad = (self.roles == Role.LABELED_ANOMALY) & (self.y == 0)
        if bad.any():
            raise ContractViolationError("a labeled-anomaly row must have y = 1")

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def indices(self, role: Role) -> np.ndarray:
        return np.flatnonzero(self.roles == int(role))

    def train_indices(self) -> np.ndarray:
        return np.flatnonzero(np.isin(self.roles, [int(r) for r in _TRAIN_ROLES]))


@dataclass(frozen=True)
class ContaminationSpec:
    """Target anomaly share of the unlabeled pool, plus injection knobs."""

    target_ratio: float
    feature_fraction: float = 0.05

    def __post_init__(self):
        if not 0.0 <= self.target_ratio < 0.5:
            raise InvalidParameterError("target_ratio must lie in [0, 0.5)")
        if not 0.0 < self.feature_fraction <= 1.0:
            raise InvalidParameterError("feature_fraction must lie in (0, 1]")


# ---------------------------------------------------------------------------
# CSV in / out
# ---------------------------------------------------------------------------


def _read_table(path) -> tuple[list[str], list[list[str]]]:
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetError(f"{path}: empty file, expected a header row") from None
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DatasetError(
                    f"{path}: row {line_no} has {len(row)} fields, expected {len(header)}"
                )
            rows.append(row)
    return header, rows


def _parse_cell(raw: str, line_no: int, column: str, path) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise DatasetError(
            f"{path}: row {line_no}, column {column!r}: non-numeric value {raw!r}"
        ) from None
    if not math.isfinite(value):
        raise DatasetError(f"{path}: row {line_no}, column {column!r}: non-finite value {raw!r}")
    return value


def load_csv(path, label_column: str) -> Dataset:
    """Parse a headered CSV into a Dataset with roles unassigned.

    Feature columns must be numeric and finite; the label column accepts
    {0, 1} or {-1, +1} and maps to 0/1 with 1 meaning anomaly. Errors
    name the offending row and column.
    """
    header, rows = _read_table(path)
    if label_column not in header:
        raise DatasetError(f"{path}: label column {label_column!r} not in header {header}")
    label_idx = header.index(label_column)
    feature_names = [h for i, h in enumerate(header) if i != label_idx]
    n, d = len(rows), len(feature_names)
    X = np.zeros((n, d))
    y = np.zeros(n, dtype=np.int64)
    for r, row in enumerate(rows):
        line_no = r + 2
        c = 0
        for i, raw in enumerate(row):
            value = _parse_cell(raw, line_no, header[i], path)
            if i == label_idx:
                if value == 1.0:
                    y[r] = 1
                elif value in (0.0, -1.0):
                    y[r] = 0
                else:
                    raise DatasetError(
                        f"{path}: row {line_no}: label {raw!r} is not binary "
                        "(accepted: 0/1 or -1/+1)"
                    )
            else:
                X[r, c] = value
                c += 1
    return Dataset(X, y, np.full(n, int(Role.UNASSIGNED)), feature_names)


def load_features(path) -> tuple[np.ndarray, list[str]]:
    """Parse an unlabeled CSV: every column is a numeric feature."""
    header, rows = _read_table(path)
    X = np.zeros((len(rows), len(header)))
    for r, row in enumerate(rows):
        for c, raw in enumerate(row):
            X[r, c] = _parse_cell(raw, r + 2, header[c], path)
    return X, header


def write_csv(dataset: Dataset, path, label_column: str = "label") -> None:
    """Write features plus the 0/1 label column; round-trips via load_csv."""
    if label_column in dataset.feature_names:
        raise DatasetError(f"label column {label_column!r} collides with a feature name")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([*dataset.feature_names, label_column])
        for row, label in zip(dataset.X, dataset.y):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])


# ---------------------------------------------------------------------------
# Normalization and splitting
# ---------------------------------------------------------------------------


def _transform(X: np.ndarray, state: NormState) -> np.ndarray:
    span = state.maxs - state.mins
    out = np.zeros_like(X)
    varying = span > 0.0
    out[:, varying] = (X[:, varying] - state.mins[varying]) / span[varying]
    # constant training features map everything to 0
    return out


def minmax_normalize(dataset: Dataset) -> Dataset:
    """Min-max scale every feature using training-role statistics.

    Training rows land in [0, 1]; validation and test rows reuse the
    training bounds and may fall outside. Constant features map to 0.
    Applying the op twice is the identity on X.
    """
    train = dataset.train_indices()
    if len(train) == 0:
        raise DatasetError("normalization requires assigned training rows")
    state = NormState(dataset.X[train].min(axis=0), dataset.X[train].max(axis=0))
    return replace(dataset, X=_transform(dataset.X, state), norm_state=state)


def apply_normalization(dataset: Dataset, state: NormState) -> Dataset:
    """Scale with previously recorded bounds (e.g. from a saved model)."""
    if len(state.mins) != dataset.n_features:
        raise DatasetError(
            f"normalization state covers {len(state.mins)} features, data has {dataset.n_features}"
        )
    return replace(dataset, X=_transform(dataset.X, state), norm_state=state)


def normalize_features(X: np.ndarray, state: NormState) -> np.ndarray:
    """Bare-matrix variant of apply_normalization for scoring paths."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(state.mins):
        raise DatasetError(f"expected (n, {len(state.mins)}) features, got {X.shape}")
    return _transform(X, state)


def split_dataset(dataset: Dataset, ratios=(0.6, 0.2, 0.2),
                  rng: np.random.Generator | None = None) -> Dataset:
    """Random train/valid/test split, stratified by the anomaly label.

    Each class is split independently at the given ratios so the anomaly
    proportion is preserved; rounding remainders go to train. Train rows
    start as unlabeled.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise InvalidParameterError("ratios must be three nonnegative numbers summing to 1")
    if dataset.n_rows < 5:
        raise DatasetError("need at least 5 rows to split")
    roles = np.full(dataset.n_rows, int(Role.UNLABELED))
    for cls in (0, 1):
        idx = rng.permutation(np.flatnonzero(dataset.y == cls))
        n_valid = int(ratios[1] * len(idx))
        n_test = int(ratios[2] * len(idx))
        n_train = len(idx) - n_valid - n_test
        roles[idx[n_train:n_train + n_valid]] = int(Role.VALID)
        roles[idx[n_train + n_valid:]] = int(Role.TEST)
    return replace(dataset, roles=roles)


def select_labeled_anomalies(dataset: Dataset, n: int,
                             rng: np.random.Generator | None = None) -> Dataset:
    """Mark min(n, available) random training anomalies as labeled.

    Every other training row, leftover anomalies included, becomes
    unlabeled; those leftovers are the contamination.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if n < 0:
        raise InvalidParameterError("labeled-anomaly count cannot be negative")
    train = dataset.train_indices()
    candidates = train[dataset.y[train] == 1]
    if len(candidates) == 0:
        raise UnusableDatasetError("the training split contains no anomalies to label")
    roles = dataset.roles.copy()
    roles[train] = int(Role.UNLABELED)
    if n > 0:
        picked = rng.choice(candidates, size=min(n, len(candidates)), replace=False)
        roles[picked] = int(Role.LABELED_ANOMALY)
    return replace(dataset, roles=roles)


def inject_anomaly(source_a, source_b, feature_fraction: float,
                   rng: np.random.Generator) -> np.ndarray:
    """Copy of source_a with ceil(fraction * D) random features taken from source_b."""
    if not 0.0 < feature_fraction <= 1.0:
        raise InvalidParameterError("feature_fraction must lie in (0, 1]")
    a = np.asarray(source_a, dtype=np.float64)
    b = np.asarray(source_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ContractViolationError("sources must be two feature vectors of equal length")
    n_replace = math.ceil(feature_fraction * len(a))
    positions = rng.choice(len(a), size=n_replace, replace=False)
    out = a.copy()
    out[positions] = b[positions]
    return out


def adjust_contamination(dataset: Dataset, spec: ContaminationSpec,
                         rng: np.random.Generator | None = None) -> Dataset:
    """Move the unlabeled pool's anomaly share to the target ratio.

    Above target: random unlabeled anomalies are dropped. Below target:
    synthetic anomalies are appended, each built by splicing features
    between two real anomalies from the training portion; injected rows
    enter the unlabeled pool with y = 1 and are never reused as splice
    sources. The achieved ratio lands within 1/|pool| of the target
    (exactly zero when the target is zero).
    """
    if rng is None:
        rng = np.random.default_rng(0)
    pool = dataset.indices(Role.UNLABELED)
    n_pool = len(pool)
    if n_pool == 0:
        raise UnusableDatasetError("no unlabeled pool to adjust")
    pool_anomalies = pool[dataset.y[pool] == 1]
    n_anom = len(pool_anomalies)
    target = spec.target_ratio
    ratio = n_anom / n_pool

    if target == 0.0:
        n_remove = n_anom
    elif ratio > target + 1.0 / n_pool:
        n_remove = math.ceil((n_anom - target * n_pool - 1.0) / (1.0 - target))
        n_remove = min(max(n_remove, 0), n_anom)
    else:
        n_remove = 0

    if n_remove > 0:
        drop = rng.choice(pool_anomalies, size=n_remove, replace=False)
        keep = np.setdiff1d(np.arange(dataset.n_rows), drop)
        return replace(dataset, X=dataset.X[keep], y=dataset.y[keep], roles=dataset.roles[keep])

    if target > 0.0 and ratio < target - 1.0 / n_pool:
        n_inject = math.ceil((target * n_pool - n_anom - 1.0) / (1.0 - target))
    else:
        n_inject = 0
    if n_inject <= 0:
        return dataset

    train = dataset.train_indices()
    sources = train[dataset.y[train] == 1]
    if len(sources) == 0:
        raise UnusableDatasetError(
            "contamination target unreachable: no real anomalies to splice from"
        )
    new_rows = np.empty((n_inject, dataset.n_features))
    for i in range(n_inject):
        a = int(rng.choice(sources))
        others = sources[sources != a]
        b = int(rng.choice(others)) if len(others) else a
        new_rows[i] = inject_anomaly(dataset.X[a], dataset.X[b], spec.feature_fraction, rng)
    return replace(
        dataset,
        X=np.vstack([dataset.X, new_rows]),
        y=np.concatenate([dataset.y, np.ones(n_inject, dtype=np.int64)]),
        roles=np.concatenate([dataset.roles, np.full(n_inject, int(Role.UNLABELED))]),
    )


# ---------------------------------------------------------------------------
# Synthetic generators
# ---------------------------------------------------------------------------

# 10-feature toy family: 3 informative coordinates drawn from Gaussian
# clusters (one normal cluster, three anomaly clusters), 5 redundant
# features that are fixed linear combinations of the informative three,
# and 2 pure-noise features. Constants are fixed; only draws depend on
# the seed.
TOY_NORMAL_CENTER = np.zeros(3)
TOY_NORMAL_SCALE = 1.0
TOY_ANOMALY_CENTERS = np.array([
    [3.2, 0.6, 0.2],
    [2.5, 2.7, -0.5],
    [2.8, -1.6, 2.1],
])
TOY_ANOMALY_SCALE = 0.9
TOY_MIXING = np.array([
    [0.61, -0.43, 0.12],
    [-0.25, 0.88, 0.34],
    [0.47, 0.19, -0.72],
    [-0.58, -0.31, 0.55],
    [0.20, 0.64, 0.41],
])
TOY_NOISE_FEATURES = 2


def generate_toy(n: int, seed: int = 0, anomaly_fraction: float = 0.05) -> Dataset:
    """Seeded 10-feature toy dataset with a 3-cluster anomaly class."""
    if n < 50:
        raise InvalidParameterError("toy generator needs n >= 50")
    if not 0.0 < anomaly_fraction < 0.5:
        raise InvalidParameterError("anomaly_fraction must lie in (0, 0.5)")
    rng = np.random.default_rng(seed)
    n_anom = int(round(anomaly_fraction * n))
    n_norm = n - n_anom
    clusters = rng.integers(0, len(TOY_ANOMALY_CENTERS), size=n_anom)
    normal = TOY_NORMAL_CENTER + TOY_NORMAL_SCALE * rng.standard_normal((n_norm, 3))
    anomalous = TOY_ANOMALY_CENTERS[clusters] + TOY_ANOMALY_SCALE * rng.standard_normal((n_anom, 3))
    informative = np.vstack([normal, anomalous])
    redundant = informative @ TOY_MIXING.T
    noise = rng.standard_normal((n, TOY_NOISE_FEATURES))
    X = np.hstack([informative, redundant, noise])
    y = np.concatenate([np.zeros(n_norm, dtype=np.int64), np.ones(n_anom, dtype=np.int64)])
    order = rng.permutation(n)
    return Dataset(X[order], y[order], np.full(n, int(Role.UNASSIGNED)))


# 2-d case family. Normals are two fixed Gaussian blobs; anomaly layout
# depends on the case kind.
CASE_KINDS = ("clustered", "scattered", "novel")
CASE_NORMAL_CENTERS = np.array([[-1.6, 0.0], [1.6, 0.0]])
CASE_NORMAL_SCALE = 0.55
CASE_ANOMALY_SCALE = 0.3
CASE_CLUSTERED_CENTERS = np.array([[0.0, 2.4], [-0.4, -2.6]])
CASE_NOVEL_TRAIN_CENTERS = np.array([[0.0, 2.4], [-4.0, -1.2]])
CASE_NOVEL_HELD_OUT = np.array([4.6, 0.4])
CASE_SCATTER_BOX = 5.5
CASE_SCATTER_MIN_SIGMA = 3.0


def _case_normals(n: int, rng: np.random.Generator) -> np.ndarray:
    which = rng.integers(0, len(CASE_NORMAL_CENTERS), size=n)
    return CASE_NORMAL_CENTERS[which] + CASE_NORMAL_SCALE * rng.standard_normal((n, 2))


def _case_clusters(centers: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    which = rng.integers(0, len(centers), size=n)
    return centers[which] + CASE_ANOMALY_SCALE * rng.standard_normal((n, 2))


def _case_scattered(n: int, rng: np.random.Generator) -> np.ndarray:
    out = np.empty((n, 2))
    filled = 0
    while filled < n:
        batch = rng.uniform(-CASE_SCATTER_BOX, CASE_SCATTER_BOX, size=(4 * n, 2))
        dist = np.linalg.norm(batch[:, None, :] - CASE_NORMAL_CENTERS[None, :, :], axis=2)
        keep = batch[(dist / CASE_NORMAL_SCALE > CASE_SCATTER_MIN_SIGMA).all(axis=1)]
        take = min(len(keep), n - filled)
        out[filled:filled + take] = keep[:take]
        filled += take
    return out


def _case_split(kind: str, n: int, rng: np.random.Generator,
                anomaly_fraction: float, training: bool) -> tuple[np.ndarray, np.ndarray]:
    n_anom = int(round(anomaly_fraction * n))
    normals = _case_normals(n - n_anom, rng)
    if kind == "clustered":
        anomalies = _case_clusters(CASE_CLUSTERED_CENTERS, n_anom, rng)
    elif kind == "scattered":
        anomalies = _case_scattered(n_anom, rng)
    else:  # novel: one extra anomaly cluster appears only at test time
        if training:
            anomalies = _case_clusters(CASE_NOVEL_TRAIN_CENTERS, n_anom, rng)
        else:
            n_novel = n_anom // 3
            known = _case_clusters(CASE_NOVEL_TRAIN_CENTERS, n_anom - n_novel, rng)
            novel = CASE_NOVEL_HELD_OUT + CASE_ANOMALY_SCALE * rng.standard_normal((n_novel, 2))
            anomalies = np.vstack([known, novel])
    X = np.vstack([normals, anomalies])
    y = np.concatenate([
        np.zeros(len(normals), dtype=np.int64),
        np.ones(len(anomalies), dtype=np.int64),
    ])
    order = rng.permutation(len(X))
    return X[order], y[order]


def generate_case(kind: str, n: int, seed: int = 0,
                  anomaly_fraction: float = 0.05) -> tuple[Dataset, Dataset]:
    """(train, test) pair for one 2-d anomaly-layout case.

    clustered: anomaly blobs near the normal blobs, same mixture in both
    splits. scattered: anomalies uniform outside the 3-sigma support of
    every normal blob. novel: the test split adds an anomaly cluster on
    the far right that never occurs in training. Train rows come back as
    unlabeled, test rows as test.
    """
    if kind not in CASE_KINDS:
        raise InvalidParameterError(f"unknown case kind {kind!r}; expected one of {CASE_KINDS}")
    if n < 100:
        raise InvalidParameterError("case generator needs n >= 100")
    if not 0.0 < anomaly_fraction < 0.5:
        raise InvalidParameterError("anomaly_fraction must lie in (0, 0.5)")
    rng = np.random.default_rng(seed)
    X_tr, y_tr = _case_split(kind, n, rng, anomaly_fraction, training=True)
    X_te, y_te = _case_split(kind, n, rng, anomaly_fraction, training=False)
    train = Dataset(X_tr, y_tr, np.full(len(X_tr), int(Role.UNLABELED)))
    test = Dataset(X_te, y_te, np.full(len(X_te), int(Role.TEST)))
    return train, test


# ---------------------------------------------------------------------------
# Protocol pipelines
# ---------------------------------------------------------------------------


def prepare_training(dataset: Dataset, *, labeled_anomalies: int = 30,
                     contamination: float = 0.02, feature_fraction: float = 0.05,
                     seed: int = 0) -> Dataset:
    """normalize -> label selection -> contamination control.

    Expects roles already assigned (via split_dataset or a generator).
    Each stage draws from its own named substream of the seed.
    """
    dataset = minmax_normalize(dataset)
    dataset = select_labeled_anomalies(dataset, labeled_anomalies, substream(seed, "labeling"))
    spec = ContaminationSpec(contamination, feature_fraction)
    return adjust_contamination(dataset, spec, substream(seed, "contamination"))


def prepare_dataset(dataset: Dataset, *, labeled_anomalies: int = 30,
                    contamination: float = 0.02, feature_fraction: float = 0.05,
                    ratios=(0.6, 0.2, 0.2), seed: int = 0) -> Dataset:
    """Full pipeline from an unsplit dataset: split, then prepare_training."""
    dataset = split_dataset(dataset, ratios, substream(seed, "split"))
    return prepare_training(
        dataset,
        labeled_anomalies=labeled_anomalies,
        contamination=contamination,
        feature_fraction=feature_fraction,
        seed=seed,
    )


def prepare_case_pair(train: Dataset, test: Dataset, *, labeled_anomalies: int = 30,
                      contamination: float = 0.02, feature_fraction: float = 0.05,
                      seed: int = 0) -> tuple[Dataset, Dataset]:
    """Prepare a generate_case pair: the test split reuses train bounds."""
    train = prepare_training(
        train,
        labeled_anomalies=labeled_anomalies,
        contamination=contamination,
        feature_fraction=feature_fraction,
        seed=seed,
    )
    assert train.norm_state is not None
    return train, apply_normalization(test, train.norm_state)
