"""
Datasets.

Synthetic generation, CSV ingestion with normalization, contiguous sharding
across workers, and adjacent-dataset construction for stability runs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from vrsim.errors import DataError
from vrsim.models import ModelKind, Provenance
from vrsim.schemas import CsvSchema

logger = logging.getLogger(__name__)

NORM_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Sample:
    """One ξᵢ: a feature vector and, for classification kinds, its label."""

    features: np.ndarray
    label: float | None = None

    def same_as(self, other: Sample) -> bool:
        return np.array_equal(self.features, other.features) and self.label == other.label


@dataclass(frozen=True)
class SyntheticRecipe:
    kind: ModelKind
    seed: int
    separator: np.ndarray | None = None
    label_noise: float = 0.0
    scale: float = 1.0


@dataclass(frozen=True, eq=False)
class Dataset:
    """Ordered, immutable sample sequence. Order is part of identity."""

    features: np.ndarray
    labels: np.ndarray | None
    provenance: Provenance
    recipe: SyntheticRecipe | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise DataError("dataset needs at least one sample")
        if self.labels is not None and self.labels.shape != (self.features.shape[0],):
            raise DataError("one label per sample required")
        if not np.all(np.isfinite(self.features)):
            raise DataError("dataset contains non-finite feature values")
        self.features.flags.writeable = False
        if self.labels is not None:
            self.labels.flags.writeable = False

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i: int) -> Sample:
        label = None if self.labels is None else float(self.labels[i])
        return Sample(self.features[i], label)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    def replace_last(self, j: int) -> Dataset:
        """Copy with the last sample replaced by a copy of sample ``j``."""
        features = self.features.copy()
        features[-1] = self.features[j]
        labels = None
        if self.labels is not None:
            labels = self.labels.copy()
            labels[-1] = self.labels[j]
        return Dataset(features, labels, self.provenance, self.recipe)


@dataclass(frozen=True)
class ShardAssignment:
    """P contiguous index intervals partitioning {0..N−1}."""

    intervals: tuple[range, ...]

    @property
    def workers(self) -> int:
        return len(self.intervals)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(r) for r in self.intervals)

    def __getitem__(self, p: int) -> range:
        return self.intervals[p]


# ── Normalization ──────────────────────────────────────


def normalize(features: np.ndarray) -> np.ndarray:
    """Scale so the largest row norm is at most 1. Idempotent."""
    max_norm = float(np.linalg.norm(features, axis=1).max()) if len(features) else 0.0
    if max_norm <= 1.0 + NORM_TOLERANCE:
        return features
    return features / max_norm


# ── Synthesis ──────────────────────────────────────────


def synthesize(
    kind: ModelKind,
    n: int,
    d: int,
    seed: int,
    *,
    symmetric: bool = False,
    label_noise: float = 0.1,
) -> Dataset:
    """Deterministic synthetic dataset for ``kind``.

    quadratic: centers cᵢ ~ N(0, I); with ``symmetric`` the second half mirrors the
    first so the full gradient at 0 vanishes. logistic/mlp: normal features scaled to
    unit max norm, labels from a planted separator with ``label_noise`` flips.
    """
    if n < 1 or d < 1:
        raise DataError(f"synthesize needs N ≥ 1 and d ≥ 1, got N={n}, d={d}")
    rng = np.random.default_rng(seed)

    if kind == ModelKind.QUADRATIC:
        if symmetric:
            half = rng.standard_normal((n // 2, d))
            parts = [half, -half] if n % 2 == 0 else [half, np.zeros((1, d)), -half]
            centers = np.concatenate(parts)
        else:
            centers = rng.standard_normal((n, d))
        return Dataset(centers, None, Provenance.SYNTHETIC_QUADRATIC, SyntheticRecipe(kind, seed))

    separator = rng.standard_normal(d)
    raw = rng.standard_normal((n, d))
    scale = max(float(np.linalg.norm(raw, axis=1).max()), 1.0)
    features, labels = _planted_labels(rng, raw / scale, separator, label_noise)
    recipe = SyntheticRecipe(kind, seed, separator, label_noise, scale)
    return Dataset(features, labels, Provenance.SYNTHETIC_LOGISTIC, recipe)


def _planted_labels(rng, features, separator, label_noise):
    labels = (features @ separator > 0).astype(float)
    flips = rng.random(features.shape[0]) < label_noise
    labels[flips] = 1.0 - labels[flips]
    return features, labels


def probe_set(dataset: Dataset, size: int = 100, seed: int = 0) -> Dataset:
    """Probe samples for loss-level stability: fresh draws from the synthetic recipe,
    or a resample of the rows when the dataset came from a file."""
    rng = np.random.default_rng([seed, 101])
    recipe = dataset.recipe
    if recipe is None:
        idx = rng.integers(0, dataset.n, size=size)
        labels = None if dataset.labels is None else dataset.labels[idx].copy()
        return Dataset(dataset.features[idx].copy(), labels, dataset.provenance)
    if recipe.kind == ModelKind.QUADRATIC:
        return Dataset(rng.standard_normal((size, dataset.input_dim)), None, dataset.provenance, recipe)
    raw = rng.standard_normal((size, dataset.input_dim)) / recipe.scale
    features, labels = _planted_labels(rng, normalize(raw), recipe.separator, recipe.label_noise)
    return Dataset(features, labels, dataset.provenance, recipe)


# ── CSV ingestion ──────────────────────────────────────


def load_csv(path: str | Path, schema: CsvSchema | None = None) -> Dataset:
    """Read a labelled CSV file: header line, a label column, optional id column,
    every other column a real-valued feature. Rows keep file order."""
    schema = schema or CsvSchema()
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: file not found")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: cannot parse ({exc})") from exc

    frame.columns = [c.strip() for c in frame.columns]
    if schema.label_column not in frame.columns:
        raise DataError(f"{path}: missing required column '{schema.label_column}'")
    if frame.empty:
        raise DataError(f"{path}: no data rows")

    dropped = {schema.label_column, schema.id_column, *schema.drop_columns}
    feature_columns = [c for c in frame.columns if c not in dropped]
    if not feature_columns:
        raise DataError(f"{path}: no feature columns")

    columns = []
    for column in [schema.label_column, *feature_columns]:
        cells = frame[column].str.strip()
        missing = cells == ""
        if missing.any():
            row = int(np.argmax(missing.to_numpy()))
            raise DataError(f"{path}: row {row + 1} (line {row + 2}), column '{column}': missing value")
        if column != schema.label_column:
            values = pd.to_numeric(cells, errors="coerce")
            bad = values.isna().to_numpy()
            if bad.any():
                row = int(np.argmax(bad))
                raise DataError(
                    f"{path}: row {row + 1} (line {row + 2}), column '{column}': "
                    f"non-numeric value '{cells.iloc[row]}'"
                )
            columns.append(values.to_numpy(dtype=float))

    labels = _map_labels(frame[schema.label_column].str.strip(), schema, path)
    features = normalize(np.column_stack(columns))
    logger.info("Loaded %s: %d samples, %d features", path, *features.shape)
    return Dataset(features, labels, Provenance.CSV)


def _map_labels(cells: pd.Series, schema: CsvSchema, path: Path) -> np.ndarray:
    if schema.positive_label is not None:
        return (cells == schema.positive_label).to_numpy(dtype=float)
    numeric = pd.to_numeric(cells, errors="coerce")
    if not numeric.isna().any() and set(numeric.unique()) <= {0.0, 1.0}:
        return numeric.to_numpy(dtype=float)
    classes = sorted(cells.unique())
    if len(classes) != 2:
        raise DataError(
            f"{path}: column '{schema.label_column}' must hold exactly two classes, found {len(classes)}"
        )
    return (cells == classes[1]).to_numpy(dtype=float)


# ── Sharding and adjacency ─────────────────────────────


def shard(dataset: Dataset | int, workers: int) -> ShardAssignment:
    """Contiguous near-equal partition; the first N mod P shards take one extra sample."""
    n = dataset if isinstance(dataset, int) else dataset.n
    if workers < 1:
        raise DataError("worker count must be positive")
    if workers > n:
        raise DataError(f"cannot shard {n} samples across {workers} workers")
    base, extra = divmod(n, workers)
    intervals = []
    start = 0
    for p in range(workers):
        stop = start + base + (1 if p < extra else 0)
        intervals.append(range(start, stop))
        start = stop
    return ShardAssignment(tuple(intervals))


def make_adjacent(dataset: Dataset, seed: int, max_attempts: int = 100) -> Dataset:
    """S′: S with its last sample replaced by a different, uniformly drawn sample of S."""
    if dataset.n < 2:
        raise DataError("adjacent dataset needs at least two samples")
    last = dataset[dataset.n - 1]
    if all(dataset[i].same_as(last) for i in range(dataset.n - 1)):
        raise DataError("all samples are identical; no adjacent dataset exists")

    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        j = int(rng.integers(0, dataset.n))
        if not dataset[j].same_as(last):
            return dataset.replace_last(j)
    raise DataError(f"no distinct replacement drawn in {max_attempts} attempts")


def draw_batch(rng: np.random.Generator, interval: range, size: int) -> np.ndarray:
    """Uniform sample without replacement from ``interval``, sorted ascending."""
    size = min(size, len(interval))
    return np.sort(rng.choice(len(interval), size=size, replace=False)) + interval.start
