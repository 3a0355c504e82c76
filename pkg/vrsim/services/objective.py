"""
Objective models.

Loss families (quadratic, logistic, one-hidden-layer MLP) with per-sample
value/gradient oracles, full-gradient computation and the smoothness and
Lipschitz constants the step-size rules are built on.

Every oracle is vectorised over a block of samples; the rows of
``batch_grads`` follow the ascending sample order of the index it is given and
every reduction sums those rows in that order, so traces are bit-reproducible.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_softmax, softmax

from vrsim.errors import ConfigError, DataError
from vrsim.models import ModelKind, X0Init
from vrsim.services.data import Dataset, Sample

logger = logging.getLogger(__name__)

Index = slice | np.ndarray


@dataclass(frozen=True)
class LipschitzEstimate:
    smoothness: float
    lipschitz: float
    approximate: bool = False


class ObjectiveModel(ABC):
    """A loss family f(x, ξ) over parameter vectors of length ``dim``."""

    kind: ModelKind

    def __init__(self, dim: int):
        self.dim = dim
        self.smoothness: float | None = None
        self.lipschitz: float | None = None
        self.strong_convexity: float = 0.0
        self.approximate_constants = False

    # ── Vectorised oracles ─────────────────────────────

    @abstractmethod
    def _losses(self, x: np.ndarray, features: np.ndarray, labels: np.ndarray | None) -> np.ndarray:
        ...

    @abstractmethod
    def _grads(self, x: np.ndarray, features: np.ndarray, labels: np.ndarray | None) -> np.ndarray:
        ...

    def batch_losses(self, x: np.ndarray, dataset: Dataset, idx: Index) -> np.ndarray:
        self._check_point(x)
        self._check_dataset(dataset)
        return self._losses(x, dataset.features[idx], _take(dataset.labels, idx))

    def batch_grads(self, x: np.ndarray, dataset: Dataset, idx: Index) -> np.ndarray:
        """Per-sample gradients, one row per index in ascending order."""
        self._check_point(x)
        self._check_dataset(dataset)
        return self._grads(x, dataset.features[idx], _take(dataset.labels, idx))

    # ── Single-sample and full-dataset forms ───────────

    def loss(self, x: np.ndarray, sample: Sample) -> float:
        self._check_point(x)
        self._check_sample(sample)
        labels = None if sample.label is None else np.array([sample.label])
        return float(self._losses(x, sample.features[None, :], labels)[0])

    def grad(self, x: np.ndarray, sample: Sample) -> np.ndarray:
        self._check_point(x)
        self._check_sample(sample)
        labels = None if sample.label is None else np.array([sample.label])
        return self._grads(x, sample.features[None, :], labels)[0]

    def full_grad(self, x: np.ndarray, dataset: Dataset) -> np.ndarray:
        """Mean of the per-sample gradients over the whole dataset."""
        if dataset.n == 0:
            raise DataError("full gradient of an empty dataset")
        return self.batch_grads(x, dataset, slice(0, dataset.n)).sum(axis=0) / dataset.n

    def full_loss(self, x: np.ndarray, dataset: Dataset) -> float:
        if dataset.n == 0:
            raise DataError("loss of an empty dataset")
        return float(self.batch_losses(x, dataset, slice(0, dataset.n)).sum() / dataset.n)

    # ── Points ─────────────────────────────────────────

    def initial_point(self, mode: X0Init, rng: np.random.Generator) -> np.ndarray:
        if mode == X0Init.GAUSSIAN:
            return rng.normal(0.0, 0.01, size=self.dim)
        return np.zeros(self.dim)

    def optimal_value(self, dataset: Dataset, steps: int = 1000) -> tuple[float, bool]:
        """f* and whether it is approximate. The default runs full-gradient descent."""
        if not self.smoothness:
            raise ConfigError("model constants must be calibrated before estimating f*")
        eta = 1.0 / self.smoothness
        x = np.zeros(self.dim)
        best = self.full_loss(x, dataset)
        for _ in range(steps):
            x = x - eta * self.full_grad(x, dataset)
            best = min(best, self.full_loss(x, dataset))
        return best, True

    # ── Validation ─────────────────────────────────────

    def _check_point(self, x: np.ndarray) -> None:
        if x.shape != (self.dim,):
            raise ConfigError(f"{self.kind.value} model expects a vector of length {self.dim}, got shape {x.shape}")

    def _check_sample(self, sample: Sample) -> None:
        if sample.features.shape != (self.input_dim,):
            raise DataError(
                f"{self.kind.value} model expects {self.input_dim} features, got {sample.features.shape[0]}"
            )

    def _check_dataset(self, dataset: Dataset) -> None:
        if dataset.input_dim != self.input_dim:
            raise DataError(
                f"{self.kind.value} model expects {self.input_dim} features, dataset has {dataset.input_dim}"
            )

    @property
    def input_dim(self) -> int:
        return self.dim


def _take(labels: np.ndarray | None, idx: Index) -> np.ndarray | None:
    return None if labels is None else labels[idx]


# ── Quadratic ──────────────────────────────────────────


class QuadraticModel(ObjectiveModel):
    """f(x, ξᵢ) = ½ (x − cᵢ)ᵀ A (x − cᵢ) with a symmetric PSD curvature A."""

    kind = ModelKind.QUADRATIC

    def __init__(self, dim: int, curvature: np.ndarray | None = None):
        super().__init__(dim)
        A = np.eye(dim) if curvature is None else np.asarray(curvature, dtype=float)
        if A.shape != (dim, dim):
            raise ConfigError(f"curvature must be {dim}x{dim}, got {A.shape}")
        if not np.allclose(A, A.T, atol=1e-12):
            raise ConfigError("curvature matrix must be symmetric")
        eigenvalues = np.linalg.eigvalsh(A)
        if eigenvalues[0] < -1e-12:
            raise ConfigError(f"curvature matrix must be PSD (min eigenvalue {eigenvalues[0]:.3g})")
        self.curvature = A
        self.smoothness = float(eigenvalues[-1])
        self.strong_convexity = float(max(eigenvalues[0], 0.0))

    def _losses(self, x, features, labels):
        diff = x - features
        return 0.5 * np.einsum("bi,ij,bj->b", diff, self.curvature, diff)

    def _grads(self, x, features, labels):
        return (x - features) @ self.curvature

    def optimal_value(self, dataset: Dataset, steps: int = 0) -> tuple[float, bool]:
        # A(x̄ − c̄) = 0 at the mean center, whatever the rank of A
        minimizer = dataset.features.mean(axis=0)
        return self.full_loss(minimizer, dataset), False


# ── Logistic regression ────────────────────────────────


class LogisticModel(ObjectiveModel):
    """Cross-entropy of σ(uᵀx) against a {0,1} label plus ½·reg·‖x‖²."""

    kind = ModelKind.LOGISTIC

    def __init__(self, dim: int, reg: float = 0.0):
        super().__init__(dim)
        if reg < 0:
            raise ConfigError("regularization weight must be non-negative")
        self.reg = reg
        self.strong_convexity = reg

    def _losses(self, x, features, labels):
        z = features @ x
        return np.logaddexp(0.0, z) - labels * z + 0.5 * self.reg * float(x @ x)

    def _grads(self, x, features, labels):
        residual = expit(features @ x) - labels
        return residual[:, None] * features + self.reg * x


# ── One-hidden-layer MLP ───────────────────────────────


class MLPModel(ObjectiveModel):
    """input → hidden (ReLU) → classes (softmax cross-entropy), weights flattened.

    Layout of the parameter vector: W1 (hidden × input), b1, W2 (classes × hidden), b2.
    """

    kind = ModelKind.MLP

    def __init__(self, input_dim: int, hidden: int = 32, classes: int = 2):
        if classes < 2:
            raise ConfigError("mlp needs at least two classes")
        self._input_dim = input_dim
        self.hidden = hidden
        self.classes = classes
        self._shapes = [(hidden, input_dim), (hidden,), (classes, hidden), (classes,)]
        sizes = [int(np.prod(s)) for s in self._shapes]
        self._offsets = np.cumsum([0] + sizes)
        super().__init__(int(self._offsets[-1]))
        self.approximate_constants = True

    @property
    def input_dim(self) -> int:
        return self._input_dim

    def unpack(self, x: np.ndarray) -> list[np.ndarray]:
        return [x[a:b].reshape(shape) for a, b, shape in zip(self._offsets[:-1], self._offsets[1:], self._shapes)]

    def pre_activations(self, x: np.ndarray, features: np.ndarray) -> np.ndarray:
        W1, b1, _, _ = self.unpack(x)
        return features @ W1.T + b1

    def _forward(self, x, features):
        _, _, W2, b2 = self.unpack(x)
        a = self.pre_activations(x, features)
        h = np.maximum(a, 0.0)
        return a, h, h @ W2.T + b2

    def _losses(self, x, features, labels):
        _, _, logits = self._forward(x, features)
        rows = np.arange(features.shape[0])
        return -log_softmax(logits, axis=1)[rows, labels.astype(int)]

    def _grads(self, x, features, labels):
        _, _, W2, _ = self.unpack(x)
        a, h, logits = self._forward(x, features)
        batch = features.shape[0]
        d_logits = softmax(logits, axis=1)
        d_logits[np.arange(batch), labels.astype(int)] -= 1.0
        d_a = (d_logits @ W2) * (a > 0)
        return np.concatenate(
            [
                np.einsum("bh,bp->bhp", d_a, features).reshape(batch, -1),
                d_a,
                np.einsum("bc,bh->bch", d_logits, h).reshape(batch, -1),
                d_logits,
            ],
            axis=1,
        )

    def initial_point(self, mode: X0Init, rng: np.random.Generator) -> np.ndarray:
        if mode == X0Init.GAUSSIAN:
            return rng.normal(0.0, 0.01, size=self.dim)
        # all-zero weights sit on a saddle of the ReLU network; scaled weights, zero biases
        x = np.zeros(self.dim)
        for (a, b), shape in zip(zip(self._offsets[:-1], self._offsets[1:]), self._shapes):
            if len(shape) == 2:
                x[a:b] = rng.normal(0.0, 1.0 / np.sqrt(shape[1]), size=b - a)
        return x


# ── Constants ──────────────────────────────────────────


def default_radius(model: ObjectiveModel, dataset: Dataset) -> float:
    """Domain radius used for M when none is declared."""
    if model.kind == ModelKind.QUADRATIC:
        return float(np.linalg.norm(dataset.features, axis=1).max())
    return 1.0


def lipschitz_estimate(
    model: ObjectiveModel,
    dataset: Dataset,
    radius: float | None = None,
    seed: int = 0,
    probes: int = 16,
) -> LipschitzEstimate:
    """(L, M) for ``model`` on ``dataset``.

    quadratic: L = λ_max(A), M = max_i sup_{‖x‖≤R} ‖A(x − cᵢ)‖ bounded by λ_max·R + ‖A cᵢ‖
    (exact for isotropic A). logistic: L = max‖u‖²/4 + reg, M = max‖u‖ + reg·R.
    mlp: empirical sampling around the origin, flagged approximate.
    """
    if dataset.n == 0:
        raise DataError("Lipschitz estimate needs a non-empty dataset")
    R = default_radius(model, dataset) if radius is None else radius

    if isinstance(model, QuadraticModel):
        L = model.smoothness
        M = float((L * R + np.linalg.norm(dataset.features @ model.curvature, axis=1)).max())
        return LipschitzEstimate(L, max(M, 1e-12))

    if isinstance(model, LogisticModel):
        norms = np.linalg.norm(dataset.features, axis=1)
        L = float(norms.max() ** 2 / 4 + model.reg)
        M = float(norms.max() + model.reg * R)
        return LipschitzEstimate(max(L, 1e-12), max(M, 1e-12))

    rng = np.random.default_rng([seed, 7])
    subset = np.sort(rng.choice(dataset.n, size=min(dataset.n, 256), replace=False))
    points = [model.initial_point(X0Init.ZEROS, rng) for _ in range(probes)]
    L = 0.0
    M = 0.0
    for x in points:
        y = x + rng.normal(0.0, 1e-2, size=model.dim)
        gx = model.batch_grads(x, dataset, subset)
        gy = model.batch_grads(y, dataset, subset)
        L = max(L, float(np.linalg.norm(gx.mean(axis=0) - gy.mean(axis=0)) / np.linalg.norm(x - y)))
        M = max(M, float(np.linalg.norm(gx, axis=1).max()))
    logger.warning("mlp constants are empirical (L≈%.4g, M≈%.4g); theory outputs are advisory", L, M)
    return LipschitzEstimate(max(L, 1e-12), max(M, 1e-12), approximate=True)


def make_model(
    kind: ModelKind,
    dataset: Dataset,
    *,
    spectrum: list[float] | None = None,
    reg: float = 0.0,
    hidden: int = 32,
    classes: int = 2,
) -> ObjectiveModel:
    """Uncalibrated model of ``kind`` sized for ``dataset``."""
    if kind == ModelKind.QUADRATIC:
        if dataset.labels is not None:
            raise DataError("quadratic model needs a center dataset, got a labelled one")
        curvature = None if spectrum is None else np.diag(np.asarray(spectrum, dtype=float))
        return QuadraticModel(dataset.input_dim, curvature)
    if dataset.labels is None:
        raise DataError(f"{kind.value} model needs labelled samples")
    if kind == ModelKind.LOGISTIC:
        return LogisticModel(dataset.input_dim, reg=reg)
    return MLPModel(dataset.input_dim, hidden=hidden, classes=classes)


def calibrate(model: ObjectiveModel, dataset: Dataset, radius: float | None = None, seed: int = 0) -> ObjectiveModel:
    """Attach L and M estimated on ``dataset`` to ``model`` and return it."""
    estimate = lipschitz_estimate(model, dataset, radius=radius, seed=seed)
    model.smoothness = estimate.smoothness
    model.lipschitz = estimate.lipschitz
    model.approximate_constants = estimate.approximate
    return model
