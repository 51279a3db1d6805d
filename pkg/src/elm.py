"""Extreme Learning Machine regression and gridded prediction."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

logger = logging.getLogger(__name__)

PINV_RCOND = 1e-10
MAX_GRID_CELLS = 10**8
DEFAULT_CANDIDATES = (5, 10, 20, 40, 80, 160)
TIE_TOLERANCE = 1e-12
WEIGHT_RANGE = (-1.0, 1.0)
BIAS_RANGE = (0.0, 1.0)


class ElmError(ValueError):
    """Exception raised for invalid ELM inputs."""


@dataclass
class ElmModel:
    """Single-hidden-layer network with random input weights and least-squares output weights."""

    input_dim: int
    hidden_count: int
    input_weights: np.ndarray  # hidden_count x input_dim
    biases: np.ndarray
    output_weights: np.ndarray
    input_offset: np.ndarray
    input_scale: np.ndarray
    activation: str = "sigmoid"
    seed: int | None = None

    def scale_inputs(self, X: np.ndarray) -> np.ndarray:
        return (X - self.input_offset) / self.input_scale

    def hidden(self, X: np.ndarray) -> np.ndarray:
        """Hidden-layer output matrix for raw (unscaled) inputs."""
        Z = self.scale_inputs(X) @ self.input_weights.T + self.biases
        return expit(Z)

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_count": self.hidden_count,
            "activation": self.activation,
            "weight_range": list(WEIGHT_RANGE),
            "bias_range": list(BIAS_RANGE),
            "seed": self.seed,
            "input_scaling": [
                {"offset": float(o), "scale": float(s)}
                for o, s in zip(self.input_offset, self.input_scale)
            ],
        }


@dataclass
class GridMap:
    """Row-major raster; row 0 is the southernmost row (y_min)."""

    x_min: float
    y_min: float
    resolution: float
    n_cols: int
    n_rows: int
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.resolution <= 0:
            raise ElmError(f"Grid resolution must be positive, got {self.resolution}")
        if self.values.size != self.n_cols * self.n_rows:
            raise ElmError("Grid values do not match n_cols x n_rows")

    def as_rows(self) -> np.ndarray:
        return self.values.reshape(self.n_rows, self.n_cols)


@dataclass
class NodeSelection:
    """Hidden-node count chosen on a holdout split."""

    best: int
    test_rmse: dict[int, float]
    test_r2: dict[int, float]
    skipped: list[int] = field(default_factory=list)
    train_index: np.ndarray | None = None
    test_index: np.ndarray | None = None


def _as_matrix(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return X[:, None] if X.ndim == 1 else X


def _fit_scaling(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Offset and scale mapping each column of X onto [-1, 1]."""
    lo, hi = X.min(axis=0), X.max(axis=0)
    offset = (lo + hi) / 2.0
    scale = (hi - lo) / 2.0
    return offset, np.where(scale > 0, scale, 1.0)


def train_elm(X: np.ndarray, y: np.ndarray, hidden_count: int, seed: int) -> ElmModel:
    """Train an ELM: random hidden layer, output weights by pseudoinverse.

    Args:
        X: n x d inputs
        y: n targets
        hidden_count: Number of hidden nodes
        seed: Seed of the weight generator

    Raises:
        ElmError: On non-finite or inconsistent inputs
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    n, d = X.shape
    if n < 2 or d < 1:
        raise ElmError(f"Need at least 2 samples and 1 input dimension, got {X.shape}")
    if y.size != n:
        raise ElmError(f"{n} inputs but {y.size} targets")
    if hidden_count < 1:
        raise ElmError(f"hidden_count must be >= 1, got {hidden_count}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ElmError("ELM inputs must be finite")

    rng = np.random.default_rng(seed)
    weights = rng.uniform(*WEIGHT_RANGE, size=(hidden_count, d))
    biases = rng.uniform(*BIAS_RANGE, size=hidden_count)
    offset, scale = _fit_scaling(X)

    model = ElmModel(
        input_dim=d,
        hidden_count=hidden_count,
        input_weights=weights,
        biases=biases,
        output_weights=np.zeros(hidden_count),
        input_offset=offset,
        input_scale=scale,
        seed=seed,
    )
    H = model.hidden(X)
    model.output_weights = np.linalg.pinv(H, rcond=PINV_RCOND) @ y
    return model


def predict(model: ElmModel, X: np.ndarray) -> np.ndarray:
    """Network output for raw inputs."""
    X = _as_matrix(X)
    if X.shape[1] != model.input_dim:
        raise ElmError(f"Model expects {model.input_dim} input columns, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ElmError("Prediction inputs must be finite")
    return model.hidden(X) @ model.output_weights


def rmse(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    return float(np.sqrt(np.mean((np.asarray(y_true) - np.asarray(y_pred)) ** 2)))


def r_squared(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    y_true = np.asarray(y_true, dtype=float)
    total = float(np.sum((y_true - y_true.mean()) ** 2))
    if total == 0:
        return float("nan")
    return 1.0 - float(np.sum((y_true - np.asarray(y_pred)) ** 2)) / total


def holdout_split(n: int, holdout_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded random split into (train, test) index arrays."""
    if not 0.0 < holdout_fraction <= 0.5:
        raise ElmError(f"holdout_fraction must be in (0, 0.5], got {holdout_fraction}")
    n_test = max(1, int(round(holdout_fraction * n)))
    if n - n_test < 2:
        raise ElmError(f"{n} samples leave fewer than 2 for training")
    order = np.random.default_rng(seed).permutation(n)
    return np.sort(order[n_test:]), np.sort(order[:n_test])


def select_hidden_nodes(
    X: np.ndarray,
    y: np.ndarray,
    candidates=DEFAULT_CANDIDATES,
    holdout_fraction: float = 0.2,
    seed: int = 0,
) -> NodeSelection:
    """Pick the hidden-node count with the lowest holdout RMSE.

    Ties within 1e-12 go to the smaller count; candidates not smaller than the
    training set are skipped.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    candidates = sorted({int(c) for c in candidates})
    if not candidates:
        raise ElmError("No hidden-node candidates given")

    train, test = holdout_split(X.shape[0], holdout_fraction, seed)
    errors: dict[int, float] = {}
    scores: dict[int, float] = {}
    skipped = []
    for count in candidates:
        if count >= train.size:
            logger.warning(f"Skipping {count} hidden nodes: only {train.size} training samples")
            skipped.append(count)
            continue
        model = train_elm(X[train], y[train], count, seed)
        predicted = predict(model, X[test])
        errors[count] = rmse(y[test], predicted)
        scores[count] = r_squared(y[test], predicted)

    if not errors:
        raise ElmError(f"Every candidate is too large for {train.size} training samples")

    best = min(errors, key=lambda c: (errors[c], c))
    floor = errors[best]
    best = min(c for c, e in errors.items() if e - floor <= TIE_TOLERANCE)
    logger.info(f"Selected {best} hidden nodes (holdout RMSE {errors[best]:.4g})")
    return NodeSelection(
        best=best,
        test_rmse=errors,
        test_r2=scores,
        skipped=skipped,
        train_index=train,
        test_index=test,
    )


def predict_grid(
    model: ElmModel, bbox: tuple[float, float, float, float], resolution: float = 250.0
) -> GridMap:
    """Evaluate the model at every cell centre of a regular grid.

    Args:
        model: Trained two-input model (x, y coordinates)
        bbox: (x_min, y_min, x_max, y_max)
        resolution: Cell size in the coordinate unit

    Raises:
        ElmError: If the box is degenerate or the grid exceeds 10**8 cells
    """
    x_min, y_min, x_max, y_max = (float(v) for v in bbox)
    if resolution <= 0:
        raise ElmError(f"Grid resolution must be positive, got {resolution}")
    if not (x_max > x_min and y_max > y_min):
        raise ElmError(f"Degenerate bounding box {bbox}")
    n_cols = math.ceil((x_max - x_min) / resolution)
    n_rows = math.ceil((y_max - y_min) / resolution)
    if n_cols * n_rows > MAX_GRID_CELLS:
        raise ElmError(f"Grid of {n_cols} x {n_rows} cells exceeds {MAX_GRID_CELLS}")

    xs = x_min + (np.arange(n_cols) + 0.5) * resolution
    ys = y_min + (np.arange(n_rows) + 0.5) * resolution
    values = np.empty(n_rows * n_cols)
    # Row blocks keep the hidden matrix bounded on large grids
    rows_per_block = max(1, 200_000 // n_cols)
    for start in range(0, n_rows, rows_per_block):
        block = ys[start : start + rows_per_block]
        gx, gy = np.meshgrid(xs, block)
        points = np.column_stack([gx.ravel(), gy.ravel()])
        values[start * n_cols : start * n_cols + points.shape[0]] = predict(model, points)

    return GridMap(
        x_min=x_min,
        y_min=y_min,
        resolution=float(resolution),
        n_cols=n_cols,
        n_rows=n_rows,
        values=values,
    )
