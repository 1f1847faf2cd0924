"""Semantic vectors, semantic distance, RMSE and standardization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr


class SemanticsError(Exception):
    pass


class LengthMismatchError(SemanticsError):
    pass


class NonFiniteError(SemanticsError):
    pass


class ConstantColumnError(SemanticsError):
    pass


@dataclass(frozen=True)
class SemanticVector:
    """Output vector of a function on a fixed input sample."""

    values: np.ndarray
    finite: bool

    @classmethod
    def of(cls, values: np.ndarray) -> "SemanticVector":
        values = np.asarray(values, dtype=np.float64)
        return cls(values=values, finite=bool(np.all(np.isfinite(values))))

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class StandardizationParams:
    """Per-column mean and population standard deviation."""

    mean: np.ndarray
    std: np.ndarray


def sample_standard_inputs(m_sem: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """Draw an (m_sem, d) matrix of independent standard-normal inputs."""
    if m_sem < 2:
        raise ValueError("m_sem must be >= 2")
    return rng.standard_normal((m_sem, d))


def semantics_of(tree: expr.Node, points: np.ndarray) -> SemanticVector:
    """Semantics of a tree on the given input sample; never raises on overflow."""
    return SemanticVector.of(expr.evaluate(tree, points))


def _vals(s) -> np.ndarray:
    return s.values if isinstance(s, SemanticVector) else np.asarray(s, dtype=np.float64)


def semantic_distance(s1, s2) -> float:
    """Euclidean distance between two semantic vectors."""
    a, b = _vals(s1), _vals(s2)
    if a.shape != b.shape:
        raise LengthMismatchError(f"lengths {a.shape} vs {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise NonFiniteError("semantic distance requires finite vectors")
    return float(np.linalg.norm(a - b))


def rmse(y, y_hat) -> float:
    """Root mean squared error, ||Y - Yhat||_2 / sqrt(m).

    Non-finite predictions yield +inf (worst fitness) rather than NaN.
    """
    a, b = _vals(y), _vals(y_hat)
    if a.shape != b.shape:
        raise LengthMismatchError(f"lengths {a.shape} vs {b.shape}")
    if not np.all(np.isfinite(b)):
        return float("inf")
    return float(np.linalg.norm(a - b) / np.sqrt(len(a)))


def standardize(matrix: np.ndarray, params: StandardizationParams = None):
    """Scale columns to zero mean, unit population std.

    When ``params`` is given, applies it; otherwise fits on the data.
    Returns (transformed, params). 1-D input is treated as a single column.
    """
    arr = np.asarray(matrix, dtype=np.float64)
    squeeze = arr.ndim == 1
    if squeeze:
        arr = arr[:, None]
    if params is None:
        mean = arr.mean(axis=0)
        std = arr.std(axis=0)  # population convention (divide by n)
        if np.any(std == 0.0):
            bad = int(np.flatnonzero(std == 0.0)[0])
            raise ConstantColumnError(f"column {bad} is constant")
        params = StandardizationParams(mean=mean, std=std)
    out = (arr - params.mean) / params.std
    if squeeze:
        out = out[:, 0]
    return out, params
