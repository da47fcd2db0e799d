"""Evaluation helpers: squared L2 distances, sphere deviation, repetition summaries."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatch


@dataclass
class ErrorReport:
    """Mean and standard deviation (n - 1 denominator) of each metric over repetitions."""

    values: dict = field(default_factory=dict)

    def add(self, name, value):
        self.values.setdefault(name, []).append(float(value))

    def summary(self):
        return {k: repetition_stats(v) for k, v in self.values.items()}


def l2_sq_distance(f, g, grid=None):
    """Trapezoid integral of ``(f - g)^2`` over ``grid`` (uniform on [0, 1] by default).

    ``f`` and ``g`` may be ``(M,)`` or ``(M, C)``; channels are summed.
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != g.shape:
        raise GridMismatch(f"shapes differ: {f.shape} vs {g.shape}")
    grid = np.linspace(0.0, 1.0, len(f)) if grid is None else np.asarray(grid, dtype=float)
    if len(grid) != len(f):
        raise GridMismatch("grid length does not match the samples")
    d = (f - g) ** 2
    if d.ndim > 1:
        d = d.reshape(len(f), -1).sum(axis=1)
    return float(np.trapezoid(d, grid))


def resample(grid, values, new_grid):
    """Linear interpolation of samples (``(M,)`` or ``(M, C)``) onto ``new_grid``."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        return np.interp(new_grid, grid, values)
    return np.stack([np.interp(new_grid, grid, values[:, c]) for c in range(values.shape[1])], axis=1)


def l2_sq_distance_on(grid_f, f, grid_g, g, grid=None):
    """As :func:`l2_sq_distance` after resampling both onto ``grid`` (default ``grid_g``)."""
    grid = np.asarray(grid_g if grid is None else grid, dtype=float)
    return l2_sq_distance(resample(grid_f, f, grid), resample(grid_g, g, grid), grid)


def d_norm(points):
    """``sum_j | <X_j, X_j> - 1 |``; accepts an array or any object with ``points``."""
    P = np.asarray(getattr(points, "points", points), dtype=float)
    return float(np.sum(np.abs(np.einsum("ij,ij->i", P, P) - 1.0)))


def repetition_stats(values):
    """Sample mean and standard deviation (``ddof=1``; 0 for a single value)."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("need at least one value")
    sd = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
    return float(np.mean(v)), sd
