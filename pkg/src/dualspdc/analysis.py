"""Fringe fitting and CHSH estimation from counts."""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

from .errors import UndefinedCorrelationError


class FringeFit(NamedTuple):
    offset: float
    amplitude: float
    phase: float
    visibility: float
    visibility_err: float

    def maximum_theta2(self) -> float:
        """Analyzer-2 angle in [0, pi) where the fitted fringe peaks."""
        return (-self.phase / 2) % math.pi


def fit_fringe(theta2: Sequence[float], y: Sequence[float], sigma: Sequence[float] | None = None) -> FringeFit:
    """Weighted least squares of y = a + b cos(2 theta2 + c).

    Linear in (a, b cos c, -b sin c). Visibility is |b|/a and its error comes
    from the parameter covariance, taking ``sigma`` as absolute errors.
    """
    th = np.asarray(theta2, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if sigma is None else 1.0 / np.asarray(sigma, dtype=float) ** 2
    X = np.column_stack([np.ones_like(th), np.cos(2 * th), np.sin(2 * th)])
    normal = X.T @ (X * w[:, None])
    cov = np.linalg.inv(normal)
    a, p, q = cov @ (X.T @ (w * y))
    b = math.hypot(p, q)
    vis = b / a
    if b > 0:
        grad = np.array([-vis / a, p / (b * a), q / (b * a)])
        vis_err = math.sqrt(max(float(grad @ cov @ grad), 0.0))
    else:
        vis_err = math.sqrt(cov[1, 1] + cov[2, 2]) / abs(a)
    if sigma is None:
        vis_err = 0.0
    return FringeFit(float(a), b, math.atan2(-q, p), vis, vis_err)


def correlation_from_counts(n_pp: float, n_pm: float, n_mp: float, n_mm: float, variances: Sequence[float]) -> tuple[float, float]:
    """E = (N++ + N-- - N+- - N-+) / sum and its propagated standard error.

    ``variances`` are ordered like the counts (++, +-, -+, --).
    """
    counts = np.array([n_pp, n_pm, n_mp, n_mm], dtype=float)
    signs = np.array([1.0, -1.0, -1.0, 1.0])
    total = counts.sum()
    if total <= 0:
        raise UndefinedCorrelationError("no coincidences in any of the four settings")
    E = float(signs @ counts / total)
    grad = (signs - E) / total
    return E, math.sqrt(float(grad**2 @ np.asarray(variances, dtype=float)))


def chsh_from_correlations(E: Sequence[float], E_err: Sequence[float]) -> tuple[float, float]:
    """S and its error from E(a,b), E(a,b'), E(a',b), E(a',b')."""
    e_ab, e_abp, e_apb, e_apbp = E
    S = abs(e_ab - e_abp) + abs(e_apb + e_apbp)
    return S, math.sqrt(sum(x * x for x in E_err))
