"""Gauss-Legendre rules on [0, 1] and segment integrals of gradients."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .matfun import DimensionError

__all__ = [
    "FECounter",
    "DivergenceError",
    "QuadratureRule",
    "gauss_legendre",
    "legendre_newton_nodes",
    "avf_segment_integral",
    "weighted_segment_integral",
]

MAX_POINTS = 10


class DivergenceError(ArithmeticError):
    """A gradient evaluation produced non-finite values."""


@dataclass
class FECounter:
    """Running count of gradient evaluations for a single run."""

    count: int = 0

    def add(self, n: int = 1) -> None:
        self.count += n


@dataclass(frozen=True)
class QuadratureRule:
    """Weights ``b`` and nodes ``c`` on [0, 1].

    ``c_mirror[i]`` holds the node paired with ``c[i]`` under ``c -> 1 - c``;
    evaluation points are formed as ``c_mirror[i]*y0 + c[i]*y1`` so swapping
    the endpoints permutes the points exactly.
    """

    weights: np.ndarray
    nodes: np.ndarray
    order_s: int
    c_mirror: np.ndarray = field(repr=False)

    @property
    def points(self) -> list[tuple[float, float]]:
        return [(float(b), float(c)) for b, c in zip(self.weights, self.nodes)]

    def __len__(self) -> int:
        return self.order_s


# Closed forms for s = 1..3; the Newton path reproduces them to rounding.
_CLOSED = {
    1: ((1.0,), (0.5,)),
    2: ((0.5, 0.5), (0.5 - math.sqrt(3.0) / 6.0, 0.5 + math.sqrt(3.0) / 6.0)),
    3: (
        (5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0),
        (0.5 - math.sqrt(15.0) / 10.0, 0.5, 0.5 + math.sqrt(15.0) / 10.0),
    ),
}


def legendre_newton_nodes(s: int, tol: float = 1e-15) -> tuple[np.ndarray, np.ndarray]:
    """Roots and weights of the degree-``s`` Legendre polynomial on [-1, 1].

    Newton iteration from Chebyshev initial guesses, with the three-term
    recurrence for ``P_s`` and its derivative.
    """
    k = np.arange(1, s + 1)
    x = -np.cos((2 * k - 1) * np.pi / (2 * s))
    for _ in range(100):
        p0 = np.ones_like(x)
        p1 = x.copy()
        for n in range(2, s + 1):
            p0, p1 = p1, ((2 * n - 1) * x * p1 - (n - 1) * p0) / n
        dp = s * (x * p1 - p0) / (x**2 - 1)
        dx = p1 / dp
        x = x - dx
        if np.max(np.abs(dx)) <= tol:
            break
    p0 = np.ones_like(x)
    p1 = x.copy()
    for n in range(2, s + 1):
        p0, p1 = p1, ((2 * n - 1) * x * p1 - (n - 1) * p0) / n
    dp = s * (x * p1 - p0) / (x**2 - 1)
    w = 2.0 / ((1 - x**2) * dp**2)
    return x, w


def gauss_legendre(s: int) -> QuadratureRule:
    """The ``s``-point Gauss-Legendre rule shifted to [0, 1], ``1 <= s <= 10``."""
    if not isinstance(s, (int, np.integer)) or isinstance(s, bool) or not 1 <= s <= MAX_POINTS:
        raise ValueError(f"quadrature points must be an integer in [1, {MAX_POINTS}], got {s!r}")
    s = int(s)
    if s in _CLOSED:
        b, c = (np.array(v) for v in _CLOSED[s])
    else:
        x, w = legendre_newton_nodes(s)
        # enforce exact mirror symmetry
        x = 0.5 * (x - x[::-1])
        w = 0.5 * (w + w[::-1])
        b = w / 2.0
        c = (1.0 + x) / 2.0
    c_mirror = c[::-1].copy()
    for arr in (b, c, c_mirror):
        arr.setflags(write=False)
    return QuadratureRule(b, c, s, c_mirror)


def _paired_sum(terms: list[np.ndarray]) -> np.ndarray:
    # sum mirrored pairs first so that reversing the list gives identical bits
    s = len(terms)
    total = None
    for i in range(s // 2):
        pair = terms[i] + terms[s - 1 - i]
        total = pair if total is None else total + pair
    if s % 2:
        mid = terms[s // 2]
        total = mid if total is None else total + mid
    return total


def _segment_terms(gradient, weights, y0, y1, rule, counter):
    y0 = np.asarray(y0, dtype=float)
    y1 = np.asarray(y1, dtype=float)
    if y0.shape != y1.shape:
        raise DimensionError(f"endpoint shapes differ: {y0.shape} vs {y1.shape}")
    terms = []
    for b, c, cm in zip(weights, rule.nodes, rule.c_mirror):
        g = np.asarray(gradient(cm * y0 + c * y1), dtype=float)
        if g.shape != y0.shape:
            raise DimensionError(f"gradient returned shape {g.shape}, expected {y0.shape}")
        if not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite gradient value inside segment integral")
        terms.append(b * g)
    if counter is not None:
        counter.add(rule.order_s)
    return terms


def avf_segment_integral(
    gradient: Callable[[np.ndarray], np.ndarray],
    y0,
    y1,
    rule: QuadratureRule,
    counter: FECounter | None = None,
) -> np.ndarray:
    """Approximate the mean of ``gradient`` along the segment from ``y0`` to ``y1``.

    Returns ``sum_i b_i * gradient((1 - c_i) y0 + c_i y1)``, using exactly
    ``rule.order_s`` gradient evaluations, which are added to ``counter``.
    """
    return _paired_sum(_segment_terms(gradient, rule.weights, y0, y1, rule, counter))


def weighted_segment_integral(
    gradient: Callable[[np.ndarray], np.ndarray],
    weight_poly: Callable[[float], float],
    y0,
    y1,
    rule: QuadratureRule,
    counter: FECounter | None = None,
) -> np.ndarray:
    """As :func:`avf_segment_integral` with a scalar weight ``weight_poly(tau)``."""
    w = np.array([b * weight_poly(c) for b, c in zip(rule.weights, rule.nodes)])
    return sum(_segment_terms(gradient, w, y0, y1, rule, counter))
