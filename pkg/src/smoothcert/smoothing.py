"""Gaussian-smoothed classifier: Monte Carlo counts, certified radii, certifiers.

Two certifiers are provided. ``certify_baseline`` lower-bounds the top-class
probability and takes ``1 - p_lower`` as the runner-up bound. ``t_certify``
bounds both separately, splitting the significance budget as
``alpha' = t * alpha`` for each ``t`` in a grid and keeping the best radius.
Both have count-level variants (``*_from_counts``) so the two can be run on
one shared draw.
"""

from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np

from .bounds import SignificanceSplit, bound_pair, cp_lower
from .rng import split
from .special import std_normal_quantile

__all__ = [
    "ABSTAIN",
    "CERTIFIED",
    "DEFAULT_GRID",
    "SmoothingConfig",
    "CertificationParams",
    "GridPoint",
    "CertificationOutcome",
    "sample_under_noise",
    "certified_radius",
    "certify_baseline_from_counts",
    "t_certify_from_counts",
    "draw_counts",
    "certify_baseline",
    "t_certify",
    "predict_smoothed",
]

ABSTAIN = "abstain"
CERTIFIED = "certified"
ABSTAIN_LABEL = -1
DEFAULT_GRID = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
SAMPLE_BATCH = 10_000


@dataclass(frozen=True)
class SmoothingConfig:
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma!r}")


@dataclass(frozen=True)
class CertificationParams:
    n0: int = 100
    n: int = 100_000
    alpha: float = 0.001
    grid: Tuple[float, ...] = DEFAULT_GRID

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(float(t) for t in self.grid))
        if self.n0 < 1 or self.n < 1:
            raise ValueError("n0 and n must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        if not self.grid:
            raise ValueError("grid must not be empty")
        if any(not 0.0 < t <= 1.0 for t in self.grid):
            raise ValueError("grid fractions must lie in (0, 1]")
        if 1.0 not in self.grid:
            raise ValueError("grid must contain 1.0")


@dataclass(frozen=True)
class GridPoint:
    alpha_prime: float
    p_lower: float
    p_upper: float
    radius: float


@dataclass(frozen=True)
class CertificationOutcome:
    status: str
    label: int = ABSTAIN_LABEL
    radius: float = 0.0
    diagnostics: Tuple[GridPoint, ...] = field(default=(), compare=False)

    @property
    def certified(self) -> bool:
        return self.status == CERTIFIED

    @classmethod
    def abstain(cls, diagnostics=()) -> "CertificationOutcome":
        return cls(ABSTAIN, ABSTAIN_LABEL, 0.0, tuple(diagnostics))


def sample_under_noise(model, x, m: int, sigma: float, rng: np.random.Generator,
                       batch_size: int = SAMPLE_BATCH) -> np.ndarray:
    """Class counts of ``model.predict(x + delta)`` over ``m`` draws of N(0, sigma^2 I)."""
    if m < 1:
        raise ValueError("need at least one sample")
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != model.input_dim:
        raise ValueError(f"input has dimension {x.shape[0]}, model expects {model.input_dim}")
    counts = np.zeros(model.num_classes, dtype=np.int64)
    remaining = m
    while remaining:
        b = min(batch_size, remaining)
        noise = rng.standard_normal((b, x.shape[0])) * sigma
        counts += np.bincount(model.predict(x + noise), minlength=model.num_classes)
        remaining -= b
    return counts


def certified_radius(p_lower: float, p_upper: float, sigma: float) -> float:
    """``sigma/2 * (q(p_lower) - q(p_upper))``; may be negative."""
    if not (0.0 < p_lower < 1.0 and 0.0 < p_upper < 1.0):
        raise ValueError(f"probabilities must be interior, got {p_lower!r}, {p_upper!r}")
    return 0.5 * sigma * (std_normal_quantile(p_lower) - std_normal_quantile(p_upper))


def certify_baseline_from_counts(counts: Sequence[int], top: int, sigma: float,
                                 alpha: float) -> CertificationOutcome:
    counts = np.asarray(counts, dtype=np.int64)
    n = int(counts.sum())
    p_lower = cp_lower(int(counts[top]), n, alpha)
    if p_lower > 0.5:
        radius = sigma * std_normal_quantile(p_lower)
        point = GridPoint(alpha, p_lower, 1.0 - p_lower, radius)
        return CertificationOutcome(CERTIFIED, int(top), radius, (point,))
    return CertificationOutcome.abstain((GridPoint(alpha, p_lower, 1.0 - p_lower, 0.0),))


def t_certify_from_counts(counts: Sequence[int], top: int, sigma: float, alpha: float,
                          grid: Sequence[float] = DEFAULT_GRID) -> CertificationOutcome:
    counts = [int(c) for c in counts]
    points = []
    best = 0.0
    for t in grid:
        alpha_prime = min(t * alpha, alpha)
        bp = bound_pair(counts, top, SignificanceSplit(alpha, alpha_prime))
        r = 0.0
        if bp.p_lower > 0.5:
            r = max(certified_radius(bp.p_lower, bp.p_upper, sigma), 0.0)
        points.append(GridPoint(alpha_prime, bp.p_lower, bp.p_upper, r))
        best = max(best, r)
    if best > 0.0:
        return CertificationOutcome(CERTIFIED, int(top), best, tuple(points))
    return CertificationOutcome.abstain(points)


def draw_counts(model, x, sigma: float, params: CertificationParams,
                rng: np.random.Generator) -> Tuple[int, np.ndarray]:
    """Selection draw (n0) then estimation draw (n) on independent child streams."""
    sel_rng, est_rng = split(rng, 2)
    c0 = sample_under_noise(model, x, params.n0, sigma, sel_rng)
    top = int(np.argmax(c0))
    return top, sample_under_noise(model, x, params.n, sigma, est_rng)


def certify_baseline(model, x, cfg: SmoothingConfig, params: CertificationParams,
                     rng: np.random.Generator) -> CertificationOutcome:
    top, counts = draw_counts(model, x, cfg.sigma, params, rng)
    return certify_baseline_from_counts(counts, top, cfg.sigma, params.alpha)


def t_certify(model, x, cfg: SmoothingConfig, params: CertificationParams,
              rng: np.random.Generator) -> CertificationOutcome:
    top, counts = draw_counts(model, x, cfg.sigma, params, rng)
    return t_certify_from_counts(counts, top, cfg.sigma, params.alpha, params.grid)


def predict_smoothed(model, x, cfg: SmoothingConfig, m: int,
                     rng: np.random.Generator) -> int:
    return int(np.argmax(sample_under_noise(model, x, m, cfg.sigma, rng)))
