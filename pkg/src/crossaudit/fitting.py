"""Logistic least-squares fit of node density versus demographic share."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .geo import geometry_bounds, GeoPoint, point_in_region
from .ingest import ElementSet, Region
from .model import CrossCategory, ElementKind, OsmElement, classify_element

__all__ = [
    "LogisticParams",
    "DensityRow",
    "DensityResult",
    "FitResult",
    "logistic",
    "densities_by_region",
    "fit_logistic",
    "rise_interval",
    "sample_curve",
]

log = logging.getLogger(__name__)

_EXP_CLAMP = 709.0  # beyond this exp() overflows a double

MAX_ITERATIONS = 200
RELATIVE_COST_TOLERANCE = 1e-10
INITIAL_DAMPING = 1e-3
JACOBIAN_STEP_SCALE = 1e-6


@dataclass(frozen=True)
class LogisticParams:
    """Parameters of f(x) = a / (1 + exp(-k*(x - x0))) + b.

    a: amplitude between the two asymptotes (b below, a+b above);
    k: steepness per unit of x; x0: threshold location. Fitted parameters
    are canonicalized to a >= 0, which pins down the otherwise twofold
    parameterization of the same curve.
    """

    a: float
    k: float
    x0: float
    b: float

    def __post_init__(self) -> None:
        for name in ("a", "k", "x0", "b"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"parameter {name} is not finite")


@dataclass(frozen=True)
class DensityRow:
    region_id: str
    count: int
    density: float
    catholic_share_pct: float


@dataclass(frozen=True)
class DensityResult:
    rows: tuple[DensityRow, ...]
    unassigned_nodes: int
    regions_without_census: tuple[str, ...]


@dataclass(frozen=True)
class FitResult:
    params: LogisticParams
    rmse: float
    n_iter: int
    converged: bool


def logistic(x: float, p: LogisticParams) -> float:
    """Evaluate the logistic curve; exp overflow saturates to the asymptotes."""
    z = -p.k * (x - p.x0)
    if z > _EXP_CLAMP:
        return p.b
    if z < -_EXP_CLAMP:
        return p.a + p.b
    return p.a / (1.0 + math.exp(z)) + p.b


def _logistic_vec(x: np.ndarray, p: np.ndarray) -> np.ndarray:
    a, k, x0, b = p
    z = np.clip(-k * (x - x0), -_EXP_CLAMP, _EXP_CLAMP)
    return a / (1.0 + np.exp(z)) + b


def densities_by_region(
    elements: ElementSet | Iterable[OsmElement],
    regions: Sequence[Region],
    categories: Iterable[CrossCategory],
) -> DensityResult:
    """Per-region areal density of nodes in any of the categories.

    A node tagged with several of the categories counts once. Regions
    without census data are excluded (their ids are reported); nodes
    falling in no region are tallied as unassigned.
    """
    cats = set(categories)
    usable = [r for r in regions if r.census is not None]
    excluded = tuple(r.region_id for r in regions if r.census is None)
    bounds = [geometry_bounds(r.geometry) for r in usable]

    counts = {r.region_id: 0 for r in usable}
    unassigned = 0
    inner = getattr(elements, "elements", elements)
    for element in inner:
        if element.kind is not ElementKind.NODE:
            continue
        if not (classify_element(element) & cats):
            continue
        point = GeoPoint(lat=element.lat, lon=element.lon)
        assigned = False
        for region, (lat_lo, lon_lo, lat_hi, lon_hi) in zip(usable, bounds):
            if not (lat_lo <= point.lat <= lat_hi and lon_lo <= point.lon <= lon_hi):
                continue
            if point_in_region(point, region):
                counts[region.region_id] += 1
                assigned = True
                break
        if not assigned:
            unassigned += 1

    rows = tuple(
        DensityRow(
            region_id=r.region_id,
            count=counts[r.region_id],
            density=counts[r.region_id] / r.area_km2,
            catholic_share_pct=r.census.catholic_share * 100.0,
        )
        for r in usable
    )
    return DensityResult(
        rows=rows, unassigned_nodes=unassigned, regions_without_census=excluded
    )


def _canonicalize(p: np.ndarray) -> np.ndarray:
    a, k, x0, b = p
    if a < 0:
        return np.array([-a, -k, x0, a + b])
    return p


def fit_logistic(
    points: Sequence[tuple[float, float]],
    weights: Sequence[float] | None = None,
) -> FitResult:
    """Levenberg-Marquardt least squares of the logistic curve.

    Forward-difference Jacobian with per-parameter step 1e-6*max(|p|, 1);
    damping starts at 1e-3, grows tenfold on a rejected step and shrinks
    tenfold on an accepted one; stops when the relative cost change drops
    below 1e-10 or after 200 steps. Flat data (all y equal) returns a
    degenerate a=0 fit flagged as not converged.
    """
    if len(points) < 5:
        raise ValueError(f"need at least 5 points, got {len(points)}")
    x = np.asarray([p[0] for p in points], dtype=float)
    y = np.asarray([p[1] for p in points], dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite input point")
    if np.all(x == x[0]):
        raise ValueError("x values must not all be equal")
    if weights is None:
        w = np.ones_like(y)
    else:
        w = np.asarray(list(weights), dtype=float)
        if w.shape != y.shape or np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite, non-negative, one per point")
    sqrt_w = np.sqrt(w)

    if np.all(y == y[0]):
        params = LogisticParams(a=0.0, k=0.0, x0=float(np.median(x)), b=float(y[0]))
        return FitResult(params=params, rmse=0.0, n_iter=0, converged=False)

    # initial guess: baseline at the low plateau, amplitude spanning the
    # data, threshold at the x median, gentle slope across the x range
    p = np.array(
        [
            float(y.max() - y.min()),  # a
            4.0 / float(x.max() - x.min()),  # k
            float(np.median(x)),  # x0
            float(y.min()),  # b
        ]
    )

    def residuals(q: np.ndarray) -> np.ndarray:
        return sqrt_w * (y - _logistic_vec(x, q))

    r = residuals(p)
    cost = float(r @ r)
    tiny = float(np.finfo(float).tiny)
    lam = INITIAL_DAMPING
    n_iter = 0
    converged = False
    while n_iter < MAX_ITERATIONS:
        n_iter += 1
        jac = np.empty((len(x), 4))
        for j in range(4):
            step = JACOBIAN_STEP_SCALE * max(abs(p[j]), 1.0)
            shifted = p.copy()
            shifted[j] += step
            jac[:, j] = (residuals(shifted) - r) / step
        jtj = jac.T @ jac
        gradient = jac.T @ r
        damping = np.diag(np.maximum(np.diag(jtj), 1e-12))
        try:
            delta = np.linalg.solve(jtj + lam * damping, -gradient)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        trial = p + delta
        trial_r = residuals(trial)
        trial_cost = float(trial_r @ trial_r)
        if not math.isfinite(trial_cost) or trial_cost >= cost:
            # a rejected trial that cannot move the cost anymore means the
            # fit sits at the numerical floor, which satisfies the relative
            # change criterion just as well
            if (
                math.isfinite(trial_cost)
                and abs(trial_cost - cost) <= RELATIVE_COST_TOLERANCE * max(cost, tiny)
            ):
                converged = True
                break
            lam *= 10.0
            continue
        change = cost - trial_cost
        p, r, cost = trial, trial_r, trial_cost
        lam /= 10.0
        if change <= RELATIVE_COST_TOLERANCE * max(cost, tiny):
            converged = True
            break

    p = _canonicalize(p)
    rmse = math.sqrt(cost / float(w.sum())) if w.sum() > 0 else 0.0
    params = LogisticParams(a=float(p[0]), k=float(p[1]), x0=float(p[2]), b=float(p[3]))
    if not converged:
        log.warning("fit_logistic stopped after %d iterations without converging", n_iter)
    return FitResult(params=params, rmse=rmse, n_iter=n_iter, converged=converged)


def rise_interval(params: LogisticParams) -> tuple[float, float] | None:
    """x-interval where the curve climbs from 10% to 90% of its amplitude.

    Undefined (None) for flat fits with k = 0.
    """
    if params.k == 0:
        return None
    half_width = math.log(9.0) / abs(params.k)
    return (params.x0 - half_width, params.x0 + half_width)


def sample_curve(
    params: LogisticParams, x_min: float, x_max: float, n: int = 200
) -> list[tuple[float, float]]:
    """Evenly spaced curve samples for plot emission."""
    if n < 2:
        raise ValueError("need at least 2 samples")
    if x_max <= x_min:
        raise ValueError("x_max must exceed x_min")
    step = (x_max - x_min) / (n - 1)
    return [(x_min + i * step, logistic(x_min + i * step, params)) for i in range(n)]
