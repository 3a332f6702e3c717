"""One-dimensional expanding base maps with singular sets.

Three map families are shipped: the Lorenz quotient map
f(x) = sign(x)(2|x|^alpha - 1) on [-1,1] with a singularity at 0, the
doubling map 2x mod 1 on [0,1) as an exactly solvable oracle, and a planar
skew product (x,y) -> (f(x), lambda_s*y + b*sign(x)) whose vertical leaves
contract uniformly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import HitSingularity, OutOfDomain, SingularInput

# orbits that come this close to the singular set abort: below the guard,
# |x|^(alpha-1) overflows and log|x| is no longer meaningful
SINGULARITY_GUARD = 1e-300

# results pushed out of the domain by rounding are clamped back; anything
# beyond this slack is a genuine escape and raises OutOfDomain
CLAMP_SLACK = 1e-12

KIND_LORENZ_QUOTIENT = "lorenz_quotient"
KIND_DOUBLING = "doubling"
KIND_GEOMETRIC_2D = "geometric_lorenz_2d"


@dataclass(frozen=True)
class LorenzQuotientParams:
    """Exponent of the quotient map; expansion needs alpha > sqrt(2)/2."""

    alpha: float = 0.75

    def __post_init__(self):
        if not (math.sqrt(0.5) < self.alpha < 1.0):
            raise ValueError(f"alpha must lie in (sqrt(2)/2, 1), got {self.alpha}")


@dataclass(frozen=True)
class DoublingParams:
    pass


@dataclass(frozen=True)
class GeometricLorenz2DParams:
    """Skew product over the quotient map with uniform leaf contraction."""

    alpha: float = 0.75
    lambda_s: float = 0.2
    offset: float = 0.5

    def __post_init__(self):
        if not (math.sqrt(0.5) < self.alpha < 1.0):
            raise ValueError(f"alpha must lie in (sqrt(2)/2, 1), got {self.alpha}")
        if not (0.0 < self.lambda_s < 1.0):
            raise ValueError(f"lambda_s must lie in (0,1), got {self.lambda_s}")
        if self.offset <= 0.0 or self.lambda_s + self.offset > 1.0:
            # keeps both branch images inside [-1,1] on the y axis
            raise ValueError("offset must be positive with lambda_s + offset <= 1")


@dataclass(frozen=True)
class MapModel:
    """A base map together with its domain and singular set."""

    kind: str
    params: object
    domain: tuple[float, float]
    singular_set: tuple[float, ...]
    half_open: bool = False  # domain [lo, hi) instead of [lo, hi]

    def domain_length(self) -> float:
        return self.domain[1] - self.domain[0]

    def contains(self, x: float) -> bool:
        lo, hi = self.domain
        return (lo <= x < hi) if self.half_open else (lo <= x <= hi)


def lorenz_quotient(alpha: float = 0.75) -> MapModel:
    return MapModel(
        kind=KIND_LORENZ_QUOTIENT,
        params=LorenzQuotientParams(alpha=alpha),
        domain=(-1.0, 1.0),
        singular_set=(0.0,),
    )


def doubling() -> MapModel:
    return MapModel(
        kind=KIND_DOUBLING,
        params=DoublingParams(),
        domain=(0.0, 1.0),
        singular_set=(),
        half_open=True,
    )


def geometric_lorenz_2d(alpha: float = 0.75, lambda_s: float = 0.2,
                        offset: float = 0.5) -> MapModel:
    return MapModel(
        kind=KIND_GEOMETRIC_2D,
        params=GeometricLorenz2DParams(alpha=alpha, lambda_s=lambda_s, offset=offset),
        domain=(-1.0, 1.0),
        singular_set=(0.0,),
    )


@dataclass(frozen=True)
class OrbitSegment:
    """A finite orbit x_0, f(x_0), ..., recorded for inspection.

    ``iterates`` holds the points actually produced; when the orbit enters
    the singularity guard, ``hit_index`` is the iterate at which it aborted
    and the sequence stops there.
    """

    initial: float
    iterates: np.ndarray
    hit_index: int | None = None

    @property
    def length(self) -> int:
        return len(self.iterates)


def min_singular_distance(x: float, singular_set: Sequence[float]) -> float:
    if not singular_set:
        return math.inf
    return min(abs(x - s) for s in singular_set)


def _check_point(model: MapModel, x: float) -> None:
    if not model.contains(x):
        raise OutOfDomain(f"{x} outside domain {model.domain}")
    if min_singular_distance(x, model.singular_set) <= SINGULARITY_GUARD:
        raise SingularInput(f"{x} within guard of singular set")


def _clamp(model: MapModel, y: float) -> float:
    lo, hi = model.domain
    if y < lo:
        if lo - y > CLAMP_SLACK:
            raise OutOfDomain(f"map image {y} escaped domain {model.domain}")
        return lo
    if y > hi:
        if y - hi > CLAMP_SLACK:
            raise OutOfDomain(f"map image {y} escaped domain {model.domain}")
        return hi
    return y


def _quotient_alpha(model: MapModel) -> float:
    return model.params.alpha


def eval_map(model: MapModel, x: float) -> float:
    """Apply the base map once."""
    _check_point(model, x)
    if model.kind == KIND_DOUBLING:
        y = 2.0 * x
        return y - 1.0 if y >= 1.0 else y
    alpha = _quotient_alpha(model)
    y = 2.0 * abs(x) ** alpha - 1.0
    return _clamp(model, y if x > 0.0 else -y)


def log_deriv(model: MapModel, x: float) -> float:
    """log|f'(x)|; the expansion observable is its negative."""
    _check_point(model, x)
    if model.kind == KIND_DOUBLING:
        return math.log(2.0)
    alpha = _quotient_alpha(model)
    return math.log(2.0 * alpha) + (alpha - 1.0) * math.log(abs(x))


def dist_delta(x: float, singular_set: Sequence[float], delta: float) -> float:
    """Distance to the singular set truncated at delta: d if d < delta, else 1."""
    if delta <= 0.0:
        raise ValueError(f"delta must be positive, got {delta}")
    d = min_singular_distance(x, singular_set)
    if d == 0.0:
        raise SingularInput(f"{x} lies in the singular set")
    return d if d < delta else 1.0


def iterate_orbit(model: MapModel, x: float, n: int) -> OrbitSegment:
    """Record x_0 .. x_n, stopping early if the guard is entered."""
    pts = np.empty(n + 1)
    pts[0] = x
    cur = x
    for j in range(n):
        if min_singular_distance(cur, model.singular_set) <= SINGULARITY_GUARD:
            return OrbitSegment(initial=x, iterates=pts[: j + 1].copy(), hit_index=j)
        cur = eval_map(model, cur)
        pts[j + 1] = cur
    return OrbitSegment(initial=x, iterates=pts)


def birkhoff_sum(model: MapModel, phi: Callable[[float], float], x: float, n: int) -> float:
    """Sum of phi over the first n orbit points x, f(x), ..., f^(n-1)(x)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    terms = []
    cur = x
    for j in range(n):
        if min_singular_distance(cur, model.singular_set) <= SINGULARITY_GUARD:
            raise HitSingularity(j)
        terms.append(phi(cur))
        if j + 1 < n:
            cur = eval_map(model, cur)
    return math.fsum(terms)


def expansion_average(model: MapModel, x: float, n: int) -> float:
    """Birkhoff average of -log|f'| over n iterates; negative means expansion."""
    return -birkhoff_sum(model, lambda t: log_deriv(model, t), x, n) / n


def recurrence_average(model: MapModel, x: float, n: int, delta: float) -> float:
    """Birkhoff average of |log d_delta(., S)|; zero iff the orbit avoids B(S, delta)."""
    return birkhoff_sum(
        model, lambda t: abs(math.log(dist_delta(t, model.singular_set, delta))), x, n
    ) / n


def eval_2d(model: MapModel, p: tuple[float, float]) -> tuple[float, float]:
    """One step of the planar skew product; leaves {x = const} map to leaves."""
    if model.kind != KIND_GEOMETRIC_2D:
        raise ValueError(f"eval_2d needs a {KIND_GEOMETRIC_2D} model, got {model.kind}")
    x, y = p
    _check_point(model, x)
    prm = model.params
    u = 2.0 * abs(x) ** prm.alpha - 1.0
    x1 = _clamp(model, u if x > 0.0 else -u)
    y1 = prm.lambda_s * y + prm.offset * (1.0 if x > 0.0 else -1.0)
    return (x1, y1)


# vectorized forms of the map, derivative, and truncated distance, used by
# the Monte Carlo layers; singularity handling is the caller's job (points
# inside the guard should be masked out before calling)

def map_batch(model: MapModel, xs: np.ndarray) -> np.ndarray:
    if model.kind == KIND_DOUBLING:
        return (2.0 * xs) % 1.0
    alpha = _quotient_alpha(model)
    out = np.sign(xs) * (2.0 * np.abs(xs) ** alpha - 1.0)
    return np.clip(out, model.domain[0], model.domain[1])


def log_deriv_batch(model: MapModel, xs: np.ndarray) -> np.ndarray:
    if model.kind == KIND_DOUBLING:
        return np.full(xs.shape, math.log(2.0))
    alpha = _quotient_alpha(model)
    return math.log(2.0 * alpha) + (alpha - 1.0) * np.log(np.abs(xs))


def dist_delta_batch(model: MapModel, xs: np.ndarray, delta: float) -> np.ndarray:
    if not model.singular_set:
        return np.ones(xs.shape)
    d = np.abs(xs[..., None] - np.asarray(model.singular_set)).min(axis=-1)
    return np.where(d < delta, d, 1.0)
