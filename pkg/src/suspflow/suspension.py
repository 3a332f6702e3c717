"""Suspension semiflow over a base map with a logarithmic roof.

The phase space is M_r = {(x,s): 0 <= s < r(x)} with roof
r(x) = r0 + K*|log d_delta(x,S)|.  The flow moves up the fiber at unit
speed and jumps (x, r(x)) -> (f(x), 0).  Time averages are computed by the
lap decomposition: an integral over the entry fiber segment, full-fiber
integrals of the induced observable along the base orbit, and an integral
over the exit segment.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .base_maps import (
    SINGULARITY_GUARD,
    MapModel,
    dist_delta,
    dist_delta_batch,
    eval_map,
    map_batch,
    min_singular_distance,
)
from .errors import HitSingularity, SingularInput


@dataclass(frozen=True)
class RoofSpec:
    """Roof r(x) = r0 + K*|log d_delta(x, S)|; bounded below by r0."""

    r0: float = 1.0
    K: float = 1.0
    delta: float = 0.1

    def __post_init__(self):
        if self.r0 <= 0.0:
            raise ValueError(f"r0 must be positive, got {self.r0}")
        if self.K < 0.0:
            raise ValueError(f"K must be nonnegative, got {self.K}")
        if self.delta <= 0.0:
            raise ValueError(f"delta must be positive, got {self.delta}")


@dataclass(frozen=True)
class SuspensionPoint:
    """A point (x, s) of M_r with 0 <= s < r(x)."""

    x: float
    s: float


@dataclass(frozen=True)
class LapResult:
    """Lap count n with S_n r(x) <= s+T < S_(n+1) r(x) and the bracketing sums."""

    n: int
    sum_n: float
    sum_np1: float
    residual: float


@dataclass(frozen=True)
class FlowObservable:
    """A bounded scalar observable psi(x, s) on the suspension space.

    ``fn`` must broadcast over numpy arrays in both arguments.  When the
    fiber integral of psi has a closed form, supply ``fiber_integral`` as
    (x, a, b) -> integral of psi(x, .) over [a, b]; quadrature is skipped
    entirely on that path.  Otherwise segments are integrated by composite
    Simpson with panel width ``panel_width`` and at least ``min_panels``
    panels.
    """

    fn: Callable
    bound: float
    fiber_integral: Callable | None = None
    panel_width: float = 0.05
    min_panels: int = 16

    def __post_init__(self):
        if self.bound < 0.0:
            raise ValueError("bound must be nonnegative")
        if self.panel_width <= 0.0 or self.min_panels < 2:
            raise ValueError("panel_width must be positive and min_panels >= 2")


def roof_eval(roof: RoofSpec, model: MapModel, x: float) -> float:
    """Roof value at x; equals r0 outside the delta-ball around S."""
    d = min_singular_distance(x, model.singular_set)
    if d <= SINGULARITY_GUARD:
        raise SingularInput(f"{x} within guard of singular set")
    return roof.r0 + roof.K * abs(math.log(dist_delta(x, model.singular_set, roof.delta)))


def roof_batch(roof: RoofSpec, model: MapModel, xs: np.ndarray) -> np.ndarray:
    dd = dist_delta_batch(model, xs, roof.delta)
    return roof.r0 + roof.K * np.abs(np.log(dd))


def _panel_count(length: float, width: float, min_panels: int) -> int:
    n = max(min_panels, math.ceil(length / width))
    return n + (n & 1)


def _segment_scalar(psi: FlowObservable, x: float, a: float, b: float) -> float:
    """Integral of psi(x, .) over the fiber segment [a, b]."""
    if b <= a:
        return 0.0
    if psi.fiber_integral is not None:
        return float(psi.fiber_integral(x, a, b))
    m = _panel_count(b - a, psi.panel_width, psi.min_panels)
    nodes = a + (b - a) * np.arange(m + 1) / m
    vals = np.asarray(psi.fn(x, nodes), dtype=float)
    weights = np.ones(m + 1)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    return (b - a) / (3.0 * m) * float(weights @ vals)


def _segment_batch(psi: FlowObservable, xs: np.ndarray, a: np.ndarray,
                   b: np.ndarray) -> np.ndarray:
    """Vectorized fiber-segment integrals, grouped by panel count."""
    if psi.fiber_integral is not None:
        return np.asarray(psi.fiber_integral(xs, a, b), dtype=float)
    out = np.zeros(xs.shape)
    lengths = b - a
    pos = lengths > 0.0
    if not pos.any():
        return out
    idx = np.flatnonzero(pos)
    counts = np.array([_panel_count(L, psi.panel_width, psi.min_panels)
                       for L in lengths[idx]])
    for m in np.unique(counts):
        g = idx[counts == m]
        frac = np.arange(m + 1) / m
        nodes = a[g, None] + lengths[g, None] * frac
        vals = np.asarray(psi.fn(xs[g, None], nodes), dtype=float)
        weights = np.ones(m + 1)
        weights[1:-1:2] = 4.0
        weights[2:-1:2] = 2.0
        out[g] = lengths[g] / (3.0 * m) * (vals @ weights)
    return out


def induced_observable(psi: FlowObservable, model: MapModel, roof: RoofSpec,
                       x: float) -> float:
    """phi(x) = integral of psi(x, .) over the full fiber [0, r(x)]."""
    return _segment_scalar(psi, x, 0.0, roof_eval(roof, model, x))


def induced_batch(psi: FlowObservable, model: MapModel, roof: RoofSpec,
                  xs: np.ndarray) -> np.ndarray:
    return _segment_batch(psi, xs, np.zeros(xs.shape), roof_batch(roof, model, xs))


def validate_point(model: MapModel, roof: RoofSpec, z: SuspensionPoint) -> None:
    r = roof_eval(roof, model, z.x)
    if not (0.0 <= z.s < r):
        raise ValueError(f"fiber coordinate {z.s} outside [0, {r})")


def lap_number(model: MapModel, roof: RoofSpec, x: float, s: float, T: float) -> LapResult:
    """Count base returns completed by time T from (x, s).

    Partial roof sums are accumulated with compensated summation so the
    bracketing S_n <= s+T < S_(n+1) survives thousands of laps.
    """
    if T < 0.0:
        raise ValueError(f"T must be nonnegative, got {T}")
    target = s + T
    total = 0.0
    comp = 0.0
    n = 0
    cur = x
    while True:
        if min_singular_distance(cur, model.singular_set) <= SINGULARITY_GUARD:
            raise HitSingularity(n)
        r_cur = roof_eval(roof, model, cur)
        # compensated add: new_total = total + r_cur
        y = r_cur - comp
        t = total + y
        new_comp = (t - total) - y
        if target < t:
            return LapResult(n=n, sum_n=total, sum_np1=t, residual=target - total)
        total, comp = t, new_comp
        cur = eval_map(model, cur)
        n += 1


def semiflow_evolve(model: MapModel, roof: RoofSpec, z: SuspensionPoint,
                    t: float) -> SuspensionPoint:
    """Flow (x, s) forward by time t >= 0."""
    if t < 0.0:
        raise ValueError(f"t must be nonnegative, got {t}")
    validate_point(model, roof, z)
    target = z.s + t
    total = 0.0
    comp = 0.0
    cur = z.x
    n = 0
    while True:
        if min_singular_distance(cur, model.singular_set) <= SINGULARITY_GUARD:
            raise HitSingularity(n)
        r_cur = roof_eval(roof, model, cur)
        y = r_cur - comp
        tt = total + y
        new_comp = (tt - total) - y
        if target < tt:
            return SuspensionPoint(x=cur, s=max(0.0, target - total))
        total, comp = tt, new_comp
        cur = eval_map(model, cur)
        n += 1


def flow_time_average(psi: FlowObservable, model: MapModel, roof: RoofSpec,
                      z: SuspensionPoint, T: float) -> float:
    """(1/T) * integral of psi along the orbit of z over [0, T].

    Computed by the lap decomposition, not by stepping the flow: the entry
    segment [s, r(x0)], then full fibers of the induced observable along
    the base orbit, then the exit segment [0, s+T - S_n].
    """
    if T <= 0.0:
        raise ValueError(f"T must be positive, got {T}")
    validate_point(model, roof, z)
    target = z.s + T
    total = 0.0
    comp = 0.0
    cur = z.x
    lo = z.s
    n = 0
    parts: list[float] = []
    while True:
        if min_singular_distance(cur, model.singular_set) <= SINGULARITY_GUARD:
            raise HitSingularity(n)
        r_cur = roof_eval(roof, model, cur)
        y = r_cur - comp
        tt = total + y
        new_comp = (tt - total) - y
        if target < tt:
            parts.append(_segment_scalar(psi, cur, lo, target - total))
            break
        parts.append(_segment_scalar(psi, cur, lo, r_cur))
        total, comp = tt, new_comp
        cur = eval_map(model, cur)
        lo = 0.0
        n += 1
    return math.fsum(parts) / T


def flow_average_batch(psi: FlowObservable, model: MapModel, roof: RoofSpec,
                       xs: np.ndarray, ss: np.ndarray, T: float,
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized flow_time_average over many suspension points.

    Returns (averages, aborted); aborted samples entered the singularity
    guard mid-scan and their averages are meaningless.  The scan keeps an
    active index set and compacts it each lap; partial roof sums use the
    same compensated-summation update as the scalar path.
    """
    if T <= 0.0:
        raise ValueError(f"T must be positive, got {T}")
    n_pts = xs.shape[0]
    cur = np.array(xs, dtype=float)
    target = np.asarray(ss, dtype=float) + T
    sum_r = np.zeros(n_pts)
    comp = np.zeros(n_pts)
    integ = np.zeros(n_pts)
    lo = np.array(ss, dtype=float)
    aborted = np.zeros(n_pts, dtype=bool)
    active = np.arange(n_pts)
    while active.size:
        xa = cur[active]
        if model.singular_set:
            d = np.abs(xa[:, None] - np.asarray(model.singular_set)).min(axis=1)
            bad = d <= SINGULARITY_GUARD
            if bad.any():
                aborted[active[bad]] = True
                active = active[~bad]
                xa = cur[active]
        ra = roof_batch(roof, model, xa)
        y = ra - comp[active]
        t = sum_r[active] + y
        new_comp = (t - sum_r[active]) - y
        endpoint = target[active] - sum_r[active]
        done = endpoint < ra
        idx_done = active[done]
        integ[idx_done] += _segment_batch(psi, cur[idx_done], lo[idx_done],
                                          endpoint[done])
        idx_go = active[~done]
        integ[idx_go] += _segment_batch(psi, cur[idx_go], lo[idx_go], ra[~done])
        sum_r[idx_go] = t[~done]
        comp[idx_go] = new_comp[~done]
        cur[idx_go] = map_batch(model, cur[idx_go])
        lo[idx_go] = 0.0
        active = idx_go
    return integ / T, aborted


def lap_count_batch(model: MapModel, roof: RoofSpec, xs: np.ndarray,
                    ss: np.ndarray, T: float) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized lap counts (same bracketing rule as lap_number)."""
    n_pts = xs.shape[0]
    cur = np.array(xs, dtype=float)
    target = np.asarray(ss, dtype=float) + T
    sum_r = np.zeros(n_pts)
    comp = np.zeros(n_pts)
    laps = np.zeros(n_pts, dtype=np.int64)
    aborted = np.zeros(n_pts, dtype=bool)
    active = np.arange(n_pts)
    while active.size:
        xa = cur[active]
        if model.singular_set:
            d = np.abs(xa[:, None] - np.asarray(model.singular_set)).min(axis=1)
            bad = d <= SINGULARITY_GUARD
            if bad.any():
                aborted[active[bad]] = True
                active = active[~bad]
                xa = cur[active]
        ra = roof_batch(roof, model, xa)
        y = ra - comp[active]
        t = sum_r[active] + y
        new_comp = (t - sum_r[active]) - y
        done = (target[active] - sum_r[active]) < ra
        idx_go = active[~done]
        sum_r[idx_go] = t[~done]
        comp[idx_go] = new_comp[~done]
        laps[idx_go] += 1
        cur[idx_go] = map_batch(model, cur[idx_go])
        active = idx_go
    return laps, aborted
