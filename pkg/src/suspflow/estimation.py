"""Monte Carlo measurement layer.

Long-orbit Birkhoff averages estimate the physical measure; uniform samples
weighted by the roof estimate the product volume on the suspension space;
deviation-set and recurrence-set volumes are hit fractions over those
samples; decay rates come from a weighted log-linear fit.

All randomness is drawn from counter-based streams keyed by (seed, stream,
sample index), so results are independent of worker count and evaluation
order.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from numba import njit

from . import rng
from .base_maps import (
    KIND_DOUBLING,
    KIND_GEOMETRIC_2D,
    KIND_LORENZ_QUOTIENT,
    SINGULARITY_GUARD,
    MapModel,
    dist_delta_batch,
    map_batch,
)
from .errors import DegenerateRoof, InsufficientData, NonUniqueMeasure, TooManyAborted
from .suspension import (
    FlowObservable,
    RoofSpec,
    SuspensionPoint,
    flow_average_batch,
    induced_batch,
    roof_batch,
)


@dataclass(frozen=True)
class AverageEstimate:
    """A pooled long-orbit average with cross-orbit error bars."""

    value: float
    stderr: float
    n_orbits: int
    orbit_length: int
    burn_in: int
    aborted: int = 0
    spread: float = 0.0  # max - min of per-orbit means


@dataclass(frozen=True)
class WeightedSample:
    """One product-measure sample (x, s) with importance weight r(x)."""

    point: SuspensionPoint
    weight: float


@dataclass(frozen=True)
class VolumeEstimate:
    """A Monte Carlo volume with binomial error bars and hit bookkeeping."""

    value: float
    stderr: float
    hits: int
    samples: int
    aborted: int = 0


@dataclass(frozen=True)
class DeviationConfig:
    """Parameters of one deviation-volume experiment."""

    epsilon: float
    t_grid: tuple[float, ...]
    n_samples: int
    seed: int

    def __post_init__(self):
        if self.epsilon <= 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        grid = tuple(self.t_grid)
        if len(grid) < 1 or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("t_grid must be strictly increasing and nonempty")
        object.__setattr__(self, "t_grid", grid)
        if self.n_samples < 1000:
            raise ValueError(f"n_samples must be at least 1000, got {self.n_samples}")


@dataclass(frozen=True)
class RateFit:
    """Weighted least-squares fit of log(volume) against the horizon."""

    slope: float
    intercept: float
    r_squared: float
    slope_stderr: float
    points_used: int
    dropped: tuple[float, ...] = ()


# ---------------------------------------------------------------------------
# long-orbit machinery

@njit(cache=True)
def _advance_lorenz(states, alpha, nsteps, minabs):
    for i in range(states.size):
        x = states[i]
        m = minabs[i]
        for _ in range(nsteps):
            a = abs(x)
            if a < m:
                m = a
            s = 1.0 if x > 0.0 else -1.0
            x = s * (2.0 * a ** alpha - 1.0)
            if x > 1.0:
                x = 1.0
            elif x < -1.0:
                x = -1.0
        states[i] = x
        minabs[i] = m


@njit(cache=True)
def _fill_lorenz(states, alpha, block, minabs):
    k, chunk = block.shape
    for i in range(k):
        x = states[i]
        m = minabs[i]
        for j in range(chunk):
            block[i, j] = x
            a = abs(x)
            if a < m:
                m = a
            s = 1.0 if x > 0.0 else -1.0
            x = s * (2.0 * a ** alpha - 1.0)
            if x > 1.0:
                x = 1.0
            elif x < -1.0:
                x = -1.0
        states[i] = x
        minabs[i] = m


# Long doubling orbits cannot be run in float64: every float is a dyadic
# rational, so iterating 2x mod 1 shifts the mantissa out and the orbit is
# exactly 0 after at most 53 steps.  For a Lebesgue-random start the orbit
# is, jointly in law, a sliding 53-bit window over an IID fair-bit stream,
# which is what this fill computes (bit index = global step, slot = orbit).

_DOUBLING_POW2 = 0.5 ** np.arange(1, 54)


def _fill_doubling_window(block: np.ndarray, start_step: int, seed: int) -> None:
    n_orbits, chunk = block.shape
    for i in range(n_orbits):
        idx = start_step + np.arange(chunk + 52, dtype=np.uint64)
        bits = rng.uniforms(seed, rng.STREAM_DOUBLING_BITS, idx, slot=i) >= 0.5
        windows = np.lib.stride_tricks.sliding_window_view(
            bits.astype(float), 53)
        block[i, :] = windows @ _DOUBLING_POW2


def _orbit_batch_means(model: MapModel, observables: Sequence[Callable],
                       n_orbits: int, orbit_length: int, burn_in: int,
                       seed: int) -> tuple[np.ndarray, np.ndarray, int]:
    """Batch means of each observable along pooled orbits.

    Returns (means, dead, effective_length) where means has shape
    (n_observables, n_orbits, n_batches) and dead flags orbits that entered
    the singularity guard anywhere.
    """
    if model.kind == KIND_GEOMETRIC_2D:
        raise ValueError("long-orbit averaging is implemented for 1d base maps only")
    if n_orbits < 2:
        raise ValueError("need at least 2 orbits for error bars")
    n_batches = min(100, max(1, orbit_length // 100))
    batch_len = orbit_length // n_batches
    eff_len = batch_len * n_batches
    is_quotient = model.kind == KIND_LORENZ_QUOTIENT
    if is_quotient:
        lo, hi = model.domain
        u = rng.uniforms(seed, rng.STREAM_ORBIT_START, n_orbits)
        states = lo + (hi - lo) * u
        minabs = np.abs(states)
        alpha = model.params.alpha
        if burn_in:
            _advance_lorenz(states, alpha, burn_in, minabs)

    block = np.empty((n_orbits, batch_len))
    means = np.empty((len(observables), n_orbits, n_batches))
    for c in range(n_batches):
        if is_quotient:
            _fill_lorenz(states, alpha, block, minabs)
        else:
            _fill_doubling_window(block, burn_in + c * batch_len, seed)
        for k, obs in enumerate(observables):
            means[k, :, c] = np.asarray(obs(block), dtype=float).mean(axis=1)
    dead = (minabs <= SINGULARITY_GUARD) if is_quotient \
        else np.zeros(n_orbits, dtype=bool)
    return means, dead, eff_len


def _check_spread(orbit_means: np.ndarray, batch_means: np.ndarray,
                  label: str) -> float:
    """Warn when per-orbit means disagree more than batch noise explains."""
    n_batches = batch_means.shape[1]
    within_var = batch_means.var(axis=1, ddof=1).mean()
    one_orbit_se = math.sqrt(within_var / n_batches)
    spread = float(orbit_means.max() - orbit_means.min())
    if one_orbit_se > 0.0 and spread > 5.0 * one_orbit_se:
        warnings.warn(
            f"cross-orbit spread {spread:.3e} of {label} exceeds 5x the "
            f"single-orbit standard error {one_orbit_se:.3e}",
            NonUniqueMeasure,
        )
    return spread


def estimate_base_average(model: MapModel, phi: Callable, n_orbits: int = 16,
                          orbit_length: int = 10**6, burn_in: int = 10**3,
                          seed: int = 0) -> AverageEstimate:
    """Pooled Birkhoff average of a vectorized observable from random starts.

    ``phi`` must accept numpy arrays.  Orbits that enter the singularity
    guard are discarded; more than 1% of them aborting raises.
    """
    if orbit_length < 10 * burn_in:
        raise ValueError("orbit_length must be at least 10x burn_in")
    means, dead, eff_len = _orbit_batch_means(
        model, [phi], n_orbits, orbit_length, burn_in, seed)
    n_dead = int(dead.sum())
    if n_dead / n_orbits > 0.01:
        raise TooManyAborted(f"{n_dead} of {n_orbits} orbits hit the singularity guard")
    keep = ~dead
    batch = means[0][keep]
    orbit_means = batch.mean(axis=1)
    spread = _check_spread(orbit_means, batch, "base average")
    k = orbit_means.size
    return AverageEstimate(
        value=float(orbit_means.mean()),
        stderr=float(orbit_means.std(ddof=1) / math.sqrt(k)),
        n_orbits=k,
        orbit_length=eff_len,
        burn_in=burn_in,
        aborted=n_dead,
        spread=spread,
    )


def nu_average(psi: FlowObservable, model: MapModel, roof: RoofSpec,
               n_orbits: int = 16, orbit_length: int = 10**6,
               burn_in: int = 10**3, seed: int = 0) -> AverageEstimate:
    """Flow-invariant average of psi: mean induced observable over mean roof.

    Both numerator and denominator come from the same orbits, so the ratio
    error bar uses the delta method with the empirical covariance of the
    per-orbit means.
    """
    if orbit_length < 10 * burn_in:
        raise ValueError("orbit_length must be at least 10x burn_in")
    means, dead, eff_len = _orbit_batch_means(
        model,
        [lambda xs: induced_batch(psi, model, roof, np.ravel(xs)).reshape(np.shape(xs)),
         lambda xs: roof_batch(roof, model, xs)],
        n_orbits, orbit_length, burn_in, seed)
    n_dead = int(dead.sum())
    if n_dead / n_orbits > 0.01:
        raise TooManyAborted(f"{n_dead} of {n_orbits} orbits hit the singularity guard")
    keep = ~dead
    phi_means = means[0][keep].mean(axis=1)
    r_means = means[1][keep].mean(axis=1)
    r_bar = float(r_means.mean())
    if r_bar <= roof.r0 / 2.0:
        raise DegenerateRoof(f"mean roof {r_bar} fell below r0/2 = {roof.r0 / 2}")
    value = float(phi_means.mean()) / r_bar
    k = phi_means.size
    cov = np.cov(np.vstack([phi_means, r_means]), ddof=1)
    var = (cov[0, 0] - 2.0 * value * cov[0, 1] + value**2 * cov[1, 1]) / (r_bar**2 * k)
    ratio_means = phi_means / r_means
    spread = _check_spread(ratio_means, means[0][keep] / means[1][keep], "flow average")
    return AverageEstimate(
        value=value,
        stderr=math.sqrt(max(var, 0.0)),
        n_orbits=k,
        orbit_length=eff_len,
        burn_in=burn_in,
        aborted=n_dead,
        spread=spread,
    )


# ---------------------------------------------------------------------------
# product-measure sampling and volumes

def _sample_lambda_arrays(model: MapModel, roof: RoofSpec, n: int,
                          seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    lo, hi = model.domain
    xs = lo + (hi - lo) * rng.uniforms(seed, rng.STREAM_BASE_X, n)
    if model.singular_set:
        # resample the measure-zero guard hits with fresh counter slots
        for retry in range(1, 64):
            d = np.abs(xs[:, None] - np.asarray(model.singular_set)).min(axis=1)
            bad = np.flatnonzero(d <= SINGULARITY_GUARD)
            if bad.size == 0:
                break
            u = rng.uniforms(seed, rng.STREAM_BASE_X, bad, slot=retry)
            xs[bad] = lo + (hi - lo) * u
    rs = roof_batch(roof, model, xs)
    ss = rng.uniforms(seed, rng.STREAM_FIBER_S, n) * rs
    return xs, ss, rs


def sample_lambda(model: MapModel, roof: RoofSpec, n: int,
                  seed: int) -> list[WeightedSample]:
    """n samples of x uniform on the domain, s uniform on [0, r(x)).

    Weighting hit indicators by r(x) and scaling by the domain length gives
    an unbiased estimator of the product volume of any measurable set.
    """
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    xs, ss, ws = _sample_lambda_arrays(model, roof, n, seed)
    return [WeightedSample(point=SuspensionPoint(x=float(x), s=float(s)), weight=float(w))
            for x, s, w in zip(xs, ss, ws)]


def _samples_to_arrays(samples) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(samples, tuple) and len(samples) == 3:
        return (np.asarray(samples[0], dtype=float),
                np.asarray(samples[1], dtype=float),
                np.asarray(samples[2], dtype=float))
    xs = np.array([w.point.x for w in samples])
    ss = np.array([w.point.s for w in samples])
    ws = np.array([w.weight for w in samples])
    return xs, ss, ws


def deviation_volume(psi: FlowObservable, model: MapModel, roof: RoofSpec,
                     nu_hat: float, epsilon: float, T: float,
                     samples) -> VolumeEstimate:
    """Product volume of {|time average over [0,T] - nu_hat| > epsilon}.

    ``samples`` is the output of :func:`sample_lambda` (or the raw array
    triple); reusing one sample set across epsilon values or horizons keeps
    the estimates coupled.  Aborted scans count as hits, keeping the
    estimate an upper bound.
    """
    xs, ss, ws = _samples_to_arrays(samples)
    avg, aborted = flow_average_batch(psi, model, roof, xs, ss, T)
    dev = np.abs(avg - nu_hat) > epsilon
    dev |= aborted
    measure = model.domain_length()
    vals = measure * ws * dev
    n = xs.size
    return VolumeEstimate(
        value=float(vals.mean()),
        stderr=float(vals.std(ddof=1) / math.sqrt(n)),
        hits=int(dev.sum()),
        samples=n,
        aborted=int(aborted.sum()),
    )


def deviation_curve(psi: FlowObservable, model: MapModel, roof: RoofSpec,
                    cfg: DeviationConfig, nu_hat: float,
                    ) -> list[tuple[float, VolumeEstimate]]:
    """Deviation volumes over the horizon grid, one shared sample set."""
    samples = _sample_lambda_arrays(model, roof, cfg.n_samples, cfg.seed)
    return [(T, deviation_volume(psi, model, roof, nu_hat, cfg.epsilon, T, samples))
            for T in cfg.t_grid]


def _masked_orbit_fractions(model: MapModel, term: Callable, xs: np.ndarray,
                            n: int) -> tuple[np.ndarray, np.ndarray]:
    """Birkhoff averages of a vectorized term with guard masking."""
    acc = np.zeros(xs.size)
    ok = np.ones(xs.size, dtype=bool)
    cur = xs.copy()
    for j in range(n):
        if model.singular_set:
            d = np.abs(cur[:, None] - np.asarray(model.singular_set)).min(axis=1)
            ok &= d > SINGULARITY_GUARD
        safe = np.where(ok, cur, model.domain[1])
        acc = acc + np.where(ok, np.asarray(term(safe), dtype=float), 0.0)
        if j + 1 < n:
            cur = map_batch(model, safe)
    return acc / n, ~ok


def base_deviation_volume(model: MapModel, phi: Callable, mu_hat: float,
                          epsilon: float, n: int, n_samples: int,
                          seed: int) -> VolumeEstimate:
    """Lebesgue fraction of starts whose n-step average of phi strays from mu_hat.

    ``phi`` must accept numpy arrays.  Guard-hitting orbits count as hits.
    """
    if n < 1 or n_samples < 1:
        raise ValueError("n and n_samples must be positive")
    lo, hi = model.domain
    xs = lo + (hi - lo) * rng.uniforms(seed, rng.STREAM_BASE_DEVIATION, n_samples)
    avg, aborted = _masked_orbit_fractions(model, phi, xs, n)
    dev = (np.abs(avg - mu_hat) > epsilon) | aborted
    p = float(dev.mean())
    return VolumeEstimate(
        value=p,
        stderr=math.sqrt(p * (1.0 - p) / n_samples),
        hits=int(dev.sum()),
        samples=n_samples,
        aborted=int(aborted.sum()),
    )


def recurrence_deviation_volume(model: MapModel, epsilon: float, delta: float,
                                n: int, n_samples: int, seed: int) -> VolumeEstimate:
    """Lebesgue fraction of starts whose average log-distance penalty exceeds epsilon."""
    if delta <= 0.0:
        raise ValueError(f"delta must be positive, got {delta}")
    if n < 1 or n_samples < 1:
        raise ValueError("n and n_samples must be positive")
    lo, hi = model.domain
    xs = lo + (hi - lo) * rng.uniforms(seed, rng.STREAM_RECURRENCE, n_samples)
    term = lambda t: np.abs(np.log(dist_delta_batch(model, t, delta)))
    avg, aborted = _masked_orbit_fractions(model, term, xs, n)
    dev = (avg > epsilon) | aborted
    p = float(dev.mean())
    return VolumeEstimate(
        value=p,
        stderr=math.sqrt(p * (1.0 - p) / n_samples),
        hits=int(dev.sum()),
        samples=n_samples,
        aborted=int(aborted.sum()),
    )


# ---------------------------------------------------------------------------
# rate fitting

def fit_exponential_rate(horizons: Iterable, min_hits: int = 5) -> RateFit:
    """Weighted least squares of log(volume) against the horizon.

    Each entry is (T, volume, stderr) or (T, volume, stderr, hits).
    Weights are volume^2/stderr^2 (the delta method variance of the log);
    horizons with fewer than ``min_hits`` hits, or zero volume, are dropped
    and reported.  Fewer than 3 surviving points raises.
    """
    ts, vols, errs, dropped = [], [], [], []
    for entry in horizons:
        if len(entry) == 4:
            T, v, se, hits = entry
        else:
            T, v, se = entry
            hits = None
        usable = v > 0.0 and (hits is None or hits >= min_hits)
        if usable:
            ts.append(float(T))
            vols.append(float(v))
            errs.append(float(se))
        else:
            dropped.append(float(T))
    if len(ts) < 3:
        raise InsufficientData(
            f"only {len(ts)} usable horizons (dropped: {dropped}); need at least 3")
    t = np.asarray(ts)
    v = np.asarray(vols)
    se = np.asarray(errs)
    se_eff = np.maximum(se, 1e-9 * v)
    w = (v / se_eff) ** 2
    y = np.log(v)
    sw = w.sum()
    tbar = (w * t).sum() / sw
    ybar = (w * y).sum() / sw
    stt = (w * (t - tbar) ** 2).sum()
    slope = (w * (t - tbar) * (y - ybar)).sum() / stt
    intercept = ybar - slope * tbar
    resid = y - (intercept + slope * t)
    ss_res = float((w * resid**2).sum())
    ss_tot = float((w * (y - ybar) ** 2).sum())
    r_squared = 0.0 if ss_tot <= 1e-300 else max(0.0, 1.0 - ss_res / ss_tot)
    slope_stderr = math.sqrt(1.0 / stt)
    return RateFit(
        slope=float(slope),
        intercept=float(intercept),
        r_squared=r_squared,
        slope_stderr=slope_stderr,
        points_used=len(ts),
        dropped=tuple(dropped),
    )
