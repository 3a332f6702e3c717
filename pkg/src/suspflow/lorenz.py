"""The Lorenz system: integration, Poincare sections, and volume experiments.

Fixed-step RK4 keeps every trajectory a pure function of its initial
condition and the step size, so Monte Carlo runs are reproducible across
worker counts.  Section crossings are refined by bisection on a cubic
Hermite interpolant of the step that bracketed the crossing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numba import njit

from . import rng
from .base_maps import MapModel, eval_2d, min_singular_distance, SINGULARITY_GUARD
from .errors import (
    HitSingularity,
    LeftTrap,
    NoReturn,
    NonFinite,
    TooManyAborted,
    TraceNotFound,
)
from .estimation import AverageEstimate, VolumeEstimate, _check_spread

Z_SECTION = 27.0


@dataclass(frozen=True)
class LorenzParams:
    sigma: float = 10.0
    rho: float = 28.0
    beta: float = 8.0 / 3.0

    def __post_init__(self):
        if min(self.sigma, self.rho, self.beta) <= 0.0:
            raise ValueError("sigma, rho, beta must all be positive")

    def equilibria(self) -> list[tuple[float, float, float]]:
        """The origin and, when rho > 1, the two wing centers."""
        pts = [(0.0, 0.0, 0.0)]
        if self.rho > 1.0:
            c = math.sqrt(self.beta * (self.rho - 1.0))
            pts += [(c, c, self.rho - 1.0), (-c, -c, self.rho - 1.0)]
        return pts


@dataclass(frozen=True)
class OdeState:
    x: float
    y: float
    z: float
    t: float = 0.0


@dataclass(frozen=True)
class SectionCrossing:
    """A downward crossing of the plane z = 27, refined to |z - 27| <= 1e-10."""

    x: float
    y: float
    return_time: float


@dataclass(frozen=True)
class TrapBox:
    """Axis-aligned box used both as sampling region and membership test."""

    xlo: float = -30.0
    xhi: float = 30.0
    ylo: float = -30.0
    yhi: float = 30.0
    zlo: float = -5.0
    zhi: float = 60.0

    def __post_init__(self):
        if not (self.xlo < self.xhi and self.ylo < self.yhi and self.zlo < self.zhi):
            raise ValueError("box bounds must be ordered")

    def bounds(self) -> tuple[float, float, float, float, float, float]:
        return (self.xlo, self.xhi, self.ylo, self.yhi, self.zlo, self.zhi)

    def contains(self, x: float, y: float, z: float) -> bool:
        return (self.xlo <= x <= self.xhi and self.ylo <= y <= self.yhi
                and self.zlo <= z <= self.zhi)


def vector_field(p: LorenzParams, state) -> tuple[float, float, float]:
    """Right-hand side of the Lorenz equations at a state or (x,y,z) triple."""
    if isinstance(state, OdeState):
        x, y, z = state.x, state.y, state.z
    else:
        x, y, z = state
    return (p.sigma * (y - x), p.rho * x - y - x * z, x * y - p.beta * z)


# ---------------------------------------------------------------------------
# kernels: serial per sample, deterministic step count

@njit(cache=True, inline="always")
def _step(x, y, z, sg, rh, bt, h):
    k1x = sg * (y - x)
    k1y = rh * x - y - x * z
    k1z = x * y - bt * z
    ax = x + 0.5 * h * k1x
    ay = y + 0.5 * h * k1y
    az = z + 0.5 * h * k1z
    k2x = sg * (ay - ax)
    k2y = rh * ax - ay - ax * az
    k2z = ax * ay - bt * az
    bx = x + 0.5 * h * k2x
    by = y + 0.5 * h * k2y
    bz = z + 0.5 * h * k2z
    k3x = sg * (by - bx)
    k3y = rh * bx - by - bx * bz
    k3z = bx * by - bt * bz
    cx = x + h * k3x
    cy = y + h * k3y
    cz = z + h * k3z
    k4x = sg * (cy - cx)
    k4y = rh * cx - cy - cx * cz
    k4z = cx * cy - bt * cz
    return (x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x),
            y + h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y),
            z + h / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z))


@njit(cache=True)
def _advance(xs, ys, zs, sg, rh, bt, h, nsteps):
    for i in range(xs.size):
        x, y, z = xs[i], ys[i], zs[i]
        for _ in range(nsteps):
            x, y, z = _step(x, y, z, sg, rh, bt, h)
        xs[i], ys[i], zs[i] = x, y, z


@njit(cache=True)
def _coord_average(xs, ys, zs, sg, rh, bt, h, nsteps, coord, acc):
    """Trapezoid average of one coordinate over nsteps; advances in place."""
    for i in range(xs.size):
        x, y, z = xs[i], ys[i], zs[i]
        total = 0.0
        for _ in range(nsteps):
            if coord == 0:
                prev = x
            elif coord == 1:
                prev = y
            else:
                prev = z
            x, y, z = _step(x, y, z, sg, rh, bt, h)
            if coord == 0:
                total += 0.5 * h * (prev + x)
            elif coord == 1:
                total += 0.5 * h * (prev + y)
            else:
                total += 0.5 * h * (prev + z)
        xs[i], ys[i], zs[i] = x, y, z
        acc[i] = total / (h * nsteps)


@njit(cache=True)
def _survive(xs, ys, zs, sg, rh, bt, h, nsteps,
             xlo, xhi, ylo, yhi, zlo, zhi, alive):
    """Membership in the box checked after every step; exits are final."""
    for i in range(xs.size):
        x, y, z = xs[i], ys[i], zs[i]
        ok = (xlo <= x <= xhi) and (ylo <= y <= yhi) and (zlo <= z <= zhi)
        if ok:
            for _ in range(nsteps):
                x, y, z = _step(x, y, z, sg, rh, bt, h)
                if not ((xlo <= x <= xhi) and (ylo <= y <= yhi) and (zlo <= z <= zhi)):
                    ok = False
                    break
        alive[i] = ok
        xs[i], ys[i], zs[i] = x, y, z


@njit(cache=True)
def _occupation(x, y, z, sg, rh, bt, h, nsteps, xlo, xhi, ylo, yhi, zlo, zhi):
    count = 0
    for _ in range(nsteps):
        x, y, z = _step(x, y, z, sg, rh, bt, h)
        if (xlo <= x <= xhi) and (ylo <= y <= yhi) and (zlo <= z <= zhi):
            count += 1
    return count


@njit(cache=True)
def _section_bracket(x, y, z, sg, rh, bt, h, zc, max_steps,
                     xlo, xhi, ylo, yhi, zlo, zhi):
    """Scan for the first step with z going from above zc to at or below it.

    Returns (status, step index, state before, state after); status is
    0 on success, 1 when max_steps elapse, 2 when the box is exited.
    """
    for k in range(max_steps):
        xp, yp, zp = x, y, z
        x, y, z = _step(x, y, z, sg, rh, bt, h)
        if not ((xlo <= x <= xhi) and (ylo <= y <= yhi) and (zlo <= z <= zhi)):
            return (2, k, xp, yp, zp, x, y, z)
        if zp > zc and z <= zc:
            return (0, k, xp, yp, zp, x, y, z)
    return (1, max_steps, x, y, z, x, y, z)


@njit(cache=True)
def _wing_sign(x, y, z, sg, rh, bt, h, thresh, max_steps):
    """Sign of x at first wing entry (|x| >= thresh); 0 if never classified."""
    for _ in range(max_steps):
        x, y, z = _step(x, y, z, sg, rh, bt, h)
        if x >= thresh:
            return 1
        if x <= -thresh:
            return -1
    return 0


# ---------------------------------------------------------------------------
# integration and sections

def integrate(p: LorenzParams, state: OdeState, t: float, h: float = 5e-4) -> OdeState:
    """Advance a state by time t with fixed-step RK4 (one shorter final step)."""
    if t < 0.0:
        raise ValueError(f"t must be nonnegative, got {t}")
    if h <= 0.0:
        raise ValueError(f"h must be positive, got {h}")
    xs = np.array([state.x])
    ys = np.array([state.y])
    zs = np.array([state.z])
    n_full = int(t / h)
    if n_full:
        _advance(xs, ys, zs, p.sigma, p.rho, p.beta, h, n_full)
    h_rem = t - n_full * h
    if h_rem > 1e-15:
        _advance(xs, ys, zs, p.sigma, p.rho, p.beta, h_rem, 1)
    out = OdeState(x=float(xs[0]), y=float(ys[0]), z=float(zs[0]), t=state.t + t)
    if not all(map(math.isfinite, (out.x, out.y, out.z))):
        raise NonFinite(f"state became non-finite integrating from {state}")
    return out


def _hermite(q0: float, m0: float, q1: float, m1: float, u: float) -> float:
    # cubic Hermite basis on [0,1]; m are endpoint derivatives times the step
    u2 = u * u
    u3 = u2 * u
    return ((2 * u3 - 3 * u2 + 1) * q0 + (u3 - 2 * u2 + u) * m0
            + (-2 * u3 + 3 * u2) * q1 + (u3 - u2) * m1)


def poincare_return(p: LorenzParams, x: float, y: float, max_time: float = 1e3,
                    h: float = 5e-4, box: TrapBox = TrapBox()) -> SectionCrossing:
    """First downward return of (x, y, 27) to the plane z = 27.

    The start must already move downward (zdot < 0).  The bracketing step
    is interpolated with a cubic Hermite polynomial and bisected until the
    interpolated z is within 1e-10 of the section.
    """
    z = Z_SECTION
    zdot = x * y - p.beta * z
    if zdot >= 0.0:
        raise ValueError(f"start must cross downward; zdot = {zdot} >= 0")
    if not box.contains(x, y, z):
        raise LeftTrap(f"start ({x}, {y}, {z}) outside the trapping box")
    max_steps = int(math.ceil(max_time / h))
    status, k, x0, y0, z0, x1, y1, z1 = _section_bracket(
        x, y, z, p.sigma, p.rho, p.beta, h, Z_SECTION, max_steps, *box.bounds())
    if status == 1:
        raise NoReturn(f"no section return within {max_time} time units")
    if status == 2:
        raise LeftTrap(f"trajectory left the trapping box after {k * h} time units")
    f0 = vector_field(p, (x0, y0, z0))
    f1 = vector_field(p, (x1, y1, z1))
    mz0, mz1 = f0[2] * h, f1[2] * h
    lo_u, hi_u = 0.0, 1.0
    u = 0.5
    for _ in range(200):
        u = 0.5 * (lo_u + hi_u)
        zu = _hermite(z0, mz0, z1, mz1, u)
        if abs(zu - Z_SECTION) <= 1e-10:
            break
        if zu > Z_SECTION:
            lo_u = u
        else:
            hi_u = u
    xc = _hermite(x0, f0[0] * h, x1, f1[0] * h, u)
    yc = _hermite(y0, f0[1] * h, y1, f1[1] * h, u)
    return SectionCrossing(x=float(xc), y=float(yc), return_time=(k + u) * h)


@dataclass(frozen=True)
class ProfileFit:
    """Least-squares fit of return time against -log(distance to the trace)."""

    a: float
    b: float
    r_squared: float
    trace_x: float
    distances: tuple[float, ...] = ()
    times: tuple[float, ...] = ()


def locate_section_trace(p: LorenzParams, x_lo: float = -0.5, x_hi: float = 0.5,
                         h: float = 5e-4, wing_threshold: float = 4.0,
                         classify_time: float = 100.0, tol: float = 1e-12) -> float:
    """Bisect on the segment y = 0 of the section for the wing boundary.

    Starts on opposite sides of the stable-manifold trace fall into
    opposite wings; the sign of x at first wing entry classifies them.
    """
    max_steps = int(classify_time / h)

    def wing(x0: float) -> int:
        return _wing_sign(x0, 0.0, Z_SECTION, p.sigma, p.rho, p.beta, h,
                          wing_threshold, max_steps)

    w_lo, w_hi = wing(x_lo), wing(x_hi)
    if w_lo == 0 or w_hi == 0 or w_lo == w_hi:
        raise TraceNotFound(
            f"bracket [{x_lo}, {x_hi}] did not classify into opposite wings")
    while x_hi - x_lo > tol:
        mid = 0.5 * (x_lo + x_hi)
        w = wing(mid)
        if w == 0:
            # classification times blow up only logarithmically near the
            # boundary, so an unclassified start is the trace to within tol
            return mid
        if w == w_lo:
            x_lo = mid
        else:
            x_hi = mid
    return 0.5 * (x_lo + x_hi)


def return_time_profile(p: LorenzParams, n_points: int = 17, d_lo: float = 1e-6,
                        d_hi: float = 1e-2, h: float = 5e-4,
                        max_time: float = 1e3) -> ProfileFit:
    """Fit return_time = a - b*log(d) at log-spaced distances d from the trace."""
    if not (1e-6 <= d_lo < d_hi <= 1e-2):
        raise ValueError("distance range must satisfy 1e-6 <= d_lo < d_hi <= 1e-2")
    if n_points < 3:
        raise ValueError("need at least 3 points for the fit")
    trace_x = locate_section_trace(p, h=h)
    ds = np.logspace(math.log10(d_lo), math.log10(d_hi), n_points)
    taus = np.array([
        poincare_return(p, trace_x + d, 0.0, max_time=max_time, h=h).return_time
        for d in ds
    ])
    design = np.vstack([np.ones(n_points), -np.log(ds)]).T
    coef, _, _, _ = np.linalg.lstsq(design, taus, rcond=None)
    pred = design @ coef
    ss_res = float(((taus - pred) ** 2).sum())
    ss_tot = float(((taus - taus.mean()) ** 2).sum())
    r2 = 0.0 if ss_tot <= 1e-300 else 1.0 - ss_res / ss_tot
    return ProfileFit(a=float(coef[0]), b=float(coef[1]), r_squared=r2,
                      trace_x=trace_x, distances=tuple(ds), times=tuple(taus))


# ---------------------------------------------------------------------------
# volume experiments

_COORD_INDEX = {"x": 0, "y": 1, "z": 2}


def _sample_box(box: TrapBox, n: int, seed: int, stream: int) -> tuple[np.ndarray, ...]:
    u0 = rng.uniforms(seed, stream, n, slot=0)
    u1 = rng.uniforms(seed, stream, n, slot=1)
    u2 = rng.uniforms(seed, stream, n, slot=2)
    return (box.xlo + (box.xhi - box.xlo) * u0,
            box.ylo + (box.yhi - box.ylo) * u1,
            box.zlo + (box.zhi - box.zlo) * u2)


def flow_space_average(p: LorenzParams, coord: str = "z", n_orbits: int = 16,
                       burn_in: float = 100.0, horizon: float = 1e4,
                       seed: int = 0, h: float = 5e-4,
                       box: TrapBox = TrapBox()) -> AverageEstimate:
    """Pooled long-orbit time average of a coordinate of the flow."""
    if coord not in _COORD_INDEX:
        raise ValueError(f"coord must be one of {sorted(_COORD_INDEX)}")
    ci = _COORD_INDEX[coord]
    xs, ys, zs = _sample_box(box, n_orbits, seed, rng.STREAM_ORBIT_START)
    burn_steps = int(round(burn_in / h))
    if burn_steps:
        _advance(xs, ys, zs, p.sigma, p.rho, p.beta, h, burn_steps)
    n_batches = 100
    batch_steps = int(round(horizon / h)) // n_batches
    batch_means = np.empty((n_orbits, n_batches))
    acc = np.empty(n_orbits)
    for c in range(n_batches):
        _coord_average(xs, ys, zs, p.sigma, p.rho, p.beta, h, batch_steps, ci, acc)
        batch_means[:, c] = acc
    dead = ~np.isfinite(batch_means).all(axis=1)
    n_dead = int(dead.sum())
    if n_dead / n_orbits > 0.01:
        raise TooManyAborted(f"{n_dead} of {n_orbits} flow orbits became non-finite")
    batch = batch_means[~dead]
    orbit_means = batch.mean(axis=1)
    spread = _check_spread(orbit_means, batch, f"flow average of {coord}")
    k = orbit_means.size
    return AverageEstimate(
        value=float(orbit_means.mean()),
        stderr=float(orbit_means.std(ddof=1) / math.sqrt(k)),
        n_orbits=k,
        orbit_length=batch_steps * n_batches,
        burn_in=burn_steps,
        aborted=n_dead,
        spread=spread,
    )


def _callable_averages(p: LorenzParams, psi: Callable, xs, ys, zs, h: float,
                       nsteps: int) -> np.ndarray:
    """Vectorized RK4 with trapezoid accumulation of an arbitrary psi(x,y,z)."""
    sg, rh, bt = p.sigma, p.rho, p.beta
    total = np.zeros(xs.size)
    prev = np.asarray(psi(xs, ys, zs), dtype=float)
    for _ in range(nsteps):
        k1x = sg * (ys - xs)
        k1y = rh * xs - ys - xs * zs
        k1z = xs * ys - bt * zs
        ax = xs + 0.5 * h * k1x
        ay = ys + 0.5 * h * k1y
        az = zs + 0.5 * h * k1z
        k2x = sg * (ay - ax)
        k2y = rh * ax - ay - ax * az
        k2z = ax * ay - bt * az
        bx = xs + 0.5 * h * k2x
        by = ys + 0.5 * h * k2y
        bz = zs + 0.5 * h * k2z
        k3x = sg * (by - bx)
        k3y = rh * bx - by - bx * bz
        k3z = bx * by - bt * bz
        cx = xs + h * k3x
        cy = ys + h * k3y
        cz = zs + h * k3z
        k4x = sg * (cy - cx)
        k4y = rh * cx - cy - cx * cz
        k4z = cx * cy - bt * cz
        xs = xs + h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        ys = ys + h / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y)
        zs = zs + h / 6.0 * (k1z + 2 * k2z + 2 * k3z + k4z)
        cur = np.asarray(psi(xs, ys, zs), dtype=float)
        total += 0.5 * h * (prev + cur)
        prev = cur
    return total / (h * nsteps)


def flow_deviation_volume(p: LorenzParams, psi, mu_hat: float, epsilon: float,
                          T: float, n_samples: int, seed: int, h: float = 5e-4,
                          box: TrapBox = TrapBox()) -> VolumeEstimate:
    """Fraction of uniform box samples whose [0,T] average of psi strays from mu_hat.

    ``psi`` is a coordinate name ("x", "y", "z") for the fast path or a
    vectorized callable psi(x, y, z).  Trajectories are integrated through
    the full flow wherever they go; samples whose state becomes non-finite
    abort and count as hits.
    """
    if T <= 0.0 or n_samples < 1:
        raise ValueError("T and n_samples must be positive")
    xs, ys, zs = _sample_box(box, n_samples, seed, rng.STREAM_BOX_SAMPLE)
    nsteps = int(round(T / h))
    if isinstance(psi, str):
        if psi not in _COORD_INDEX:
            raise ValueError(f"unknown coordinate observable {psi!r}")
        acc = np.empty(n_samples)
        _coord_average(xs, ys, zs, p.sigma, p.rho, p.beta, h, nsteps,
                       _COORD_INDEX[psi], acc)
    else:
        acc = _callable_averages(p, psi, xs, ys, zs, h, nsteps)
    aborted = ~np.isfinite(acc)
    dev = aborted | (np.abs(np.where(aborted, 0.0, acc) - mu_hat) > epsilon)
    frac = float(dev.mean())
    return VolumeEstimate(
        value=frac,
        stderr=math.sqrt(frac * (1.0 - frac) / n_samples),
        hits=int(dev.sum()),
        samples=n_samples,
        aborted=int(aborted.sum()),
    )


def escape_volume(p: LorenzParams, region: TrapBox, T: float, n_samples: int,
                  seed: int, h: float = 5e-4, settle: float = 0.0) -> VolumeEstimate:
    """Fraction of uniform samples in the region whose orbit stays in it up to T.

    Membership is checked after every integrator step.  A positive
    ``settle`` first advances each sample through the free flow, turning
    the start set into (a neighborhood of) the attractor; that mode exists
    for invariance sanity checks, not for escape-rate measurements.
    """
    if T < 0.0 or n_samples < 1:
        raise ValueError("T must be nonnegative and n_samples positive")
    xs, ys, zs = _sample_box(region, n_samples, seed, rng.STREAM_REGION_SAMPLE)
    if settle > 0.0:
        _advance(xs, ys, zs, p.sigma, p.rho, p.beta, h, int(round(settle / h)))
    alive = np.zeros(n_samples, dtype=bool)
    nsteps = int(round(T / h))
    _survive(xs, ys, zs, p.sigma, p.rho, p.beta, h, nsteps, *region.bounds(), alive)
    frac = float(alive.mean())
    return VolumeEstimate(
        value=frac,
        stderr=math.sqrt(frac * (1.0 - frac) / n_samples),
        hits=int(alive.sum()),
        samples=n_samples,
        aborted=0,
    )


def occupation_fraction(p: LorenzParams, region: TrapBox, total_time: float = 1e4,
                        h: float = 5e-4, burn_in: float = 10.0,
                        start: tuple[float, float, float] = (1.0, 1.0, 20.0)) -> float:
    """Fraction of time one settled orbit spends inside the region.

    Used to check that a candidate escape region is not effectively
    invariant (fraction must stay below 0.99 to be worth measuring).
    """
    xs = np.array([start[0]])
    ys = np.array([start[1]])
    zs = np.array([start[2]])
    if burn_in > 0.0:
        _advance(xs, ys, zs, p.sigma, p.rho, p.beta, h, int(round(burn_in / h)))
    nsteps = int(round(total_time / h))
    count = _occupation(xs[0], ys[0], zs[0], p.sigma, p.rho, p.beta, h, nsteps,
                        *region.bounds())
    return count / nsteps


def trap_violation_fraction(p: LorenzParams, box: TrapBox = TrapBox(),
                            n_orbits: int = 10**4, horizon: float = 100.0,
                            settle: float = 10.0, seed: int = 0,
                            h: float = 5e-4) -> float:
    """Fraction of sampled orbits that exit the box within the horizon.

    Samples are settled onto the attractor first (default 10 time units):
    an axis-aligned box cannot be forward-invariant for raw volume samples
    because the field points outward near the corners, so invariance is a
    statement about the attractor's neighborhood, not the whole box.
    Setting settle=0 measures the raw transient leakage instead.
    """
    est = escape_volume(p, box, horizon, n_orbits, seed, h=h, settle=settle)
    return 1.0 - est.value


def leafwise_average_gap(model: MapModel, phi: Callable, x: float, y1: float,
                         y2: float, n: int) -> float:
    """Gap between n-step averages of phi along two starts on one stable leaf.

    For a phi that is L-Lipschitz in y, uniform leaf contraction by
    lambda_s per step bounds the gap by L*|y1-y2| / (n*(1-lambda_s)).
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    p1, p2 = (x, y1), (x, y2)
    t1: list[float] = []
    t2: list[float] = []
    for j in range(n):
        if min_singular_distance(p1[0], model.singular_set) <= SINGULARITY_GUARD:
            raise HitSingularity(j)
        t1.append(phi(*p1))
        t2.append(phi(*p2))
        if j + 1 < n:
            p1 = eval_2d(model, p1)
            p2 = eval_2d(model, p2)
    return abs(math.fsum(t1) - math.fsum(t2)) / n
