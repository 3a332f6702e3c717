"""Command-line entry point: run one configured experiment, write artifacts.

Outputs are a CSV of result rows, a JSON summary embedding the config, and
optionally an SVG plot.  Every output is a pure function of (config, seed),
so repeat runs are byte-identical regardless of --threads.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__, rng
from .base_maps import log_deriv_batch, map_batch
from .config import (
    RunConfig,
    base_observable,
    build_box,
    build_lorenz,
    build_model,
    build_roof,
    parse_config,
    suspension_observable,
)
from .errors import ConfigInvalid, InsufficientData, SuspflowError
from .estimation import (
    DeviationConfig,
    RateFit,
    deviation_curve,
    estimate_base_average,
    fit_exponential_rate,
    nu_average,
    recurrence_deviation_volume,
    _masked_orbit_fractions,
)
from .lorenz import (
    OdeState,
    escape_volume,
    flow_deviation_volume,
    flow_space_average,
    integrate,
    occupation_fraction,
    return_time_profile,
)
from .suspension import SuspensionPoint, semiflow_evolve
from .svgplot import emit_plot


@dataclass(frozen=True)
class ResultRow:
    """One CSV row; ``param`` is the horizon T, the iterate count n, or a distance."""

    experiment: str
    series: str
    param: float
    estimate: float
    stderr: float = 0.0
    hits: int | None = None
    samples: int | None = None
    aborted: int | None = None


_CSV_HEADER = "experiment,series,param,estimate,stderr,hits,samples,aborted"


def _g17(v: float) -> str:
    return format(float(v), ".17g")


def write_csv(rows: list[ResultRow], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_CSV_HEADER + "\n")
        for r in rows:
            cells = [r.experiment, r.series, _g17(r.param), _g17(r.estimate),
                     _g17(r.stderr),
                     "" if r.hits is None else str(r.hits),
                     "" if r.samples is None else str(r.samples),
                     "" if r.aborted is None else str(r.aborted)]
            fh.write(",".join(cells) + "\n")


def _fit_dict(fit: RateFit) -> dict:
    return {
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "slope_stderr": fit.slope_stderr,
        "points_used": fit.points_used,
        "dropped": list(fit.dropped),
    }


def _avg_dict(est) -> dict:
    return {"value": est.value, "stderr": est.stderr, "n_orbits": est.n_orbits,
            "orbit_length": est.orbit_length, "burn_in": est.burn_in,
            "aborted": est.aborted, "spread": est.spread}


def _run_base_check(cfg: RunConfig) -> tuple[list[ResultRow], dict]:
    d = cfg.data
    model = build_model(d["model"])
    n_points = d.get("n_points", 1000)
    n_iter = d.get("n_iterates", 10**4)
    rows: list[ResultRow] = []
    summary: dict = {}

    lo, hi = model.domain
    xs = lo + (hi - lo) * rng.uniforms(cfg.seed, rng.STREAM_EXPANSION_STARTS, n_points)
    avgs, aborted = _masked_orbit_fractions(
        model, lambda t: -log_deriv_batch(model, t), xs, n_iter)
    kept = avgs[~aborted]
    if model.kind == "doubling":
        bound = -math.log(2.0)
    else:
        bound = -math.log(2.0 * model.params.alpha)
    within = int((kept <= bound + 1e-12).sum())
    rows.append(ResultRow(cfg.experiment, "expansion_average", n_iter,
                          float(kept.max()), float(kept.std(ddof=1)),
                          hits=within, samples=n_points,
                          aborted=int(aborted.sum())))
    summary["expansion"] = {
        "bound": bound, "max_average": float(kept.max()),
        "mean_average": float(kept.mean()), "points_within_bound": within,
        "points": n_points,
    }

    avg_kw = dict(d.get("average", {}))
    base_avg = estimate_base_average(model, base_observable("x"),
                                     seed=cfg.seed, **avg_kw)
    summary["base_average_x"] = _avg_dict(base_avg)

    if "recurrence" in d:
        rec = d["recurrence"]
        if not model.singular_set:
            summary["recurrence"] = {"slope": "refused",
                                     "reason": "map has no singular set"}
        else:
            entries = []
            for n in rec["n_grid"]:
                est = recurrence_deviation_volume(
                    model, rec["epsilon"], rec["delta"], int(n),
                    rec["n_samples"], cfg.seed)
                rows.append(ResultRow(cfg.experiment, "recurrence_volume", n,
                                      est.value, est.stderr, est.hits,
                                      est.samples, est.aborted))
                entries.append((n, est.value, est.stderr, est.hits))
            try:
                fit = fit_exponential_rate(entries)
                summary["recurrence"] = _fit_dict(fit)
            except InsufficientData as exc:
                summary["recurrence"] = {"slope": "refused", "reason": str(exc)}
    return rows, summary


def _run_deviation(cfg: RunConfig) -> tuple[list[ResultRow], dict, RateFit | None]:
    d = cfg.data
    system = d.get("system", "suspension")
    dc = DeviationConfig(epsilon=float(d["epsilon"]),
                         t_grid=tuple(float(t) for t in d["t_grid"]),
                         n_samples=int(d["n_samples"]), seed=cfg.seed)
    rows: list[ResultRow] = []
    summary: dict = {}
    entries = []
    if system == "suspension":
        model = build_model(d["model"])
        roof = build_roof(d.get("roof"))
        psi = suspension_observable(d["psi"])
        avg_kw = dict(d.get("average", {}))
        nu = nu_average(psi, model, roof, seed=cfg.seed, **avg_kw)
        summary["nu_hat"] = _avg_dict(nu)
        curve = deviation_curve(psi, model, roof, dc, nu.value)
        for T, est in curve:
            rows.append(ResultRow(cfg.experiment, "deviation_volume", T,
                                  est.value, est.stderr, est.hits,
                                  est.samples, est.aborted))
            entries.append((T, est.value, est.stderr, est.hits))
    else:
        p = build_lorenz(d.get("lorenz"))
        box = build_box(d.get("box"), "box.")
        h = float(d.get("h", 5e-4))
        avg_kw = dict(d.get("average", {}))
        mu = flow_space_average(p, coord=d["psi"], seed=cfg.seed, h=h,
                                box=box, **avg_kw)
        summary["mu_hat"] = _avg_dict(mu)
        for T in dc.t_grid:
            est = flow_deviation_volume(p, d["psi"], mu.value, dc.epsilon, T,
                                        dc.n_samples, cfg.seed, h=h, box=box)
            rows.append(ResultRow(cfg.experiment, "deviation_volume", T,
                                  est.value, est.stderr, est.hits,
                                  est.samples, est.aborted))
            entries.append((T, est.value, est.stderr, est.hits))
    fit = fit_exponential_rate(entries)
    summary["fit"] = _fit_dict(fit)
    return rows, summary, fit


def _run_escape(cfg: RunConfig) -> tuple[list[ResultRow], dict, RateFit | None]:
    d = cfg.data
    p = build_lorenz(d.get("lorenz"))
    region = build_box(d.get("region"))
    h = float(d.get("h", 5e-4))
    settle = float(d.get("settle", 0.0))
    rows: list[ResultRow] = []
    summary: dict = {}
    if d.get("check_occupation", True):
        occ = occupation_fraction(p, region, total_time=float(d.get("occupation_time", 1e4)),
                                  h=h)
        summary["occupation_fraction"] = occ
        if occ >= 0.99:
            raise ConfigInvalid(
                f"region occupation fraction {occ:.4f} >= 0.99; the region is "
                "effectively invariant (set check_occupation=false for sanity runs)")
    entries = []
    for T in d["t_grid"]:
        est = escape_volume(p, region, float(T), int(d["n_samples"]), cfg.seed,
                            h=h, settle=settle)
        rows.append(ResultRow(cfg.experiment, "survival", T, est.value,
                              est.stderr, est.hits, est.samples, est.aborted))
        entries.append((T, est.value, est.stderr, est.hits))
    fit = fit_exponential_rate(entries)
    summary["fit"] = _fit_dict(fit)
    return rows, summary, fit


def _run_lorenz_section(cfg: RunConfig) -> tuple[list[ResultRow], dict]:
    d = cfg.data
    p = build_lorenz(d.get("lorenz"))
    profile = return_time_profile(
        p, n_points=d.get("n_points", 17), d_lo=float(d.get("d_lo", 1e-6)),
        d_hi=float(d.get("d_hi", 1e-2)), h=float(d.get("h", 5e-4)),
        max_time=float(d.get("max_time", 1e3)))
    rows = [ResultRow(cfg.experiment, "return_time", dist, tau)
            for dist, tau in zip(profile.distances, profile.times)]
    summary = {"profile": {"a": profile.a, "b": profile.b,
                           "r_squared": profile.r_squared,
                           "trace_x": profile.trace_x}}
    return rows, summary


def _run_simulate(cfg: RunConfig) -> tuple[list[ResultRow], dict]:
    d = cfg.data
    system = d.get("system", "flow")
    T = float(d["T"])
    n_snap = d.get("n_snapshots", 200)
    dt = T / n_snap
    rows: list[ResultRow] = []
    if system == "flow":
        p = build_lorenz(d.get("lorenz"))
        h = float(d.get("h", 5e-4))
        state = OdeState(*[float(v) for v in d["initial"]])
        for k in range(1, n_snap + 1):
            state = integrate(p, state, dt, h=h)
            for series, val in (("x", state.x), ("y", state.y), ("z", state.z)):
                rows.append(ResultRow(cfg.experiment, series, k * dt, val))
        summary = {"final": {"x": state.x, "y": state.y, "z": state.z, "t": state.t}}
    else:
        model = build_model(d["model"])
        roof = build_roof(d.get("roof"))
        z = SuspensionPoint(x=float(d["initial"][0]), s=float(d["initial"][1]))
        for k in range(1, n_snap + 1):
            z = semiflow_evolve(model, roof, z, dt)
            rows.append(ResultRow(cfg.experiment, "x", k * dt, z.x))
            rows.append(ResultRow(cfg.experiment, "s", k * dt, z.s))
        summary = {"final": {"x": z.x, "s": z.s}}
    return rows, summary


def run(cfg: RunConfig, out_dir: str, plot: bool = False) -> dict:
    """Execute one experiment and write results.csv / summary.json (/ plot.svg)."""
    os.makedirs(out_dir, exist_ok=True)
    fit = None
    if cfg.experiment == "base-check":
        rows, summary = _run_base_check(cfg)
        plot_series = [(r.param, r.estimate, r.stderr) for r in rows
                       if r.series == "recurrence_volume"]
    elif cfg.experiment == "deviation":
        rows, summary, fit = _run_deviation(cfg)
        plot_series = [(r.param, r.estimate, r.stderr) for r in rows]
    elif cfg.experiment == "escape":
        rows, summary, fit = _run_escape(cfg)
        plot_series = [(r.param, r.estimate, r.stderr) for r in rows]
    elif cfg.experiment == "lorenz-section":
        rows, summary = _run_lorenz_section(cfg)
        plot_series = []
    else:
        rows, summary = _run_simulate(cfg)
        plot_series = []

    write_csv(rows, os.path.join(out_dir, "results.csv"))
    if plot and sum(1 for _, y, _ in plot_series if y > 0.0) >= 2:
        emit_plot(plot_series, fit, os.path.join(out_dir, "plot.svg"),
                  title=cfg.experiment)
        summary["plot"] = "plot.svg"
    out = {
        "experiment": cfg.experiment,
        "effective_seed": cfg.seed,
        "config": cfg.data,
        "versions": _versions(),
        "rows": len(rows),
        "results": summary,
    }
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(out, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def _versions() -> dict:
    import numba

    return {"package": __version__, "numpy": np.__version__,
            "numba": numba.__version__,
            "python": ".".join(map(str, sys.version_info[:3]))}


def _set_threads(n: int) -> None:
    # speed knob only: kernels are serial per sample and reductions are in
    # fixed index order, so results never depend on this
    import numba

    try:
        numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))
    except ValueError:
        pass


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="suspflow",
        description="Suspension-semiflow and Lorenz large-deviation experiments")
    parser.add_argument("--config", required=True, help="path to a JSON run config")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (affects speed only, never results)")
    parser.add_argument("--plot", action="store_true", help="emit an SVG plot")
    args = parser.parse_args(argv)

    if args.threads is not None:
        _set_threads(args.threads)
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigInvalid(f"config is not valid JSON: {exc}") from exc
        cfg = parse_config(raw)
        if args.seed is not None:
            cfg = RunConfig(experiment=cfg.experiment, seed=args.seed, data=cfg.data)
        run(cfg, args.out, plot=args.plot)
        return 0
    except ConfigInvalid as exc:
        _emit_error("ConfigInvalid", exc)
        return 2
    except InsufficientData as exc:
        _emit_error("InsufficientData", exc)
        return 3
    except OSError as exc:
        _emit_error("IoError", exc)
        return 4
    except SuspflowError as exc:
        _emit_error(type(exc).__name__, exc)
        return 5
    except Exception as exc:  # noqa: BLE001 -- CLI boundary
        _emit_error(type(exc).__name__, exc)
        return 1


def _emit_error(kind: str, exc: Exception) -> None:
    json.dump({"error": kind, "message": str(exc)}, sys.stderr)
    sys.stderr.write("\n")


if __name__ == "__main__":
    sys.exit(main())
