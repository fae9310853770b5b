"""Experiment harness: configuration, dispatch, and result serialization.

Each experiment writes three files into the output directory:

    <experiment>.csv   fixed column schema per experiment (see _SCHEMAS)
    summary.json       machine-readable verdicts, recomputable from the CSV
    meta.json          package version, config echo, wall time

Runs are deterministic: CSV floats use shortest round-trip formatting, rows
are emitted in a fixed order, and replica reductions happen in replica order
regardless of worker count, so a rerun with the same config and seed is
bit-identical (workers=1) and within 1e-12 across worker counts.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, estimate, oracles
from .estimate import PipelineSpec
from .noise import NoiseSpec, ObjectTrajectory, TimeGrid, sample_lin_path, subsample_trajectory
from .objects import (
    EnhancedDataSet,
    duhamel_heat,
    duhamel_wave,
    kappa_counterterm_heat,
    resonant_product,
    sigma_counterterm_wave,
    wick_square,
)
from .solvers import (
    SolveConfig,
    make_smooth_data,
    reconstruct_solution,
    solve_direct_truncated,
    solve_residual,
)
from .spectral import SpectralField, project, sobolev_norm

EXPERIMENTS = ("moments", "fit", "diverge", "sharpness", "cauchy", "solve", "reconstruct")

_SCHEMAS = {
    "moments": ("n_x", "n_y", "t", "mc_mean", "mc_se", "oracle", "z"),
    "fit": ("bracket", "value", "count", "in_window"),
    "diverge": ("N", "value"),
    "sharpness": ("n_x", "n_y", "bracket", "ratio"),
    "cauchy": ("N_coarse", "N_fine", "mean_sq_diff"),
    "solve": ("t", "sol_hneg", "sol_hsig"),
    "reconstruct": ("t", "err_coarse", "err_fine", "direct_norm_coarse"),
}

# Littlewood-Paley convention recorded with every run (block 0 is |n| <= 1).
LP_BLOCK0 = "|n| <= 1"


class ConfigError(ValueError):
    """Invalid experiment configuration (usage error, not an assertion failure)."""


@dataclass
class ExperimentConfig:
    """Flat experiment description; every field has a TOML key and a CLI flag."""

    experiment: str = ""
    flow: str = "wave"
    object: str = "lin"
    alpha: float = 0.3
    N: int | None = None
    N_ladder: tuple | None = None
    t0: float = 0.0
    h: float = 1.0 / 128
    M: int | None = None
    T: float | None = None
    times: tuple | None = None
    modes: tuple | None = None
    track_band: int | None = None
    replicas: int = 400
    seed: int = 0
    workers: int = 1
    out: str | None = None
    d: int = 2
    # fit / sharpness
    source: str = "oracle"  # oracle | mc
    fit_lo: float | None = None
    fit_hi: float | None = None
    rings: int = 9
    per_ring: int = 3
    tolerance: float | None = None
    # moments
    z_max: float = 4.0
    # diverge
    exp_tol: float = 0.15
    # sharpness
    ratio_band: float = 10.0
    # cauchy
    s: float | None = None
    # solvers
    expansion: str = "second_order"
    stepper: str = "euler"
    amplitude: float = 0.0
    norm_sigma: float = 0.5
    blowup_guard: float = 1.0e6
    lower_limit: str = "zero"
    T_burn: float = 20.0

    @classmethod
    def field_names(cls):
        return tuple(f.name for f in dataclasses.fields(cls))

    @classmethod
    def from_mapping(cls, mapping):
        known = set(cls.field_names())
        unknown = sorted(set(mapping) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        kw = {}
        for key, val in mapping.items():
            if isinstance(val, list):
                val = tuple(tuple(v) if isinstance(v, list) else v for v in val)
            kw[key] = val
        return cls(**kw)

    def echo(self):
        """Plain dict of the non-None fields (JSON- and TOML-friendly)."""
        out = {}
        for f in dataclasses.fields(self):
            val = getattr(self, f.name)
            if val is None:
                continue
            if isinstance(val, tuple):
                val = [list(v) if isinstance(v, tuple) else v for v in val]
            out[f.name] = val
        return out


def load_config(path):
    """Parse a flat TOML config file into its raw mapping."""
    try:
        import tomllib
    except ImportError:
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


# --------------------------------------------------------------- validation

def _needs_mc(cfg):
    return cfg.experiment == "moments" or (
        cfg.experiment in ("fit", "cauchy") and (cfg.source == "mc" or cfg.experiment == "cauchy")
    )


def apply_defaults(cfg):
    """Fill per-experiment defaults for fields left unset."""
    c = dataclasses.replace(cfg)
    e = c.experiment
    if e == "moments":
        c.times = c.times or ((0.25, 0.5) if c.flow == "wave" else (0.5,))
        c.modes = c.modes or ((0, 0), (1, 0), (3, 2))
        c.N = c.N or 16
        c.track_band = c.track_band or 4
    elif e == "fit":
        c.N = c.N or 64
        c.times = c.times or ((1.0,) if c.object == "lin" else (0.5,))
        c.fit_lo = c.fit_lo if c.fit_lo is not None else 4.0
        c.fit_hi = c.fit_hi if c.fit_hi is not None else (24.0 if c.object == "lin" else 32.0)
        if c.track_band is None:
            c.track_band = int(np.ceil(np.sqrt(max(c.fit_hi**2 - 1.0, 1.0))))
    elif e == "diverge":
        c.N_ladder = c.N_ladder or (8, 16, 32, 64, 128, 256)
        c.times = c.times or (0.5,)
        c.modes = c.modes or ((0, 0),)
    elif e == "sharpness":
        c.object = "duh"
        c.times = c.times or (0.25,)
        c.fit_lo = c.fit_lo if c.fit_lo is not None else 8.0
        c.fit_hi = c.fit_hi if c.fit_hi is not None else 64.0
        c.rings = c.rings if c.rings != 9 else 7
        c.per_ring = min(c.per_ring, 2) if c.per_ring == 3 else c.per_ring
    elif e == "cauchy":
        c.N_ladder = c.N_ladder or (8, 16, 32)
        c.s = c.s if c.s is not None else -(c.alpha + 0.1)
        if c.object == "solution":
            c.T = c.T if c.T is not None else 0.25
            c.h = c.h or 1.0 / 256
            c.replicas = c.replicas if c.replicas != 400 else 8
        else:
            c.times = c.times or (0.25,)
            c.track_band = c.track_band or 4
    elif e in ("solve", "reconstruct"):
        c.N = c.N or 16
        c.T = c.T if c.T is not None else 0.25
        c.s = c.s if c.s is not None else -(c.alpha + 0.1)
        if c.track_band is None:
            c.track_band = 2 * c.N
    if c.T is not None and c.M is None:
        c.M = int(round(c.T / c.h)) + 1
    if c.M is not None and c.T is None:
        c.T = c.h * (c.M - 1)
    if c.out is None:
        c.out = f"out_{e}" if e else "out"
    return c


def validate_config(cfg):
    """(errors, warnings) for a defaults-applied config."""
    errors, warnings = [], []
    if cfg.experiment not in EXPERIMENTS:
        errors.append(f"experiment must be one of {EXPERIMENTS}, got {cfg.experiment!r}")
        return errors, warnings
    if cfg.d != 2:
        errors.append(f"d={cfg.d} is not supported: only d=2 in v1 (d is a forward-compatibility field)")
    if cfg.flow not in ("wave", "heat"):
        errors.append(f"flow must be wave or heat, got {cfg.flow!r}")
    if not cfg.alpha > 0:
        errors.append(f"alpha must be > 0, got {cfg.alpha}")
    if cfg.h <= 0:
        errors.append(f"h must be > 0, got {cfg.h}")
    if cfg.t0 != 0.0:
        errors.append("t0 must be 0 (burn-in is handled internally via lower_limit)")
    if cfg.replicas < 1:
        errors.append("replicas must be >= 1")
    if cfg.workers < 1:
        errors.append("workers must be >= 1")
    if cfg.seed < 0:
        errors.append("seed must be a non-negative integer")

    obj_experiments = ("moments", "fit", "diverge", "sharpness")
    if cfg.experiment in obj_experiments and cfg.object not in ("lin", "wick", "duh", "res"):
        errors.append(f"object must be lin/wick/duh/res, got {cfg.object!r}")
    if cfg.experiment == "diverge" and cfg.object not in ("wick", "duh"):
        errors.append("diverge needs object=wick or duh (lin/res have no N-ladder moment)")
    if cfg.experiment == "sharpness" and cfg.flow != "wave":
        errors.append("sharpness is defined for flow=wave only")
    if cfg.experiment in ("diverge", "cauchy"):
        lad = cfg.N_ladder or ()
        if len(lad) < 2 or any(b <= a for a, b in zip(lad, lad[1:])):
            errors.append("N_ladder must be a strictly increasing list with >= 2 entries")
        elif cfg.experiment == "diverge" and len(lad) < 5:
            errors.append("diverge needs >= 5 ladder levels to classify the growth law")
    elif cfg.experiment == "sharpness":
        # N optional: the ratio oracle defaults to twice the mode radius
        if cfg.N is not None and cfg.N < 1:
            errors.append("N must be a positive integer when given")
    elif cfg.N is None or cfg.N < 1:
        errors.append("N must be a positive integer")
    if cfg.experiment in ("solve", "reconstruct", "cauchy"):
        if cfg.expansion not in ("first_order", "second_order", "direct"):
            errors.append(f"expansion must be first_order/second_order/direct, got {cfg.expansion!r}")
        if cfg.T is not None and cfg.T <= 0:
            errors.append("T must be > 0")

    # kernel resolution: the wave window h sqrt(1 + band^2) <= 0.5 applies to
    # every band the run integrates over (track_band for object pipelines,
    # the solve band / ladder top for solver runs)
    if cfg.flow == "wave":
        band = None
        if cfg.experiment in ("moments",) or (cfg.experiment == "fit" and cfg.source == "mc"):
            if cfg.object in ("duh", "res"):
                band = cfg.track_band
        elif cfg.experiment == "cauchy":
            band = (cfg.N_ladder or (0,))[-1] if cfg.object == "solution" else (
                cfg.track_band if cfg.object in ("duh", "res") else None
            )
        elif cfg.experiment in ("solve", "reconstruct"):
            band = cfg.track_band
        if band is not None and cfg.h * np.sqrt(1.0 + band**2) > 0.5:
            errors.append(
                f"resolution: h*<track_band> = {cfg.h * np.sqrt(1.0 + band ** 2):.3f} "
                f"violates the constraint h*<track_band> <= 0.5 (h={cfg.h}, band={band})"
            )

    if cfg.experiment in ("moments", "fit", "sharpness") and cfg.object in ("wick", "duh"):
        try:
            thr = oracles.divergence_threshold(cfg.object, cfg.flow)
        except ValueError:
            thr = None
        if thr is not None and cfg.alpha >= thr:
            warnings.append(
                f"alpha={cfg.alpha} is at/above the divergence threshold {thr} for "
                f"{cfg.object}/{cfg.flow}: truncated moments grow with N"
            )
    return errors, warnings


# ------------------------------------------------------------- result bundle

@dataclass
class ResultBundle:
    config: ExperimentConfig
    header: tuple
    rows: list
    summary: dict
    meta: dict = field(default_factory=dict)

    @property
    def passed(self):
        return bool(self.summary.get("pass", False))


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x)
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    return x


def write_bundle(bundle, outdir):
    """Write <experiment>.csv, summary.json, meta.json; returns the CSV path."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / f"{bundle.config.experiment}.csv"
    lines = [",".join(bundle.header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in bundle.rows)
    csv_path.write_text("\n".join(lines) + "\n")
    (outdir / "summary.json").write_text(
        json.dumps(_jsonable(bundle.summary), indent=2, sort_keys=True) + "\n"
    )
    (outdir / "meta.json").write_text(
        json.dumps(_jsonable(bundle.meta), indent=2, sort_keys=True) + "\n"
    )
    return csv_path


# ----------------------------------------------------------------- pipelines

def _pipeline(cfg, objects):
    return PipelineSpec(
        flow=cfg.flow,
        alpha=cfg.alpha,
        N=cfg.N,
        seed=cfg.seed,
        h=cfg.h,
        objects=objects,
        track_band=cfg.track_band or 4,
        lower_limit=cfg.lower_limit,
        T_burn=cfg.T_burn,
    )


def _enhanced_from_lin(lin, track_band, lower_limit="zero", T_burn=20.0):
    """Wick/duh/res stack on top of an existing lin path (shared-stream runs)."""
    N, alpha, flow = lin.N, lin.alpha, lin.flow
    times = lin.grid.times()
    if flow == "wave":
        ct = sigma_counterterm_wave(N, times, alpha)
    else:
        ct = kappa_counterterm_heat(N, alpha)
    wick = wick_square(lin, ct)
    if flow == "wave":
        duh = duhamel_wave(wick, track_band)
    else:
        duh = duhamel_heat(wick, lower_limit, T_burn=T_burn)
        if track_band < duh.band():
            duh = ObjectTrajectory(
                "duh", flow, alpha, N, duh.grid, [project(f, track_band) for f in duh.fields]
            )
    res = resonant_product(duh, lin)
    return EnhancedDataSet(lin, duh, res, wick), ct


def _counterterm(flow, N, times, alpha):
    if flow == "wave":
        return sigma_counterterm_wave(N, times, alpha)
    return kappa_counterterm_heat(N, alpha)


def _project_traj(traj, band):
    fields = [project(f, band) for f in traj.fields]
    vel = [project(f, band) for f in traj.vel] if traj.vel is not None else None
    return ObjectTrajectory(traj.kind, traj.flow, traj.alpha, band, traj.grid, fields, vel)


def _init_data(cfg, band):
    u0, u1 = make_smooth_data(band, amplitude=cfg.amplitude)
    if cfg.amplitude == 0.0:
        u0, u1 = SpectralField(band), SpectralField(band)
    return u0, u1


# ---------------------------------------------------------------- experiments

def _run_moments(cfg):
    pipe = _pipeline(cfg, (cfg.object,))
    table = estimate.mc_moment(pipe, cfg.modes, cfg.times, cfg.replicas, workers=cfg.workers)
    rows, zs = [], {}
    for n in cfg.modes:
        for t in cfg.times:
            e = table.entries[(cfg.object, tuple(n), float(t))]
            if cfg.object == "res":
                want, z = float("nan"), float("nan")
            else:
                want = oracles.moment_oracle(cfg.object, cfg.flow, n, t, cfg.N, cfg.alpha).value
                if e.se > 0:
                    z = (e.mean - want) / e.se
                else:
                    z = 0.0 if e.mean == want else float("inf")
                zs[(tuple(n), float(t))] = z
            rows.append((n[0], n[1], float(t), e.mean, e.se, want, z))
    if zs:
        worst = max(zs, key=lambda k: abs(zs[k]))
        max_abs_z = abs(zs[worst])
        ok = max_abs_z <= cfg.z_max
    else:
        worst, max_abs_z, ok = None, float("nan"), True
    summary = {
        "experiment": "moments",
        "object": cfg.object,
        "flow": cfg.flow,
        "R": cfg.replicas,
        "max_abs_z": max_abs_z,
        "worst": list(worst[0]) + [worst[1]] if worst else None,
        "z_max": cfg.z_max,
        "pass": ok,
    }
    return rows, summary


def _run_fit(cfg):
    t = cfg.times[0]
    modes = estimate.select_ring_modes(cfg.fit_lo, cfg.fit_hi, cfg.rings, cfg.per_ring)
    if cfg.source == "oracle":
        curve = estimate.oracle_curve(cfg.object, cfg.flow, cfg.alpha, cfg.N, t, modes)
    elif cfg.source == "mc":
        pipe = _pipeline(cfg, (cfg.object,))
        table = estimate.mc_moment(pipe, modes, [t], cfg.replicas, workers=cfg.workers)
        curve = estimate.annulus_average(table, t, cfg.object)
    else:
        raise ConfigError(f"source must be oracle or mc, got {cfg.source!r}")
    window = (cfg.fit_lo, cfg.fit_hi)
    if cfg.object == "duh":
        window = estimate.kernel_resolved_window(cfg.flow, t, *window)
    fit = estimate.fit_exponent(curve, window)
    try:
        predicted = oracles.predicted_regularity(cfg.object, cfg.flow, cfg.alpha)
    except ValueError:
        predicted = None
    tol = cfg.tolerance if cfg.tolerance is not None else (0.10 if cfg.object == "lin" else 0.20)
    ok = predicted is None or abs(fit.s0 - predicted) <= tol
    rows = [
        (br, val, cnt, int(window[0] <= br <= window[1]))
        for br, val, cnt in zip(curve.brackets, curve.values, curve.counts)
    ]
    summary = {
        "experiment": "fit",
        "object": cfg.object,
        "flow": cfg.flow,
        "source": cfg.source,
        "t": float(t),
        "s0": fit.s0,
        "slope": fit.slope,
        "slope_stderr": fit.slope_stderr,
        "r_squared": fit.r_squared,
        "window": [float(window[0]), float(window[1])],
        "predicted": predicted,
        "tolerance": tol,
        "pass": ok,
    }
    return rows, summary


def _predicted_growth(obj, flow, alpha):
    """(classification, exponent or None) for the truncated-moment N-ladder."""
    thr = oracles.divergence_threshold(obj, flow)
    if alpha < thr:
        return "bounded", None
    if alpha == thr:
        return "logarithmic", None
    p = 4.0 * alpha - 2.0 if thr == 0.5 else 4.0 * alpha - 4.0
    return "power", p


def _run_diverge(cfg):
    n = cfg.modes[0]
    t = cfg.times[0]
    values = [
        oracles.moment_oracle(cfg.object, cfg.flow, n, t, Ni, cfg.alpha).value
        for Ni in cfg.N_ladder
    ]
    gf = estimate.growth_fit(cfg.N_ladder, values)
    pred_class, pred_p = _predicted_growth(cfg.object, cfg.flow, cfg.alpha)
    ok = gf.classification == pred_class
    if ok and pred_class == "power":
        ok = abs(gf.exponent - pred_p) <= cfg.exp_tol
    rows = list(zip(cfg.N_ladder, values))
    summary = {
        "experiment": "diverge",
        "object": cfg.object,
        "flow": cfg.flow,
        "n": list(n),
        "t": float(t),
        "classification": gf.classification,
        "exponent": gf.exponent,
        "scores": gf.scores,
        "predicted_classification": pred_class,
        "predicted_exponent": pred_p,
        "exp_tol": cfg.exp_tol,
        "pass": ok,
    }
    return rows, summary


def _run_sharpness(cfg):
    t = cfg.times[0]
    modes = estimate.select_ring_modes(cfg.fit_lo, cfg.fit_hi, cfg.rings, cfg.per_ring)
    rows = []
    for n in modes:
        br = float(np.sqrt(1.0 + n[0] ** 2 + n[1] ** 2))
        ratio = oracles.wave_duh_sharpness_ratio(n, t, cfg.alpha, N=cfg.N)
        rows.append((n[0], n[1], br, ratio))
    ratios = np.array([r[3] for r in rows])
    all_pos = bool(np.all(ratios > 0))
    spread = float(ratios.max() / ratios.min()) if all_pos else float("inf")
    ok = all_pos and spread <= cfg.ratio_band
    summary = {
        "experiment": "sharpness",
        "flow": cfg.flow,
        "alpha": cfg.alpha,
        "t": float(t),
        "window": [float(cfg.fit_lo), float(cfg.fit_hi)],
        "min_ratio": float(ratios.min()),
        "max_ratio": float(ratios.max()),
        "spread": spread,
        "ratio_band": cfg.ratio_band,
        "all_positive": all_pos,
        "pass": ok,
    }
    return rows, summary


def _solution_ladder(cfg):
    """Coupled direct solves over the N-ladder; mean sup_t H^s difference^2."""
    grid = TimeGrid(0.0, cfg.h, cfg.M)
    ladder = cfg.N_ladder
    pairs = list(zip(ladder[:-1], ladder[1:]))
    acc = np.zeros(len(pairs))
    blown = False
    for r in range(cfg.replicas):
        lin_top = sample_lin_path(
            NoiseSpec(cfg.alpha, ladder[-1], cfg.flow, seed=cfg.seed, replica=r), grid
        )
        sols = {}
        for Ni in ladder:
            lin_i = _project_traj(lin_top, Ni) if Ni < ladder[-1] else lin_top
            lin_i = ObjectTrajectory(
                "lin", cfg.flow, cfg.alpha, Ni, grid, lin_i.fields, lin_i.vel
            )
            ct = _counterterm(cfg.flow, Ni, grid.times(), cfg.alpha)
            sc = SolveConfig(
                cfg.flow, "direct", Ni, cfg.h, cfg.T, cfg.alpha,
                blowup_guard=cfg.blowup_guard, norm_sigma=cfg.norm_sigma,
                stepper=cfg.stepper,
            )
            u0, u1 = _init_data(cfg, ladder[0])
            out = solve_direct_truncated(sc, lin_i, ct, u0, u1 if cfg.flow == "wave" else None)
            blown = blown or out.blowup
            sols[Ni] = out
        for j, (Na, Nb) in enumerate(pairs):
            fa, fb = sols[Na].fields, sols[Nb].fields
            K = min(len(fa), len(fb))
            acc[j] += max(sobolev_norm(fb[k] - fa[k], cfg.s) ** 2 for k in range(K))
    means = acc / cfg.replicas
    return pairs, means.tolist(), blown


def _run_cauchy(cfg):
    if cfg.object == "solution":
        pairs, diffs, blown = _solution_ladder(cfg)
        decreasing = [b < a for a, b in zip(diffs, diffs[1:])]
        ok = all(decreasing) and not blown
        extra = {"blowup": blown, "T": cfg.T, "R": cfg.replicas}
    else:
        pipe = _pipeline(cfg, (cfg.object,))
        report = estimate.cauchy_diagnostic(
            pipe, cfg.N_ladder, cfg.s, list(cfg.times), cfg.replicas
        )
        pairs, diffs = report.pairs, report.mean_sq_diffs
        decreasing = report.decreasing
        ok = report.all_decreasing
        extra = {"times": list(map(float, cfg.times)), "R": cfg.replicas}
    rows = [(a, b, d) for (a, b), d in zip(pairs, diffs)]
    summary = {
        "experiment": "cauchy",
        "object": cfg.object,
        "flow": cfg.flow,
        "s": cfg.s,
        "pairs": [list(p) for p in pairs],
        "mean_sq_diffs": list(map(float, diffs)),
        "decreasing": list(map(bool, decreasing)),
        "pass": ok,
        **extra,
    }
    return rows, summary


def _solve_once(cfg, lin):
    """One trajectory of u on lin's grid for the configured expansion."""
    sc = SolveConfig(
        cfg.flow, cfg.expansion, cfg.N, lin.grid.h, cfg.T, cfg.alpha,
        blowup_guard=cfg.blowup_guard, norm_sigma=cfg.norm_sigma, stepper=cfg.stepper,
    )
    u0, u1 = _init_data(cfg, cfg.N)
    if cfg.expansion == "direct":
        ct = _counterterm(cfg.flow, cfg.N, lin.grid.times(), cfg.alpha)
        out = solve_direct_truncated(sc, lin, ct, u0, u1 if cfg.flow == "wave" else None)
        return out, out.fields, None
    data, _ = _enhanced_from_lin(lin, cfg.track_band, cfg.lower_limit, cfg.T_burn)
    out = solve_residual(sc, data, u0, u1 if cfg.flow == "wave" else None)
    return out, reconstruct_solution(out, data), data


def _run_solve(cfg):
    grid = TimeGrid(0.0, cfg.h, cfg.M)
    lin = sample_lin_path(NoiseSpec(cfg.alpha, cfg.N, cfg.flow, seed=cfg.seed), grid)
    out, traj, _ = _solve_once(cfg, lin)
    s_low = -(cfg.alpha + 0.1)
    times = out.grid.times()
    rows = [
        (float(times[k]), sobolev_norm(traj[k], s_low), sobolev_norm(traj[k], cfg.norm_sigma))
        for k in range(len(traj))
    ]
    summary = {
        "experiment": "solve",
        "flow": cfg.flow,
        "expansion": cfg.expansion,
        "stepper": cfg.stepper,
        "T": cfg.T,
        "covered_T": float(times[-1]),
        "blowup": bool(out.blowup),
        "blowup_time": out.blowup_time,
        "final_hneg": rows[-1][1],
        "final_hsig": rows[-1][2],
        "pass": not out.blowup,
    }
    return rows, summary


def _reconstruct_err(cfg, lin):
    """(per-time errors, direct norms) of u_direct vs reconstructed u."""
    sc_d = SolveConfig(
        cfg.flow, "direct", cfg.N, lin.grid.h, cfg.T, cfg.alpha,
        blowup_guard=cfg.blowup_guard, norm_sigma=cfg.norm_sigma, stepper=cfg.stepper,
    )
    u0, u1 = _init_data(cfg, cfg.N)
    ct = _counterterm(cfg.flow, cfg.N, lin.grid.times(), cfg.alpha)
    direct = solve_direct_truncated(sc_d, lin, ct, u0, u1 if cfg.flow == "wave" else None)
    data, _ = _enhanced_from_lin(lin, cfg.track_band, cfg.lower_limit, cfg.T_burn)
    sc_r = SolveConfig(
        cfg.flow, cfg.expansion, cfg.N, lin.grid.h, cfg.T, cfg.alpha,
        blowup_guard=cfg.blowup_guard, norm_sigma=cfg.norm_sigma, stepper=cfg.stepper,
    )
    resid = solve_residual(sc_r, data, u0, u1 if cfg.flow == "wave" else None)
    rec = reconstruct_solution(resid, data)
    if direct.blowup or resid.blowup:
        raise RuntimeError("blowup during reconstruction check; lower amplitude or T")
    s = cfg.s
    errs = [sobolev_norm(a - b, s) for a, b in zip(rec, direct.fields)]
    norms = [sobolev_norm(b, s) for b in direct.fields]
    return errs, norms


def _run_reconstruct(cfg):
    fine_grid = TimeGrid(0.0, cfg.h / 2, 2 * (cfg.M - 1) + 1)
    lin_fine = sample_lin_path(NoiseSpec(cfg.alpha, cfg.N, cfg.flow, seed=cfg.seed), fine_grid)
    lin_coarse = subsample_trajectory(lin_fine, 2)

    coarse_cfg = cfg
    errs_c, norms_c = _reconstruct_err(coarse_cfg, lin_coarse)
    fine_cfg = dataclasses.replace(cfg, h=cfg.h / 2, M=2 * (cfg.M - 1) + 1)
    errs_f, norms_f = _reconstruct_err(fine_cfg, lin_fine)

    rel_c = max(errs_c) / max(norms_c)
    rel_f = max(errs_f) / max(norms_f)
    tol = cfg.tolerance if cfg.tolerance is not None else 5e-2
    ok = rel_c <= tol and rel_f < rel_c
    times = lin_coarse.grid.times()
    rows = [
        (float(times[k]), errs_c[k], errs_f[2 * k], norms_c[k])
        for k in range(len(errs_c))
    ]
    summary = {
        "experiment": "reconstruct",
        "flow": cfg.flow,
        "expansion": cfg.expansion,
        "s": cfg.s,
        "h": cfg.h,
        "rel_sup_coarse": float(rel_c),
        "rel_sup_fine": float(rel_f),
        "decreasing": bool(rel_f < rel_c),
        "tolerance": tol,
        "pass": ok,
    }
    return rows, summary


_RUNNERS = {
    "moments": _run_moments,
    "fit": _run_fit,
    "diverge": _run_diverge,
    "sharpness": _run_sharpness,
    "cauchy": _run_cauchy,
    "solve": _run_solve,
    "reconstruct": _run_reconstruct,
}


def run(cfg):
    """Validate, dispatch, and bundle one experiment."""
    cfg = apply_defaults(cfg)
    errors, warnings = validate_config(cfg)
    if errors:
        raise ConfigError("; ".join(errors))
    t0 = time.perf_counter()
    rows, summary = _RUNNERS[cfg.experiment](cfg)
    wall = time.perf_counter() - t0
    if warnings:
        summary["warnings"] = warnings
    meta = {
        "version": __version__,
        "config": cfg.echo(),
        "wall_time_s": wall,
        "lp_block0": LP_BLOCK0,
    }
    return ResultBundle(cfg, _SCHEMAS[cfg.experiment], rows, summary, meta)


# ------------------------------------------------------------------- catalog

@dataclass(frozen=True)
class CatalogEntry:
    name: str
    description: str
    config: dict


CATALOG = (
    CatalogEntry(
        "wave-wick-moments",
        "MC variance of the renormalized square (wave, alpha=0.3) vs the exact pair sum, max |z| <= 4",
        {"experiment": "moments", "flow": "wave", "object": "wick", "alpha": 0.3,
         "N": 16, "h": 0.0078125, "times": [0.25, 0.5],
         "modes": [[0, 0], [1, 0], [3, 2]], "replicas": 2000, "seed": 2024},
    ),
    CatalogEntry(
        "wave-duh-moments",
        "MC variance of the second-order Duhamel object (wave, alpha=0.3) vs the quadrature oracle",
        {"experiment": "moments", "flow": "wave", "object": "duh", "alpha": 0.3,
         "N": 16, "h": 0.0078125, "times": [0.25, 0.5],
         "modes": [[0, 0], [1, 0], [3, 2]], "replicas": 2000, "seed": 2024,
         "track_band": 4},
    ),
    CatalogEntry(
        "heat-duh-moments",
        "MC variance of the second-order Duhamel object (heat, alpha=0.5) vs the closed form",
        {"experiment": "moments", "flow": "heat", "object": "duh", "alpha": 0.5,
         "N": 16, "h": 0.0078125, "times": [0.5],
         "modes": [[0, 0], [1, 0], [3, 2]], "replicas": 2000, "seed": 2024,
         "track_band": 4},
    ),
    CatalogEntry(
        "lin-decay-wave",
        "first-chaos decay exponent (wave): fitted s0 within 0.1 of -alpha on <n> in [4,24]",
        {"experiment": "fit", "flow": "wave", "object": "lin", "alpha": 0.3,
         "N": 64, "times": [1.0], "fit_lo": 4.0, "fit_hi": 24.0, "seed": 1},
    ),
    CatalogEntry(
        "wave-duh-smoothing",
        "second-order smoothing exponent (wave, alpha=0.35): oracle curve on [4,32], "
        "fit gated at the kernel-resolution scale 2 pi / t",
        {"experiment": "fit", "flow": "wave", "object": "duh", "alpha": 0.35,
         "N": 64, "times": [0.5], "fit_lo": 4.0, "fit_hi": 32.0, "seed": 1},
    ),
    CatalogEntry(
        "wave-duh-log-divergence",
        "wave second-order object at the alpha=1/2 threshold: N-ladder classified logarithmic",
        {"experiment": "diverge", "flow": "wave", "object": "duh", "alpha": 0.5,
         "N_ladder": [8, 16, 32, 64, 128, 256], "times": [0.5], "modes": [[0, 0]]},
    ),
    CatalogEntry(
        "heat-wick-power-divergence",
        "heat renormalized square above threshold (alpha=0.75): power growth with p = 4 alpha - 2",
        {"experiment": "diverge", "flow": "heat", "object": "wick", "alpha": 0.75,
         "N_ladder": [8, 16, 32, 64, 128, 256], "times": [0.5], "modes": [[0, 0]]},
    ),
    CatalogEntry(
        "wave-duh-sharpness",
        "lower-bound ratio for the wave second-order object at alpha=0.35: positive and within a factor-10 band",
        {"experiment": "sharpness", "flow": "wave", "alpha": 0.35,
         "times": [0.25], "fit_lo": 8.0, "fit_hi": 64.0, "rings": 7, "per_ring": 2},
    ),
    CatalogEntry(
        "wave-solution-cauchy",
        "coupled direct solves over N in {8,16,32} (wave, alpha=0.3): sup-t H^{-0.4} rungs decrease",
        {"experiment": "cauchy", "flow": "wave", "object": "solution", "alpha": 0.3,
         "N_ladder": [8, 16, 32], "h": 0.00390625, "T": 0.25, "replicas": 8,
         "seed": 7},
    ),
    CatalogEntry(
        "wave-reconstruction",
        "reconstruction identity (wave, alpha=0.3, N=16): direct solve vs residual solve "
        "+ stochastic objects on a shared path, error shrinking under h -> h/2",
        {"experiment": "reconstruct", "flow": "wave", "alpha": 0.3, "N": 16,
         "h": 0.00390625, "T": 0.25, "expansion": "second_order", "seed": 11},
    ),
)


def catalog_lines():
    out = []
    for e in CATALOG:
        out.append(f"{e.name:28s} [{e.config['experiment']:11s}] {e.description}")
    return out


def catalog_entry(name):
    for e in CATALOG:
        if e.name == name:
            return e
    raise ConfigError(f"no catalog entry named {name!r}")
