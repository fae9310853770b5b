"""Monte-Carlo moment estimation, exponent fitting, and growth classification.

The MC layer estimates E|X^(n, t)|^2 for the pipeline objects over independent
replicas.  Replicas are processed in fixed-size chunks (CHUNK below) and the
per-chunk partial sums are merged in chunk order, so results are bit-identical
for any worker count: parallelism changes who computes a chunk, never the
order of floating-point reductions.

Regularity is read off coefficient-variance decay: a least-squares slope of
log variance against log <n> over a fit window, inverted through
variance ~ <n>^{-2 - 2 s0} (d = 2).  Divergence in N is classified by
competing three models (bounded with decaying tail, a + b log N, a N^p) on a
geometric ladder and picking the smallest relative residual.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import oracles
from .noise import NoiseSpec, TimeGrid, sample_lin_path
from .objects import (
    duhamel_heat,
    duhamel_wave,
    kappa_counterterm_heat,
    resonant_product,
    sigma_counterterm_wave,
    wick_square,
)

__all__ = [
    "CHUNK",
    "PipelineSpec",
    "MomentEntry",
    "MomentTable",
    "DecayCurve",
    "ExponentFit",
    "GrowthFit",
    "ZReport",
    "CauchyReport",
    "mc_moment",
    "annulus_average",
    "select_ring_modes",
    "oracle_curve",
    "fit_exponent",
    "kernel_resolved_window",
    "compare_to_oracle",
    "growth_fit",
    "cauchy_diagnostic",
]

# Determinism unit: replica chunk size. Chunk boundaries are fixed by replica
# index, never by worker count.
CHUNK = 25

_OBJECTS = ("lin", "wick", "duh", "res")


@dataclass(frozen=True)
class PipelineSpec:
    """What to build per replica and which objects to read off."""

    flow: str
    alpha: float
    N: int
    seed: int
    h: float
    objects: tuple = ("lin",)
    track_band: int = 4
    lower_limit: str = "zero"
    T_burn: float = 20.0

    def __post_init__(self):
        for obj in self.objects:
            if obj not in _OBJECTS:
                raise ValueError(f"unknown object {obj!r}")
        if self.h <= 0:
            raise ValueError("h must be > 0")


@dataclass(frozen=True)
class MomentEntry:
    mean: float
    se: float
    count: int


@dataclass
class MomentTable:
    """Per-(object, mode, time) mean and standard error of |coeff|^2."""

    entries: dict  # (obj, (nx, ny), t) -> MomentEntry
    R: int

    def mean(self, obj, n, t):
        return self.entries[(obj, tuple(n), float(t))].mean

    def se(self, obj, n, t):
        return self.entries[(obj, tuple(n), float(t))].se


@dataclass
class DecayCurve:
    """Averaged variance per <n> bucket at a fixed time."""

    brackets: np.ndarray
    values: np.ndarray
    counts: np.ndarray
    t: float
    obj: str


@dataclass
class ExponentFit:
    s0: float
    slope: float
    slope_stderr: float
    fit_range: tuple
    r_squared: float


@dataclass
class GrowthFit:
    classification: str  # bounded | logarithmic | power
    exponent: float | None
    scores: dict = field(default_factory=dict)


@dataclass
class ZReport:
    z_scores: dict
    max_abs_z: float
    worst_key: tuple


@dataclass
class CauchyReport:
    pairs: list  # [(N, 2N), ...]
    mean_sq_diffs: list
    decreasing: list  # level k vs level k-1

    @property
    def all_decreasing(self):
        return all(self.decreasing)


def _grid_for(pipeline, t_list):
    t0 = 0.0
    if pipeline.lower_limit == "minus_infinity" and "duh" in _depth(pipeline.objects):
        t0 = -pipeline.T_burn
    t_max = max(t_list)
    M = int(round((t_max - t0) / pipeline.h)) + 1
    grid = TimeGrid(t0, pipeline.h, M)
    idx = []
    for t in t_list:
        k = int(round((t - t0) / pipeline.h))
        if not (0 <= k < M) or abs(t0 + k * pipeline.h - t) > 1e-9:
            raise ValueError(f"time {t} is not on the grid (h={pipeline.h})")
        idx.append(k)
    return grid, idx


def _depth(objects):
    """Objects that must actually be built to serve the requested ones."""
    need = set(objects)
    if "res" in need:
        need |= {"duh"}
    if "duh" in need:
        need |= {"wick"}
    if "wick" in need:
        need |= {"lin"}
    return need


def _build_objects(pipeline, replica, grid):
    spec = NoiseSpec(pipeline.alpha, pipeline.N, pipeline.flow, pipeline.seed, replica)
    need = _depth(pipeline.objects)
    built = {"lin": sample_lin_path(spec, grid)}
    if "wick" in need:
        if pipeline.flow == "wave":
            ct = sigma_counterterm_wave(pipeline.N, grid.times(), pipeline.alpha)
        else:
            ct = kappa_counterterm_heat(pipeline.N, pipeline.alpha)
        built["wick"] = wick_square(built["lin"], ct)
    if "duh" in need:
        if pipeline.flow == "wave":
            built["duh"] = duhamel_wave(built["wick"], pipeline.track_band)
        else:
            built["duh"] = duhamel_heat(
                built["wick"], lower_limit=pipeline.lower_limit, T_burn=pipeline.T_burn
            )
    if "res" in need:
        built["res"] = resonant_product(built["duh"], built["lin"])
    return built


def _chunk_worker(args):
    pipeline, r0, r1, n_list, t_list = args
    grid, t_idx = _grid_for(pipeline, t_list)
    nkeys = len(pipeline.objects) * len(n_list) * len(t_list)
    acc = np.zeros(nkeys)
    acc2 = np.zeros(nkeys)
    for r in range(r0, r1):
        built = _build_objects(pipeline, r, grid)
        j = 0
        for obj in pipeline.objects:
            traj = built[obj]
            for n in n_list:
                for k in t_idx:
                    v = abs(traj.fields[k].coeff(n)) ** 2
                    acc[j] += v
                    acc2[j] += v * v
                    j += 1
    return acc, acc2


def mc_moment(pipeline, n_list, t_list, R, workers=1):
    """Estimate E|X^(n, t)|^2 over R replicas for each requested object."""
    if R < 2:
        raise ValueError("R must be >= 2")
    n_list = [tuple(n) for n in n_list]
    t_list = [float(t) for t in t_list]
    chunks = [
        (pipeline, r0, min(r0 + CHUNK, R), n_list, t_list) for r0 in range(0, R, CHUNK)
    ]
    if workers <= 1:
        partials = [_chunk_worker(c) for c in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(_chunk_worker, chunks))
    total = np.zeros_like(partials[0][0])
    total2 = np.zeros_like(partials[0][1])
    for acc, acc2 in partials:  # fixed merge order -> worker-count invariant
        total += acc
        total2 += acc2
    mean = total / R
    var = np.maximum(total2 - R * mean**2, 0.0) / (R - 1)
    se = np.sqrt(var / R)
    entries = {}
    j = 0
    for obj in pipeline.objects:
        for n in n_list:
            for t in t_list:
                entries[(obj, n, t)] = MomentEntry(float(mean[j]), float(se[j]), R)
                j += 1
    return MomentTable(entries, R)


def annulus_average(table, t, obj=None):
    """Average table entries over modes sharing the same <n>, at one time."""
    objs = {k[0] for k in table.entries}
    if obj is None:
        if len(objs) != 1:
            raise ValueError("table holds several objects; pass obj explicitly")
        obj = next(iter(objs))
    buckets = {}
    for (o, n, tt), e in table.entries.items():
        if o != obj or tt != float(t):
            continue
        br = float(np.sqrt(1.0 + n[0] ** 2 + n[1] ** 2))
        buckets.setdefault(round(br, 12), []).append(e.mean)
    if not buckets:
        raise ValueError(f"no entries for object {obj!r} at t={t}")
    brs = np.array(sorted(buckets))
    vals = np.array([np.mean(buckets[b]) for b in brs])
    counts = np.array([len(buckets[b]) for b in brs])
    return DecayCurve(brs, vals, counts, float(t), obj)


def select_ring_modes(lo, hi, rings, per_ring=3):
    """Deterministic spread of lattice modes with <n> in [lo, hi].

    Picks `rings` geometric radius targets and, for each, up to per_ring
    half-lattice modes closest to the target with distinct directions.
    Returns a list of (nx, ny) without duplicates.
    """
    if not (1.0 <= lo < hi):
        raise ValueError("need 1 <= lo < hi")
    rmax = int(np.ceil(np.sqrt(hi * hi - 1.0)))
    cand = []
    for nx in range(0, rmax + 1):
        ystart = 1 if nx == 0 else -rmax
        for ny in range(ystart, rmax + 1):
            if nx == 0 and ny <= 0:
                continue
            br = np.sqrt(1.0 + nx * nx + ny * ny)
            if lo <= br <= hi:
                cand.append((br, nx, ny))
    cand.sort()
    targets = np.geomspace(lo, hi, rings)
    chosen, seen = [], set()
    for rho in targets:
        ranked = sorted(cand, key=lambda c: (abs(c[0] - rho), c[1], c[2]))
        picked = []
        for br, nx, ny in ranked:
            if (nx, ny) in seen:
                continue
            # avoid near-parallel picks within a ring
            ang = np.arctan2(ny, nx)
            if any(abs(ang - a) < 0.2 for _, a in picked):
                continue
            picked.append(((nx, ny), ang))
            seen.add((nx, ny))
            if len(picked) >= per_ring:
                break
        chosen.extend(p for p, _ in picked)
    return chosen


def oracle_curve(obj, flow, alpha, N, t, modes):
    """Deterministic decay curve from the closed-form moment oracles."""
    buckets = {}
    for n in modes:
        val = oracles.moment_oracle(obj, flow, n, t, N, alpha).value
        br = float(np.sqrt(1.0 + n[0] ** 2 + n[1] ** 2))
        buckets.setdefault(round(br, 12), []).append(val)
    brs = np.array(sorted(buckets))
    vals = np.array([np.mean(buckets[b]) for b in brs])
    counts = np.array([len(buckets[b]) for b in brs])
    return DecayCurve(brs, vals, counts, float(t), obj)


def kernel_resolved_window(flow, t, lo, hi):
    """Clip a fit window to scales where the Duhamel kernel is resolved.

    The wave kernel sin((t-s)<n>)/<n> completes a full period inside [0, t]
    only for <n> >= 2 pi / t; below that scale the integral is still in its
    short-time regime and carries no decay exponent, so fitting there reads a
    mixture.  The heat kernel is monotone and needs no gate.
    """
    if flow == "wave":
        lo = max(lo, 2.0 * np.pi / t)
    if lo >= hi:
        raise ValueError(f"window empty after kernel gate: [{lo}, {hi}]")
    return (lo, hi)


def fit_exponent(curve, fit_range):
    """Least-squares slope of log variance vs log <n>; s0 = -(slope + 2)/2."""
    lo, hi = fit_range
    sel = (curve.brackets >= lo) & (curve.brackets <= hi)
    if int(sel.sum()) < 4:
        raise ValueError(f"need >= 4 buckets in [{lo}, {hi}], have {int(sel.sum())}")
    x = np.log(curve.brackets[sel])
    y = np.log(curve.values[sel])
    m = len(x)
    xbar = x.mean()
    sxx = np.sum((x - xbar) ** 2)
    slope = float(np.sum((x - xbar) * (y - y.mean())) / sxx)
    intercept = float(y.mean() - slope * xbar)
    resid = y - (intercept + slope * x)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    stderr = float(np.sqrt(ss_res / max(m - 2, 1) / sxx))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return ExponentFit(
        s0=-(slope + 2.0) / 2.0,
        slope=slope,
        slope_stderr=stderr,
        fit_range=(float(lo), float(hi)),
        r_squared=r2,
    )


def compare_to_oracle(table, oracle_values):
    """Per-key z = (mc - oracle)/SE; the table must cover every oracle key."""
    zs = {}
    for key, want in oracle_values.items():
        if key not in table.entries:
            raise ValueError(f"table has no entry for {key}")
        e = table.entries[key]
        if e.se > 0:
            zs[key] = (e.mean - want) / e.se
        else:
            zs[key] = 0.0 if e.mean == want else np.inf
    worst = max(zs, key=lambda k: abs(zs[k]))
    return ZReport(zs, abs(zs[worst]), worst)


def _rel_rms(fit, vals):
    return float(np.sqrt(np.mean((fit - vals) ** 2)) / np.sqrt(np.mean(vals**2)))


def growth_fit(N_values, values):
    """Classify a variance-vs-N ladder as bounded / logarithmic / power."""
    N_values = np.asarray(N_values, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(N_values) < 5:
        raise ValueError("need >= 5 ladder points")
    if np.any(np.diff(N_values) <= 0):
        raise ValueError("ladder must be increasing")
    if np.any(values <= 0):
        raise ValueError("values must be positive")
    scores = {}
    # bounded: a + b/N (decaying tail toward a finite limit)
    A = np.stack([np.ones_like(N_values), 1.0 / N_values], axis=1)
    coef, *_ = np.linalg.lstsq(A, values, rcond=None)
    scores["bounded"] = _rel_rms(A @ coef, values)
    # logarithmic: a + b log N
    A = np.stack([np.ones_like(N_values), np.log(N_values)], axis=1)
    coef, *_ = np.linalg.lstsq(A, values, rcond=None)
    scores["logarithmic"] = _rel_rms(A @ coef, values)
    # power: a N^p via log-log least squares, scored in the original scale
    x = np.log(N_values)
    y = np.log(values)
    p = float(np.polyfit(x, y, 1)[0])
    a = float(np.exp(np.polyfit(x, y, 1)[1]))
    scores["power"] = _rel_rms(a * N_values**p, values)
    best = min(scores, key=scores.get)
    return GrowthFit(best, p if best == "power" else None, scores)


def cauchy_diagnostic(pipeline, N_ladder, s, t_list, R):
    """Coupled-truncation differences E sup_t ||X_2N - X_N||_{H^s}^2 per rung.

    The same (seed, replica) drives every band, so X_N is exactly the band-N
    truncation of the same noise path at each level.
    """
    from .spectral import sobolev_norm

    N_ladder = [int(N) for N in N_ladder]
    if len(N_ladder) < 2:
        raise ValueError("need at least two ladder levels")
    for a, b in zip(N_ladder, N_ladder[1:]):
        if b != 2 * a:
            raise ValueError("ladder must double: N, 2N, 4N, ...")
    if len(pipeline.objects) != 1:
        raise ValueError("cauchy_diagnostic works on a single object")
    obj = pipeline.objects[0]
    grid, t_idx = _grid_for(pipeline, t_list)
    sums = np.zeros(len(N_ladder) - 1)
    for r in range(R):
        fields = []
        for N in N_ladder:
            p = PipelineSpec(
                pipeline.flow, pipeline.alpha, N, pipeline.seed, pipeline.h,
                pipeline.objects, pipeline.track_band, pipeline.lower_limit,
                pipeline.T_burn,
            )
            traj = _build_objects(p, r, grid)[obj]
            fields.append([traj.fields[k] for k in t_idx])
        for lev in range(len(N_ladder) - 1):
            diff_sq = max(
                sobolev_norm(f2 - f1, s) ** 2
                for f1, f2 in zip(fields[lev], fields[lev + 1])
            )
            sums[lev] += diff_sq
    diffs = list(sums / R)
    decreasing = [b < a for a, b in zip(diffs, diffs[1:])]
    pairs = [(N, 2 * N) for N in N_ladder[:-1]]
    return CauchyReport(pairs, diffs, decreasing)
