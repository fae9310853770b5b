"""Renormalized stochastic objects built from sampled noise paths.

Pipeline: lin -> wick -> duh -> res on one noise realization.

* wick: the Wick square <2>_N = (<1>_N)^2 - sigma_N(t), computed as a
  dealiased field product; the counterterm is a spatial constant, i.e. it
  lives in the n = 0 coefficient with weight 2*pi (e_0 = 1/2pi).
* duh (wave): the Duhamel integral I(<2>) under the Klein-Gordon kernel
  sin((t-s)<n>)/<n>, evaluated per tracked mode by running trapezoid
  accumulators C(t) = int cos(s<n>) F ds and S(t) = int sin(s<n>) F ds so that
  duh = (sin(t<n>) C - cos(t<n>) S)/<n>.  The kernel oscillates at the OUTPUT
  mode frequency, so resolution is governed by track_band, not by N.
* duh (heat): the semigroup integral with per-step weights that are exact for
  a piecewise-linear integrand (an ETD2-type recursion), with lower limit 0
  (matching the moment oracles) or -infinity realized by starting the grid at
  -T_burn.
* res: the resonant paraproduct part duh (.) lin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .noise import ObjectTrajectory, sample_lin_path
from .spectral import (
    SpectralField,
    disk_mask,
    lattice_grids,
    paraproduct_split,
    project,
    square_dealiased_batch,
)

__all__ = [
    "EnhancedDataSet",
    "sigma_counterterm_wave",
    "kappa_counterterm_heat",
    "wick_square",
    "duhamel_wave",
    "duhamel_heat",
    "resonant_product",
    "build_enhanced_set",
]

TWO_PI = 2.0 * np.pi


@dataclass
class EnhancedDataSet:
    """The stochastic data (lin, duh, res) of one realization; wick optional."""

    lin: ObjectTrajectory
    duh: ObjectTrajectory
    res: ObjectTrajectory
    wick: ObjectTrajectory | None = None


def _band_brackets_sq(N):
    nx, ny = lattice_grids(N)
    return 1.0 + nx * nx + ny * ny


def sigma_counterterm_wave(N, t, alpha):
    """Wick counterterm sigma_N(t) = (1/4 pi^2) sum_{|n|<=N} sigma_n(t, t).

    Broadcasts over an array of times.
    """
    brsq = _band_brackets_sq(N)[disk_mask(N)]
    t = np.asarray(t, dtype=float)
    tt = t[..., None]
    br = np.sqrt(brsq)
    terms = tt * brsq ** (alpha - 1.0) - np.sin(2.0 * tt * br) / (2.0 * br ** (3.0 - 2.0 * alpha))
    out = terms.sum(axis=-1) / (8.0 * np.pi**2)
    return float(out) if out.ndim == 0 else out


def kappa_counterterm_heat(N, alpha):
    """Heat Wick counterterm kappa_N = (1/8 pi^2) sum_{|n|<=N} <n>^{-2(1-alpha)}."""
    brsq = _band_brackets_sq(N)[disk_mask(N)]
    return float(np.sum(brsq ** (alpha - 1.0))) / (8.0 * np.pi**2)


def wick_square(lin, counterterm):
    """<2> trajectory: squared field minus the (time-indexed) counterterm.

    counterterm may be a scalar, an array over grid times, or a callable of t.
    """
    if lin.kind != "lin":
        raise ValueError("wick_square expects a lin trajectory")
    times = lin.grid.times()
    if callable(counterterm):
        cts = np.asarray([counterterm(t) for t in times], dtype=float)
    else:
        cts = np.broadcast_to(np.asarray(counterterm, dtype=float), times.shape)
    fields = square_dealiased_batch(lin.fields)
    for k, w in enumerate(fields):
        w.coeffs[w.band, w.band] -= cts[k] * TWO_PI
    return ObjectTrajectory("wick", lin.flow, lin.alpha, lin.N, lin.grid, fields)


def duhamel_wave(wick, track_band):
    """Duhamel integral of a wave forcing trajectory on modes |n| <= track_band."""
    if wick.grid.t0 != 0.0:
        raise ValueError("wave Duhamel integral starts at t0 = 0")
    tb = int(track_band)
    if wick.fields[0].band < tb:
        raise ValueError("track_band exceeds the forcing band")
    h = wick.grid.h
    if h * np.sqrt(1.0 + tb * tb) > 0.5:
        raise ValueError(
            f"step h={h} cannot resolve the kernel up to band {tb} (need h*<band> <= 0.5)"
        )
    br = np.sqrt(_band_brackets_sq(tb))
    mask = disk_mask(tb)
    off = wick.fields[0].band - tb
    w = 2 * tb + 1
    times = wick.grid.times()

    def window(k):
        return wick.fields[k].coeffs[off : off + w, off : off + w]

    C = np.zeros((w, w), dtype=complex)
    S = np.zeros((w, w), dtype=complex)
    F = window(0)
    gc_prev = np.cos(times[0] * br) * F
    gs_prev = np.sin(times[0] * br) * F
    fields = [SpectralField(tb)]
    for k in range(1, wick.grid.M):
        F = window(k)
        cb = np.cos(times[k] * br)
        sb = np.sin(times[k] * br)
        gc, gs = cb * F, sb * F
        C += 0.5 * h * (gc_prev + gc)
        S += 0.5 * h * (gs_prev + gs)
        gc_prev, gs_prev = gc, gs
        coeffs = np.where(mask, (sb * C - cb * S) / br, 0.0)
        fields.append(SpectralField(tb, coeffs))
    return ObjectTrajectory("duh", wick.flow, wick.alpha, wick.N, wick.grid, fields)


def duhamel_heat(wick, lower_limit="zero", T_burn=20.0):
    """Semigroup Duhamel integral of a heat forcing trajectory (full band).

    Per-step weights are exact for piecewise-linear integrands:
        R_{k+1} = E R_k + phi1 F_k + phi2 F_{k+1},
        E = e^{-h b^2}, J0 = (1-E)/b^2, J1 = (1 - E(1 + h b^2))/b^4,
        phi1 = J1/h, phi2 = J0 - J1/h.
    lower_limit "zero" integrates from t0 = 0; "minus_infinity" requires the
    grid to start at -T_burn (truncation error ~ e^{-T_burn * <n>^2}).
    """
    grid = wick.grid
    if lower_limit == "zero":
        if grid.t0 != 0.0:
            raise ValueError("lower_limit zero requires the grid to start at 0")
    elif lower_limit == "minus_infinity":
        if not np.isclose(grid.t0, -T_burn):
            raise ValueError("lower_limit minus_infinity requires t0 = -T_burn")
    else:
        raise ValueError(f"unknown lower_limit {lower_limit!r}")
    B = wick.fields[0].band
    brsq = _band_brackets_sq(B)
    h = grid.h
    x = h * brsq
    E = np.exp(-x)
    J0 = -np.expm1(-x) / brsq
    small = x < 1e-3
    xs = np.where(small, x, 1.0)
    series = xs**2 / 2.0 - xs**3 / 3.0 + xs**4 / 8.0 - xs**5 / 30.0
    J1 = np.where(small, series, 1.0 - E * (1.0 + x)) / brsq**2
    phi1 = J1 / h
    phi2 = J0 - J1 / h

    R = np.zeros_like(wick.fields[0].coeffs)
    fields = [SpectralField(B)]
    for k in range(1, grid.M):
        R = E * R + phi1 * wick.fields[k - 1].coeffs + phi2 * wick.fields[k].coeffs
        fields.append(SpectralField(B, R.copy()))
    return ObjectTrajectory("duh", wick.flow, wick.alpha, wick.N, grid, fields)


def resonant_product(duh, lin):
    """<21p> trajectory: the resonant paraproduct part of duh * lin, per time."""
    if duh.grid != lin.grid:
        raise ValueError("resonant_product needs trajectories on a common grid")
    fields = []
    for fd, fl in zip(duh.fields, lin.fields):
        fields.append(paraproduct_split(fd, fl)[1])
    return ObjectTrajectory("res", duh.flow, duh.alpha, duh.N, duh.grid, fields)


def build_enhanced_set(spec, grid, track_band, lower_limit="zero", T_burn=20.0, keep_wick=True):
    """Sample one noise realization and build (lin, wick, duh, res) on it."""
    lin = sample_lin_path(spec, grid)
    times = grid.times()
    if spec.kind == "wave":
        ct = sigma_counterterm_wave(spec.N, times, spec.alpha)
    else:
        ct = kappa_counterterm_heat(spec.N, spec.alpha)
    wick = wick_square(lin, ct)
    if spec.kind == "wave":
        duh = duhamel_wave(wick, track_band)
    else:
        duh = duhamel_heat(wick, lower_limit=lower_limit, T_burn=T_burn)
        if track_band < duh.fields[0].band:
            # keep the API symmetric: restrict stored duh to the tracked window
            duh = ObjectTrajectory(
                "duh", duh.flow, duh.alpha, duh.N, duh.grid,
                [project(f, track_band) for f in duh.fields],
            )
    res = resonant_product(duh, lin)
    return EnhancedDataSet(lin, duh, res, wick if keep_wick else None)
