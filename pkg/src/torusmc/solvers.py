"""Time integrators for the residual equations and the direct truncated flow.

Residual solves follow the Da Prato-Debussche decompositions: first order
v = u - lin, second order v = u - lin + duh, with the nonlinearity assembled
from the enhanced data set.  The right-hand sides are those of the BAND-B
TRUNCATED system rather than the continuum one: writing P for the projection
to |n| <= B (= the noise band for reconstruction studies),

    first order, wave:  v = S(t)(u0,u1) - I(P(v^2 + 2 v lin)) - P duh
    first order, heat:  dv/dt + (1-Lap)v = -P(v^2 + 2 v lin) - P wick
    second order, both: RHS = -P(v^2 + 2 v (lin - duh) + duh^2)
                              + 2 P(duh<lo>lin + res + duh<hi>lin)
                              + (1 - P) wick

The (1-P) wick term drives the annulus content of the second-order v that
cancels against duh in the reconstruction u = v + lin - duh; dropping the
projections would leave an O(1)-in-h mismatch with the direct solver.

The direct solver integrates the truncated renormalized equation itself, with
the noise entering through the exact per-step increments of the sampled lin
path, so with shared streams its linear part reproduces lin pathwise.

Steppers: exact free rotation (wave) / semigroup (heat) with forcing weights
that are exact for forcing frozen on the step; an optional midpoint corrector
re-evaluates the forcing at the predicted endpoint and averages.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .noise import ObjectTrajectory, TimeGrid
from .objects import EnhancedDataSet
from .spectral import (
    SpectralField,
    disk_mask,
    lattice_grids,
    multiply_dealiased,
    paraproduct_split,
    project,
    sobolev_norm,
)

__all__ = [
    "WaveState",
    "HeatState",
    "SolveConfig",
    "SolveResult",
    "wave_propagator_step",
    "wave_trig_euler_step",
    "heat_etd1_step",
    "solve_residual",
    "solve_direct_truncated",
    "reconstruct_solution",
    "make_smooth_data",
    "zero_data",
]

TWO_PI = 2.0 * np.pi

_EXPANSIONS = ("first_order", "second_order", "direct")


@dataclass
class WaveState:
    v: SpectralField
    vdot: SpectralField
    time: float


@dataclass
class HeatState:
    v: SpectralField
    time: float


@dataclass(frozen=True)
class SolveConfig:
    flow: str
    expansion: str
    band: int
    h: float
    T: float
    alpha: float
    blowup_guard: float = 1.0e6
    norm_sigma: float = 0.5
    stepper: str = "euler"  # euler | midpoint

    def __post_init__(self):
        if self.flow not in ("wave", "heat"):
            raise ValueError(f"flow must be wave or heat, got {self.flow!r}")
        if self.expansion not in _EXPANSIONS:
            raise ValueError(f"expansion must be one of {_EXPANSIONS}")
        if self.stepper not in ("euler", "midpoint"):
            raise ValueError("stepper must be euler or midpoint")
        if self.h <= 0 or self.T <= 0 or self.band < 1:
            raise ValueError("need h > 0, T > 0, band >= 1")
        if self.flow == "wave" and self.h * np.sqrt(1.0 + self.band**2) > 0.5:
            raise ValueError(
                f"wave resolution: h*<band> = {self.h * np.sqrt(1 + self.band ** 2):.3f} > 0.5"
            )

    @property
    def steps(self):
        M = int(round(self.T / self.h))
        if abs(M * self.h - self.T) > 1e-9:
            raise ValueError(f"T={self.T} is not a multiple of h={self.h}")
        return M


@dataclass
class SolveResult:
    config: SolveConfig
    grid: TimeGrid
    fields: list
    vel: list | None = None
    blowup: bool = False
    blowup_time: float | None = None


def _brackets(band):
    nx, ny = lattice_grids(band)
    return np.sqrt(1.0 + nx * nx + ny * ny)


def wave_propagator_step(state, h):
    """Exact free Klein-Gordon rotation of (v, vdot)."""
    br = _brackets(state.v.band)
    c, s = np.cos(h * br), np.sin(h * br)
    v = c * state.v.coeffs + (s / br) * state.vdot.coeffs
    vdot = -br * s * state.v.coeffs + c * state.vdot.coeffs
    return WaveState(
        SpectralField(state.v.band, v),
        SpectralField(state.v.band, vdot),
        state.time + h,
    )


def wave_trig_euler_step(state, forcing_at_t, h):
    """Rotation plus Duhamel weights exact for forcing frozen on the step."""
    out = wave_propagator_step(state, h)
    F = _to_band(forcing_at_t, state.v.band).coeffs
    br = _brackets(state.v.band)
    out.v.coeffs += (1.0 - np.cos(h * br)) / br**2 * F
    out.vdot.coeffs += np.sin(h * br) / br * F
    return out


def heat_etd1_step(state, forcing_at_t, h):
    """Exponential Euler: exact semigroup, forcing frozen on the step."""
    brsq = 1.0 + sum(g * g for g in lattice_grids(state.v.band))
    E = np.exp(-h * brsq)
    F = _to_band(forcing_at_t, state.v.band).coeffs
    v = E * state.v.coeffs + (1.0 - E) / brsq * F
    return HeatState(SpectralField(state.v.band, v), state.time + h)


def _to_band(f, band):
    if f.band == band:
        return f
    if f.band > band:
        return project(f, band)
    off = band - f.band
    coeffs = np.zeros((2 * band + 1, 2 * band + 1), dtype=complex)
    coeffs[off : off + 2 * f.band + 1, off : off + 2 * f.band + 1] = f.coeffs
    return SpectralField(band, coeffs)


def _check_data_grid(config, data):
    grid = data.lin.grid
    if grid.t0 != 0.0:
        raise ValueError("solver data must live on a grid starting at t = 0")
    if not np.isclose(grid.h, config.h):
        raise ValueError(f"data grid step {grid.h} != solver step {config.h}")
    if grid.M < config.steps + 1:
        raise ValueError("data grid does not cover the solve horizon")
    if config.band != data.lin.N:
        raise ValueError(
            f"residual solves run at the noise band: config.band={config.band}, "
            f"lin.N={data.lin.N}"
        )


def _residual_rhs(config, data, B):
    """Forcing assembler F(v_field, k) for the configured expansion."""
    lin, duh, wick, res = data.lin, data.duh, data.wick, data.res

    if config.expansion == "first_order":
        if config.flow == "wave":
            # handled via the shifted variable y = v + P duh; forcing has no
            # explicit wick term (it is carried by the precomputed duh)
            def rhs(v, k):
                vl = multiply_dealiased(v, lin.fields[k])
                return project(multiply_dealiased(v, v) + 2.0 * vl, B) * (-1.0)

        else:

            def rhs(v, k):
                vl = multiply_dealiased(v, lin.fields[k])
                quad = project(multiply_dealiased(v, v) + 2.0 * vl, B)
                return (quad + project(wick.fields[k], B)) * (-1.0)

        return rhs

    if res is None:
        raise ValueError("second-order expansion needs the res trajectory")

    def rhs(v, k):
        l_k, d_k = lin.fields[k], duh.fields[k]
        vsq = multiply_dealiased(v, v)
        vld = multiply_dealiased(v, l_k - d_k)
        dsq = multiply_dealiased(d_k, d_k)
        lo, _, hi = paraproduct_split(d_k, l_k)
        w_k = wick.fields[k]
        out = project(vsq + 2.0 * vld + dsq, B) * (-1.0)
        out = out + project(lo + res.fields[k] + hi, B) * 2.0
        return out + (w_k - project(w_k, B))

    return rhs


def solve_residual(config, data, u0, u1=None):
    """Integrate the residual equation for the configured expansion.

    u0 (and u1 for wave) are the physical initial data; the residual initial
    state is derived internally (wave: v0 = u0 since lin(0) = duh(0) = 0;
    heat: v0 = u0 - lin(0) + duh(0) per the expansion order).
    """
    if config.expansion == "direct":
        raise ValueError("use solve_direct_truncated for the direct flow")
    _check_data_grid(config, data)
    if data.wick is None and not (
        config.expansion == "first_order" and config.flow == "wave"
    ):
        raise ValueError("residual solve needs the wick trajectory in the data set")
    B = config.band
    second = config.expansion == "second_order"
    Bv = data.wick.fields[0].band if second else B
    rhs = _residual_rhs(config, data, B)
    steps = config.steps

    if config.flow == "wave":
        if u1 is None:
            raise ValueError("wave residual solve needs (u0, u1)")
        duh_at = (
            [project(f, B) for f in data.duh.fields]
            if config.expansion == "first_order"
            else None
        )

        # first order steps the shifted variable y = v + P duh (y(0) = v(0)
        # since duh(0) = 0); second order steps v itself
        state = WaveState(_to_band(u0, Bv), _to_band(u1, Bv), 0.0)

        def v_of(state, k):
            return state.v - duh_at[k] if duh_at is not None else state.v

        fields = [v_of(state, 0)]
        blowup, t_hit = False, None
        for k in range(steps):
            F = rhs(v_of(state, k), k)
            if config.stepper == "midpoint":
                pred = wave_trig_euler_step(state, F, config.h)
                F2 = rhs(v_of(pred, k + 1), k + 1)
                F = (F + F2) * 0.5
            state = wave_trig_euler_step(state, F, config.h)
            vk = v_of(state, k + 1)
            fields.append(vk)
            if sobolev_norm(vk, config.norm_sigma) > config.blowup_guard:
                blowup, t_hit = True, state.time
                break
        grid = TimeGrid(0.0, config.h, len(fields))
        return SolveResult(config, grid, fields, None, blowup, t_hit)

    # heat
    v0 = _to_band(u0, Bv) - project(data.lin.fields[0], Bv)
    if second:
        v0 = v0 + data.duh.fields[0]
    state = HeatState(_to_band(v0, Bv), 0.0)
    fields = [state.v.copy()]
    blowup, t_hit = False, None
    for k in range(steps):
        F = rhs(state.v, k)
        if config.stepper == "midpoint":
            pred = heat_etd1_step(state, F, config.h)
            F2 = rhs(pred.v, k + 1)
            F = (F + F2) * 0.5
        state = heat_etd1_step(state, F, config.h)
        fields.append(state.v.copy())
        if sobolev_norm(state.v, config.norm_sigma) > config.blowup_guard:
            blowup, t_hit = True, state.time
            break
    grid = TimeGrid(0.0, config.h, len(fields))
    return SolveResult(config, grid, fields, None, blowup, t_hit)


def solve_direct_truncated(config, lin, counterterm, u0, u1=None, nonlinear=True):
    """Integrate the band-N renormalized equation with exact noise increments.

    lin is the sampled stochastic convolution on the solver grid; the per-step
    noise increment is recovered as lin_{k+1} - (free step of lin_k), which is
    exact in law and ties the solution pathwise to the enhanced data set.
    With nonlinear=False the solve drops u^2 - counterterm entirely and must
    reproduce lin itself.
    """
    if config.expansion != "direct":
        raise ValueError("config.expansion must be 'direct'")
    if config.band != lin.N:
        raise ValueError(
            f"direct solve runs at the noise band: config.band={config.band}, lin.N={lin.N}"
        )
    grid = lin.grid
    if grid.t0 != 0.0:
        raise ValueError("direct solve expects a grid starting at t = 0")
    if not np.isclose(grid.h, config.h) or grid.M < config.steps + 1:
        raise ValueError("lin path does not cover the solver grid")
    B = config.band
    times = grid.times()
    cts = np.broadcast_to(
        np.asarray([counterterm(t) for t in times], dtype=float)
        if callable(counterterm)
        else np.asarray(counterterm, dtype=float),
        times.shape,
    )
    steps = config.steps

    def forcing(u_field, k):
        if not nonlinear:
            return SpectralField(B)
        F = project(multiply_dealiased(u_field, u_field), B) * (-1.0)
        F.coeffs[B, B] += cts[k] * TWO_PI
        return F

    if config.flow == "wave":
        if u1 is None:
            raise ValueError("wave direct solve needs (u0, u1)")
        if lin.vel is None:
            raise ValueError("wave direct solve needs the lin velocity fields")
        br = _brackets(B)
        c, s = np.cos(config.h * br), np.sin(config.h * br)
        state = WaveState(_to_band(u0, B), _to_band(u1, B), 0.0)
        fields, vels = [state.v.copy()], [state.vdot.copy()]
        blowup, t_hit = False, None
        for k in range(steps):
            la, lv = lin.fields[k].coeffs, lin.vel[k].coeffs
            eta_v = lin.fields[k + 1].coeffs - (c * la + (s / br) * lv)
            eta_w = lin.vel[k + 1].coeffs - (-br * s * la + c * lv)
            state = wave_trig_euler_step(state, forcing(state.v, k), config.h)
            state.v.coeffs += eta_v
            state.vdot.coeffs += eta_w
            fields.append(state.v.copy())
            vels.append(state.vdot.copy())
            if sobolev_norm(state.v, config.norm_sigma) > config.blowup_guard:
                blowup, t_hit = True, state.time
                break
        out_grid = TimeGrid(0.0, config.h, len(fields))
        return SolveResult(config, out_grid, fields, vels, blowup, t_hit)

    brsq = 1.0 + sum(g * g for g in lattice_grids(B))
    E = np.exp(-config.h * brsq)
    state = HeatState(_to_band(u0, B), 0.0)
    fields = [state.v.copy()]
    blowup, t_hit = False, None
    for k in range(steps):
        zeta = lin.fields[k + 1].coeffs - E * lin.fields[k].coeffs
        state = heat_etd1_step(state, forcing(state.v, k), config.h)
        state.v.coeffs += zeta
        fields.append(state.v.copy())
        if sobolev_norm(state.v, config.norm_sigma) > config.blowup_guard:
            blowup, t_hit = True, state.time
            break
    out_grid = TimeGrid(0.0, config.h, len(fields))
    return SolveResult(config, out_grid, fields, None, blowup, t_hit)


def reconstruct_solution(result, data):
    """u from the residual trajectory: v + lin (first), v + lin - duh (second)."""
    second = result.config.expansion == "second_order"
    out = []
    for k, v in enumerate(result.fields):
        u = v + data.lin.fields[k]
        if second:
            u = u - data.duh.fields[k]
        out.append(u)
    return out


def make_smooth_data(band, amplitude=0.5, decay=4.0, seed=1234):
    """Deterministic smooth Hermitian field pair (u0, u1) for solver tests."""
    rng = np.random.default_rng(seed)
    fields = []
    for _ in range(2):
        c = rng.standard_normal((2 * band + 1, 2 * band + 1)) + 1j * rng.standard_normal(
            (2 * band + 1, 2 * band + 1)
        )
        c = 0.5 * (c + np.conj(c[::-1, ::-1]))
        c *= amplitude * _brackets(band) ** (-decay)
        c[~disk_mask(band)] = 0.0
        fields.append(SpectralField(band, c))
    return fields[0], fields[1]


def zero_data(flow, alpha, N, grid, track_band=None):
    """EnhancedDataSet of identically zero trajectories (deterministic limit)."""
    tb = 2 * N if track_band is None else int(track_band)

    def traj(kind, band, with_vel=False):
        fields = [SpectralField(band) for _ in range(grid.M)]
        vel = [SpectralField(band) for _ in range(grid.M)] if with_vel else None
        return ObjectTrajectory(kind, flow, alpha, N, grid, fields, vel)

    return EnhancedDataSet(
        lin=traj("lin", N, with_vel=(flow == "wave")),
        duh=traj("duh", tb),
        res=traj("res", tb + N),
        wick=traj("wick", 2 * N),
    )
