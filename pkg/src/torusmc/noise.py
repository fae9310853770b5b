"""Exact-in-distribution sampling of the truncated stochastic convolution <1>_N.

Each Fourier mode of <1>_N is a Gaussian Markov process (wave: value and
velocity of a randomly forced oscillator; heat: an Ornstein-Uhlenbeck
process), so it can be stepped exactly on any time grid: a deterministic
transition plus a Gaussian increment whose covariance comes from the Ito
isometry.  No Euler-Maruyama bias enters any moment experiment.

Mode conventions: the driving noises beta_n satisfy beta_{-n} = conj(beta_n)
with Var(beta_n(t)) = t, so only the half-lattice (n "positive" in the
lexicographic order, plus n = 0) is sampled; n = 0 carries a real Gaussian,
every other mode a circularly-symmetric complex one (variance split equally
between real and imaginary parts).

Reproducibility: every (seed, replica, mode, kind) owns a counter-based
stream (Philox keyed through SeedSequence spawn keys), and each mode draws
its variates in one fixed-layout call:

    wave:  standard_normal((M-1, 4))   columns (re1, re2, im1, im2)
    heat:  standard_normal(2) for the stationary init, then (M-1, 2)

(n = 0 consumes the same draws and uses the first column(s) only).  Because
layouts never depend on the band N, truncations of one path at different N
agree mode-for-mode, and refining the grid then subsampling reproduces the
coarse path in law exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spectral import SpectralField, jbracket

__all__ = [
    "TimeGrid",
    "NoiseSpec",
    "WaveModeState",
    "HeatModeState",
    "ObjectTrajectory",
    "derive_mode_stream",
    "half_lattice_points",
    "wave_mode_step",
    "heat_mode_step",
    "heat_stationary_init",
    "sample_lin_path",
    "subsample_trajectory",
]

_KIND_CODE = {"wave": 0, "heat": 1}


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_k = t0 + k*h, k = 0..M-1."""

    t0: float
    h: float
    M: int

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("step h must be > 0")
        if self.M < 1:
            raise ValueError("need at least one grid time")

    def times(self):
        return self.t0 + self.h * np.arange(self.M)


@dataclass(frozen=True)
class NoiseSpec:
    alpha: float
    N: int
    kind: str  # wave | heat
    seed: int
    replica: int = 0

    def __post_init__(self):
        if self.kind not in _KIND_CODE:
            raise ValueError(f"kind must be wave or heat, got {self.kind!r}")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")


@dataclass
class WaveModeState:
    a: complex
    adot: complex


@dataclass
class HeatModeState:
    a: complex


@dataclass
class ObjectTrajectory:
    """Time series of one stochastic object's spectral fields.

    vel carries the time derivative of the lin object in the wave flow (used
    by the direct solver to recover per-step noise increments); None for all
    other kinds.
    """

    kind: str  # lin | wick | duh | res
    flow: str  # wave | heat
    alpha: float
    N: int
    grid: TimeGrid
    fields: list
    vel: list | None = None

    def band(self):
        return self.fields[0].band


def _zigzag(v):
    return 2 * v if v >= 0 else -2 * v - 1


def derive_mode_stream(seed, replica, n, kind):
    """Independent, reproducible stream for one (replica, mode) pair."""
    nx, ny = int(n[0]), int(n[1])
    ss = np.random.SeedSequence(
        entropy=int(seed),
        spawn_key=(_KIND_CODE[kind], int(replica), _zigzag(nx), _zigzag(ny)),
    )
    return np.random.Generator(np.random.Philox(ss))


def half_lattice_points(N):
    """Lexicographic half-lattice: nx > 0, or nx = 0 and ny > 0; |n| <= N.

    Returns (nx, ny) int arrays; the origin is excluded (it has its own real
    mode).  Together with their negations and 0 these cover the band.
    """
    r = np.arange(-N, N + 1)
    gx, gy = np.meshgrid(r, r, indexing="ij")
    keep = (gx * gx + gy * gy <= N * N) & ((gx > 0) | ((gx == 0) & (gy > 0)))
    return gx[keep].astype(int), gy[keep].astype(int)


# ------------------------------------------------------------- wave stepping

def _wave_rotation(br, h):
    """Free Klein-Gordon rotation coefficients for (a, adot)."""
    c = np.cos(h * br)
    s = np.sin(h * br)
    return c, s / br, -br * s, c


def _u_minus_sin(u):
    """u - sin(u), series-protected against cancellation for small u."""
    u = np.asarray(u, dtype=float)
    out = u - np.sin(u)
    small = np.abs(u) < 1e-3
    if np.any(small):
        us = np.where(small, u, 0.0)
        series = us**3 / 6.0 - us**5 / 120.0 + us**7 / 5040.0
        out = np.where(small, series, out)
    return out


def _wave_increment_chol(br, h, alpha):
    """Cholesky factor of the Ito increment covariance Q(h) per mode.

    Q entries (re-derived from the Ito isometry for the kernel
    sin((h-s)<n>)/<n>^{1-alpha} and its derivative):
        q11 = <n>^{2a-3} (u - sin u)/4,  u = 2 h <n>
        q22 = <n>^{2a-1} (u + sin u)/4
        q12 = <n>^{2a-2} sin^2(h <n>)/2
    Returns (l11, l21, l22) with Q = L L^T.
    """
    br = np.asarray(br, dtype=float)
    u = 2.0 * h * br
    q11 = br ** (2.0 * alpha - 3.0) * _u_minus_sin(u) / 4.0
    q22 = br ** (2.0 * alpha - 1.0) * (u + np.sin(u)) / 4.0
    q12 = br ** (2.0 * alpha - 2.0) * np.sin(h * br) ** 2 / 2.0
    if np.any(q11 < 0) or np.any(q22 < 0):
        raise FloatingPointError("negative increment variance: q-matrix transcription bug")
    l11 = np.sqrt(q11)
    with np.errstate(divide="ignore", invalid="ignore"):
        l21 = np.where(l11 > 0, q12 / np.where(l11 > 0, l11, 1.0), 0.0)
    rem = q22 - l21**2
    if np.any(rem < -1e-12 * np.maximum(q22, 1e-300)):
        raise FloatingPointError("increment covariance not PSD: q-matrix transcription bug")
    l22 = np.sqrt(np.maximum(rem, 0.0))
    return l11, l21, l22


def wave_mode_step(state, n, alpha, h, stream):
    """Exact transition of one wave mode over a step of length h."""
    if h == 0.0:
        return WaveModeState(state.a, state.adot)
    br = float(jbracket(n))
    c, sdivb, msb, _ = _wave_rotation(br, h)
    a = c * state.a + sdivb * state.adot
    adot = msb * state.a + c * state.adot
    l11, l21, l22 = _wave_increment_chol(br, h, alpha)
    z = stream.standard_normal(4)
    if n[0] == 0 and n[1] == 0:
        e1 = l11 * z[0]
        e2 = l21 * z[0] + l22 * z[1]
        return WaveModeState(a.real + e1, adot.real + e2)
    rt = 1.0 / np.sqrt(2.0)
    e1 = rt * (l11 * z[0] + 1j * l11 * z[2])
    e2 = rt * (l21 * z[0] + l22 * z[1] + 1j * (l21 * z[2] + l22 * z[3]))
    return WaveModeState(a + e1, adot + e2)


# ------------------------------------------------------------- heat stepping

def heat_mode_step(state, n, alpha, h, stream):
    """Exact Ornstein-Uhlenbeck transition of one heat mode."""
    br = float(jbracket(n))
    decay = np.exp(-h * br * br)
    var = br ** (2.0 * alpha - 2.0) * (1.0 - decay * decay) / 2.0
    z = stream.standard_normal(2)
    if n[0] == 0 and n[1] == 0:
        return HeatModeState(decay * state.a.real + np.sqrt(var) * z[0])
    zeta = np.sqrt(var / 2.0) * (z[0] + 1j * z[1])
    return HeatModeState(decay * state.a + zeta)


def heat_stationary_init(n, alpha, stream):
    """Draw a heat mode from its invariant law (variance <n>^{2a-2}/2)."""
    br = float(jbracket(n))
    var = br ** (2.0 * alpha - 2.0) / 2.0
    z = stream.standard_normal(2)
    if n[0] == 0 and n[1] == 0:
        return HeatModeState(np.sqrt(var) * z[0])
    return HeatModeState(np.sqrt(var / 2.0) * (z[0] + 1j * z[1]))


# ----------------------------------------------------------- path assembly

def _gather_draws(spec, nmodes_shape_cols, M, hx, hy):
    """One fixed-layout draw per mode: origin first, then the half-lattice."""
    rows = M - 1
    cols = nmodes_shape_cols
    n_half = hx.size
    draws = np.empty((n_half + 1, max(rows, 1), cols))
    init = np.empty((n_half + 1, 2))
    need_init = spec.kind == "heat"
    for i in range(n_half + 1):
        n = (0, 0) if i == 0 else (int(hx[i - 1]), int(hy[i - 1]))
        g = derive_mode_stream(spec.seed, spec.replica, n, spec.kind)
        if need_init:
            init[i] = g.standard_normal(2)
        if rows > 0:
            draws[i] = g.standard_normal((rows, cols))
    return draws, init


def _fields_from_modes(path, N, hx, hy, M):
    """Assemble Hermitian coefficient arrays from half-lattice mode paths.

    path has shape (n_half+1, M) complex with row 0 the (real) origin mode.
    """
    size = 2 * N + 1
    coeffs = np.zeros((M, size, size), dtype=complex)
    coeffs[:, N, N] = path[0].real
    ix, iy = N + hx, N + hy
    coeffs[:, ix, iy] = path[1:].T
    coeffs[:, 2 * N - ix, 2 * N - iy] = np.conj(path[1:].T)
    return [SpectralField(N, coeffs[k]) for k in range(M)]


def sample_lin_path(spec, grid):
    """Sample one realization of <1>_N on the grid, exactly in distribution.

    Wave grids must start at t0 = 0 (the object vanishes there, with zero
    velocity); heat grids may start anywhere, the initial fields being drawn
    from the stationary law.  Wave trajectories carry velocity fields.
    """
    N, alpha = spec.N, spec.alpha
    M, h = grid.M, grid.h
    hx, hy = half_lattice_points(N)
    brs = np.concatenate(([1.0], np.sqrt(1.0 + hx.astype(float) ** 2 + hy**2)))
    n_half = hx.size

    if spec.kind == "wave":
        if grid.t0 != 0.0:
            raise ValueError("wave grids must start at t0 = 0")
        draws, _ = _gather_draws(spec, 4, M, hx, hy)
        c, sdivb, msb, _ = _wave_rotation(brs, h)
        l11, l21, l22 = _wave_increment_chol(brs, h, alpha)
        rt = np.full(n_half + 1, 1.0 / np.sqrt(2.0))
        rt[0] = 1.0  # origin mode is real, full covariance on one component
        a = np.zeros(n_half + 1, dtype=complex)
        adot = np.zeros(n_half + 1, dtype=complex)
        apath = np.empty((n_half + 1, M), dtype=complex)
        vpath = np.empty((n_half + 1, M), dtype=complex)
        apath[:, 0] = a
        vpath[:, 0] = adot
        for k in range(M - 1):
            z = draws[:, k, :]
            e1 = rt * (l11 * z[:, 0] + 1j * l11 * z[:, 2])
            e2 = rt * (l21 * z[:, 0] + l22 * z[:, 1] + 1j * (l21 * z[:, 2] + l22 * z[:, 3]))
            e1[0] = l11[0] * z[0, 0]
            e2[0] = l21[0] * z[0, 0] + l22[0] * z[0, 1]
            a, adot = c * a + sdivb * adot + e1, msb * a + c * adot + e2
            apath[:, k + 1] = a
            vpath[:, k + 1] = adot
        fields = _fields_from_modes(apath, N, hx, hy, M)
        vel = _fields_from_modes(vpath, N, hx, hy, M)
        return ObjectTrajectory("lin", "wave", alpha, N, grid, fields, vel)

    # heat
    draws, init = _gather_draws(spec, 2, M, hx, hy)
    decay = np.exp(-h * brs * brs)
    step_var = brs ** (2.0 * alpha - 2.0) * (1.0 - decay**2) / 2.0
    stat_var = brs ** (2.0 * alpha - 2.0) / 2.0
    a = np.sqrt(stat_var / 2.0) * (init[:, 0] + 1j * init[:, 1])
    a[0] = np.sqrt(stat_var[0]) * init[0, 0]
    apath = np.empty((n_half + 1, M), dtype=complex)
    apath[:, 0] = a
    for k in range(M - 1):
        z = draws[:, k, :]
        zeta = np.sqrt(step_var / 2.0) * (z[:, 0] + 1j * z[:, 1])
        zeta[0] = np.sqrt(step_var[0]) * z[0, 0]
        a = decay * a + zeta
        apath[:, k + 1] = a
    fields = _fields_from_modes(apath, N, hx, hy, M)
    return ObjectTrajectory("lin", "heat", alpha, N, grid, fields)


def subsample_trajectory(traj, stride):
    """Every stride-th field of a trajectory, as a trajectory on the coarse grid.

    Exactness of the per-mode Markov transitions makes this the coarse-grid
    path of the same realization (used to couple solver runs across h).
    """
    stride = int(stride)
    if (traj.grid.M - 1) % stride != 0:
        raise ValueError("stride must divide the step count")
    coarse = TimeGrid(traj.grid.t0, traj.grid.h * stride, (traj.grid.M - 1) // stride + 1)
    fields = traj.fields[::stride]
    vel = traj.vel[::stride] if traj.vel is not None else None
    return ObjectTrajectory(traj.kind, traj.flow, traj.alpha, traj.N, coarse, fields, vel)
