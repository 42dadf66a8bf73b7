"""Ground-truth data: 1-D viscous Burgers and 2-D/3-D Gray-Scott reaction-diffusion.

Both use explicit Euler in time and second-order central differences in
space on periodic grids, i.e. the same stencils the dictionary uses.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from ._rng import make_rng
from .field import Field

__all__ = [
    "SimulationError",
    "BurgersConfig",
    "GrayScottConfig",
    "burgers_grid",
    "simulate_burgers",
    "gray_scott_initial_condition",
    "simulate_gray_scott",
]


class SimulationError(RuntimeError):
    def __init__(self, model: str, step: int):
        super().__init__(f"{model} simulation blew up at step {step}")
        self.step = step


@dataclass(frozen=True)
class BurgersConfig:
    """``u_t = advection * u u_x + viscosity * u_xx`` on a periodic interval.

    ``nt`` counts time points including t = 0, so ``nt - 1`` Euler steps
    are taken; every ``save_stride``-th state is kept.
    """

    x_min: float = -8.0
    x_max: float = 8.0
    nx: int = 256
    nt: int = 1000
    dt: float = 0.01
    viscosity: float = 0.1
    advection: float = -1.0
    save_stride: int = 1

    def __post_init__(self):
        if self.nx < 3 or self.nt < 2 or self.save_stride < 1:
            raise ValueError("need nx >= 3, nt >= 2, save_stride >= 1")
        r = self.dt * self.viscosity / self.dx**2
        if not r < 0.5:
            raise ValueError(f"unstable: dt*nu/dx^2 = {r:.3f} >= 0.5")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.nx


def burgers_grid(config: BurgersConfig) -> np.ndarray:
    return config.x_min + config.dx * np.arange(config.nx)


def simulate_burgers(config: BurgersConfig = BurgersConfig()) -> Field:
    x = burgers_grid(config)
    dx, dt = config.dx, config.dt
    u = np.exp(-((x + 2.0) ** 2))
    steps = config.nt - 1
    n_saved = steps // config.save_stride + 1
    out = np.empty((config.nx, n_saved))
    out[:, 0] = u
    # blow-up is detected below, so silence the overflow warnings it triggers
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(1, steps + 1):
            up = np.roll(u, -1)
            um = np.roll(u, 1)
            ux = (up - um) / (2.0 * dx)
            uxx = (up - 2.0 * u + um) / dx**2
            u = u + dt * (config.advection * u * ux + config.viscosity * uxx)
            if not np.all(np.isfinite(u)):
                raise SimulationError("burgers", n)
            if n % config.save_stride == 0:
                out[:, n // config.save_stride] = u
    return Field("u", out, (dx, dt * config.save_stride))


@dataclass(frozen=True)
class GrayScottConfig:
    """Gray-Scott parameters and grid.

    The default grid is 64 cells per axis at the reference spacing, i.e. a
    smaller box than the full 128^3 (set ``n=128``) run.
    """

    n: int = 64
    dims: int = 3
    dx: float = 0.01953
    dt: float = 0.0005
    T: float = 5.0
    f: float = 0.014
    k: float = 0.053
    Du: float = 2.0e-5
    Dv: float = 1.0e-5
    save_stride: int = 100
    seed: int = 0
    perturbation: float = 0.1
    jitter: float = 0.01

    def __post_init__(self):
        if self.dims not in (2, 3):
            raise ValueError("dims must be 2 or 3")
        if self.n < 3 or self.save_stride < 1:
            raise ValueError("need n >= 3 and save_stride >= 1")
        c = self.dt * max(self.Du, self.Dv) * 2 * self.dims / self.dx**2
        if not c < 1:
            raise ValueError(f"unstable diffusion number {c:.3f} >= 1")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dims

    @property
    def side(self) -> float:
        return self.n * self.dx


def gray_scott_initial_condition(config: GrayScottConfig) -> tuple:
    """``u = 1, v = 0`` with a centred cube (edge ``perturbation`` of the box)
    set to ``u = 0.5, v = 0.25``, plus seeded uniform jitter of amplitude
    ``jitter`` (subtracted from ``u``, added to ``v``)."""
    shape = config.shape
    u = np.ones(shape)
    v = np.zeros(shape)
    w = max(1, int(round(config.perturbation * config.n)))
    lo = (config.n - w) // 2
    box = (slice(lo, lo + w),) * config.dims
    u[box] = 0.5
    v[box] = 0.25
    rng = make_rng(config.seed, "gray_scott_ic")
    u -= config.jitter * rng.random(shape)
    v += config.jitter * rng.random(shape)
    return u, v


@njit(cache=True, nogil=True)
def _gs_step3(u, v, un, vn, dt, idx2, Du, Dv, f, k):
    n0, n1, n2 = u.shape
    for i in range(n0):
        ip = (i + 1) % n0
        im = (i - 1) % n0
        for j in range(n1):
            jp = (j + 1) % n1
            jm = (j - 1) % n1
            for l in range(n2):
                lp = (l + 1) % n2
                lm = (l - 1) % n2
                uc = u[i, j, l]
                vc = v[i, j, l]
                lap_u = (
                    u[ip, j, l] + u[im, j, l] - 2.0 * uc
                    + u[i, jp, l] + u[i, jm, l] - 2.0 * uc
                    + u[i, j, lp] + u[i, j, lm] - 2.0 * uc
                ) * idx2
                lap_v = (
                    v[ip, j, l] + v[im, j, l] - 2.0 * vc
                    + v[i, jp, l] + v[i, jm, l] - 2.0 * vc
                    + v[i, j, lp] + v[i, j, lm] - 2.0 * vc
                ) * idx2
                uvv = uc * vc * vc
                un[i, j, l] = uc + dt * (Du * lap_u - uvv + f * (1.0 - uc))
                vn[i, j, l] = vc + dt * (Dv * lap_v + uvv - (f + k) * vc)


@njit(cache=True, nogil=True)
def _gs_step2(u, v, un, vn, dt, idx2, Du, Dv, f, k):
    n0, n1 = u.shape
    for i in range(n0):
        ip = (i + 1) % n0
        im = (i - 1) % n0
        for j in range(n1):
            jp = (j + 1) % n1
            jm = (j - 1) % n1
            uc = u[i, j]
            vc = v[i, j]
            lap_u = (u[ip, j] + u[im, j] - 2.0 * uc + u[i, jp] + u[i, jm] - 2.0 * uc) * idx2
            lap_v = (v[ip, j] + v[im, j] - 2.0 * vc + v[i, jp] + v[i, jm] - 2.0 * vc) * idx2
            uvv = uc * vc * vc
            un[i, j] = uc + dt * (Du * lap_u - uvv + f * (1.0 - uc))
            vn[i, j] = vc + dt * (Dv * lap_v + uvv - (f + k) * vc)


def simulate_gray_scott(config: GrayScottConfig = GrayScottConfig(), ic=None) -> tuple:
    """Integrate Gray-Scott; returns ``(u, v)`` fields over the saved slices.

    ``ic`` optionally supplies ``(u0, v0)`` arrays of shape ``config.shape``.
    """
    if ic is None:
        u, v = gray_scott_initial_condition(config)
    else:
        u = np.array(ic[0], dtype=np.float64)
        v = np.array(ic[1], dtype=np.float64)
        if u.shape != config.shape or v.shape != config.shape:
            raise ValueError(f"initial condition must have shape {config.shape}")
    step = _gs_step3 if config.dims == 3 else _gs_step2
    steps = config.steps
    n_saved = steps // config.save_stride + 1
    U = np.empty(config.shape + (n_saved,))
    V = np.empty(config.shape + (n_saved,))
    U[..., 0] = u
    V[..., 0] = v
    un = np.empty_like(u)
    vn = np.empty_like(v)
    idx2 = 1.0 / config.dx**2
    for s in range(1, steps + 1):
        step(u, v, un, vn, config.dt, idx2, config.Du, config.Dv, config.f, config.k)
        u, un = un, u
        v, vn = vn, v
        if s % config.save_stride == 0:
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
                raise SimulationError("gray-scott", s)
            U[..., s // config.save_stride] = u
            V[..., s // config.save_stride] = v
    spacing = (config.dx,) * config.dims + (config.dt * config.save_stride,)
    return Field("u", U, spacing), Field("v", V, spacing)
