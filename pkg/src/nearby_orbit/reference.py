"""
Split-step Fourier reference solver for

    i hbar d/dt psi = ( -hbar^2 / 2m d^2/dx^2 + V(x) ) psi

on a periodic 1D grid, Strang splitting V/2 - K - V/2.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid import GridField


class WrapAroundError(RuntimeError):
    """Probability reached the periodic boundary."""


@dataclass(frozen=True)
class SplitStepConfig:
    """
    Parameters
    ----------
    half_width, count : grid [-L, L) with `count` points (power of two).
    center : grid centre.
    potential : callable V(x).
    snapshot_times : times at which to record the state (in [0, t_final]).
    tail_tol : abort threshold on the edge-region probability.
    """

    half_width: float
    count: int
    hbar: float
    dt: float
    t_final: float
    potential: Callable = field(default=lambda x: 0.0 * x)
    mass: float = 1.0
    center: float = 0.0
    snapshot_times: tuple = ()
    tail_tol: float = 1e-10
    strang: bool = True

    def __post_init__(self):
        if self.count < 2 or self.count & (self.count - 1):
            raise ValueError(f"count must be a power of two, got {self.count}")
        if not (self.hbar > 0 and self.dt > 0 and self.mass > 0 and self.half_width > 0):
            raise ValueError("hbar, dt, mass and half_width must be positive")
        if not self.strang:
            raise NotImplementedError("only Strang splitting is provided")
        if self.max_kinetic_phase() >= np.pi:
            raise ValueError(
                f"kinetic phase per step {self.max_kinetic_phase():.3f} >= pi; reduce dt or count"
            )

    @property
    def spacing(self):
        return 2 * self.half_width / self.count

    def max_kinetic_phase(self):
        kmax = np.pi / self.spacing
        return self.hbar * kmax**2 * self.dt / (2 * self.mass)

    def grid(self):
        return GridField(
            np.zeros(self.count, dtype=complex), (self.center - self.half_width,), (self.spacing,), ("x",)
        )


def auto_config(hbar, potential, t_final, dt=1e-3, half_width=8.0, center=0.0, **kw):
    """
    Smallest power-of-two grid whose momentum cut-off covers |p| <= 2 + 12
    sqrt(hbar), kept under the per-step kinetic phase limit.
    """
    pmax = 2.0 + 12.0 * np.sqrt(hbar)
    count = 256
    while np.pi * hbar / (2 * half_width / count) < pmax:
        count *= 2
    cfg = SplitStepConfig(half_width, count, hbar, dt, t_final, potential, center=center, **kw)
    return cfg


def split_step(psi0, cfg):
    """
    Evolve `psi0` to `cfg.t_final`.

    Returns
    -------
    final : GridField
    snapshots : dict
        Maps each requested snapshot time to the GridField at that time
        (the nearest step; the exact step time is stored in `meta["t"]`).
    """
    grid = cfg.grid()
    if not grid.same_grid(psi0, rtol=1e-9):
        raise ValueError("psi0 must live on the configuration grid")
    if psi0.edge_mass() > 1e-12:
        raise WrapAroundError(f"initial state touches the boundary (edge mass {psi0.edge_mass():.2e})")
    x = grid.coords(0)
    k = 2 * np.pi * np.fft.fftfreq(cfg.count, d=cfg.spacing)
    nsteps = int(np.ceil(abs(cfg.t_final) / cfg.dt - 1e-9)) if cfg.t_final else 0
    h = cfg.t_final / nsteps if nsteps else 0.0
    half_v = np.exp(-0.5j * cfg.potential(x) * h / cfg.hbar)
    kin = np.exp(-0.5j * cfg.hbar * k**2 * h / cfg.mass)
    wanted = {int(round(t / h)) if h else 0: t for t in cfg.snapshot_times}
    snaps = {}
    psi = psi0.values.copy()
    if 0 in wanted:
        snaps[wanted[0]] = psi0.with_values(psi, t=0.0)
    for step in range(1, nsteps + 1):
        psi = half_v * np.fft.ifft(kin * np.fft.fft(half_v * psi))
        if step % 64 == 0:
            tail = psi0.with_values(psi).edge_mass()
            if tail > cfg.tail_tol:
                raise WrapAroundError(f"edge mass {tail:.2e} at t = {step * h:.4g}")
        if step in wanted:
            snap = psi0.with_values(psi, t=step * h)
            tail = snap.edge_mass()
            if tail > cfg.tail_tol:
                raise WrapAroundError(f"edge mass {tail:.2e} at t = {step * h:.4g}")
            snaps[wanted[step]] = snap
    final = psi0.with_values(psi, t=nsteps * h)
    if final.edge_mass() > cfg.tail_tol:
        raise WrapAroundError(f"edge mass {final.edge_mass():.2e} at t = {nsteps * h:.4g}")
    return final, snaps
