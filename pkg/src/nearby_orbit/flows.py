"""
Classical side of the nearby-orbit method: Hamiltonian trajectories, the
linearised flow S_t(z0) = D f_t(z0), and the action phase

    gamma(z0, t) = int_0^t ( sigma(z, zdot) / 2 - H(z, t') ) dt'.

All callables are vectorised: phase-space points have shape (..., 2n).
"""

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_simpson

from .symplectic import J_matrix, reproject_symplectic, symplectic_form

logger = logging.getLogger(__name__)

REPROJECT_TOL = 1e-8


class DivergedError(ArithmeticError):
    """Non-finite state encountered while integrating."""

    def __init__(self, message, t_last):
        super().__init__(message)
        self.t_last = t_last


@dataclass(frozen=True)
class HamiltonianModel:
    """
    Hamiltonian H(z, t) with its gradient and (optionally) Hessian.

    Without an explicit Hessian, central differences of the gradient are
    used. For kinetic-plus-potential models, `potential` and `mass` let the
    reference grid solver run the same physics.
    """

    name: str
    n: int
    value: Callable
    gradient: Callable
    hessian: Optional[Callable] = None
    potential: Optional[Callable] = None
    mass: float = 1.0
    params: dict = field(default_factory=dict)
    validate: bool = True

    def __post_init__(self):
        if self.validate:
            self.check(np.random.default_rng(7))

    def check(self, rng, probes=5):
        """Compare the gradient with central differences of the value."""
        z = rng.normal(size=(probes, 2 * self.n))
        g = self.gradient(z, 0.0)
        h = 1e-6
        fd = np.empty_like(z)
        for k in range(2 * self.n):
            e = np.zeros(2 * self.n)
            e[k] = h
            fd[:, k] = (self.value(z + e, 0.0) - self.value(z - e, 0.0)) / (2 * h)
        err = np.max(np.abs(fd - g) / (1.0 + np.abs(g)))
        if err > 1e-5:
            raise ValueError(f"{self.name}: gradient disagrees with finite differences ({err:.2e})")
        H2 = self.hess(z, 0.0)
        if np.max(np.abs(H2 - np.swapaxes(H2, -1, -2))) > 1e-8:
            raise ValueError(f"{self.name}: Hessian is not symmetric")

    def hess(self, z, t):
        if self.hessian is not None:
            return self.hessian(z, t)
        z = np.asarray(z, dtype=float)
        out = np.empty(z.shape + (2 * self.n,))
        for k in range(2 * self.n):
            step = 1e-5 * np.maximum(1.0, np.abs(z[..., k]))
            e = np.zeros(2 * self.n)
            e[k] = 1.0
            dz = step[..., None] * e
            out[..., :, k] = (self.gradient(z + dz, t) - self.gradient(z - dz, t)) / (2 * step[..., None])
        return 0.5 * (out + np.swapaxes(out, -1, -2))

    def vector_field(self, z, t):
        return self.gradient(z, t) @ J_matrix(self.n).T


def separable(name, v, dv, d2v, n=1, mass=1.0, **params):
    """H = |p|^2 / 2m + sum_i v(x_i)."""

    def value(z, t):
        x, p = z[..., :n], z[..., n:]
        return np.sum(p**2, axis=-1) / (2 * mass) + np.sum(v(x), axis=-1)

    def gradient(z, t):
        x, p = z[..., :n], z[..., n:]
        return np.concatenate([dv(x), p / mass], axis=-1)

    def hessian(z, t):
        x = z[..., :n]
        out = np.zeros(z.shape + (2 * n,))
        idx = np.arange(n)
        out[..., idx, idx] = d2v(x)
        out[..., n + idx, n + idx] = 1.0 / mass
        return out

    def potential(x):
        return v(np.asarray(x, dtype=float))

    return HamiltonianModel(name, n, value, gradient, hessian, potential, mass, dict(params))


def harmonic(omega=1.0, n=1):
    w2 = omega**2
    return separable(
        "harmonic", lambda x: 0.5 * w2 * x**2, lambda x: w2 * x, lambda x: w2 + 0 * x, n=n, omega=omega
    )


def free_particle(n=1):
    return separable("free", lambda x: 0 * x, lambda x: 0 * x, lambda x: 0 * x, n=n)


def linear_potential(force=1.0, n=1):
    return separable(
        "linear", lambda x: force * x, lambda x: force + 0 * x, lambda x: 0 * x, n=n, force=force
    )


def quartic(n=1):
    return separable("quartic", lambda x: x**4 / 4, lambda x: x**3, lambda x: 3 * x**2, n=n)


def pendulum(n=1):
    return separable("pendulum", lambda x: -np.cos(x), np.sin, np.cos, n=n)


BUILTINS = {
    "harmonic": harmonic,
    "free": free_particle,
    "linear": linear_potential,
    "quartic": quartic,
    "pendulum": pendulum,
}


def builtin(name, **params):
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise ValueError(f"unknown Hamiltonian {name!r}; choose from {sorted(BUILTINS)}") from None
    return factory(**params)


@dataclass(frozen=True)
class Trajectory:
    """
    Samples of f_t(z0) and, for variational runs, S_t(z0).

    Arrays carry the time axis first; batched runs add a batch axis after it.
    `roots` holds the continuously tracked sqrt det(A_t + i B_t).
    """

    times: np.ndarray
    points: np.ndarray
    z0: np.ndarray
    monodromy: Optional[np.ndarray] = None
    gamma: Optional[np.ndarray] = None
    roots: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def final(self):
        return self.points[-1]

    def to_csv(self, path):
        """Columns t, x..., p..., S_00..S_{2n-1,2n-1}, gamma (unbatched only)."""
        if self.points.ndim != 2:
            raise ValueError("CSV export is for single trajectories")
        n = self.points.shape[1] // 2
        head = ["t"] + [f"x{i}" for i in range(n)] + [f"p{i}" for i in range(n)]
        if self.monodromy is not None:
            head += [f"S_{i}{j}" for i in range(2 * n) for j in range(2 * n)]
        head.append("gamma")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(head)
            for k, t in enumerate(self.times):
                row = [t, *self.points[k]]
                if self.monodromy is not None:
                    row += list(self.monodromy[k].ravel())
                row.append(self.gamma[k] if self.gamma is not None else "")
                w.writerow([repr(float(v)) if v != "" else v for v in row])


def _steps(T, dt):
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not np.isfinite(T):
        raise ValueError("T must be finite")
    nsteps = int(np.ceil(abs(T) / dt - 1e-9)) if T != 0 else 0
    h = T / nsteps if nsteps else 0.0
    return nsteps, h


def flow(H, z0, T, dt):
    """Fixed-step RK4 samples of the Hamiltonian flow from z0 (batched allowed)."""
    z = np.array(z0, dtype=float)
    nsteps, h = _steps(T, dt)
    times = h * np.arange(nsteps + 1)
    pts = np.empty((nsteps + 1,) + z.shape)
    pts[0] = z
    f = H.vector_field
    for k in range(nsteps):
        t = times[k]
        k1 = f(z, t)
        k2 = f(z + 0.5 * h * k1, t + 0.5 * h)
        k3 = f(z + 0.5 * h * k2, t + 0.5 * h)
        k4 = f(z + h * k3, t + h)
        z = z + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(z)):
            raise DivergedError(f"trajectory diverged after t = {t:.6g}", t)
        pts[k + 1] = z
    return Trajectory(times, pts, np.array(z0, dtype=float))


def _continue_roots(prev, value):
    r = np.sqrt(value)
    flip = np.abs(r - prev) > np.abs(r + prev)
    return np.where(flip, -r, r)


def variational_flow(H, z0, T, dt, with_gamma=True):
    """
    Integrate z' = J dH(z, t) and S' = J H''(z, t) S jointly with RK4.

    The symplectic defect of S is monitored each step and removed by
    re-projection onto Sp(n) once it exceeds 1e-8. The root of
    det(A_t + i B_t) is tracked along the way; if it turns by pi/4 or more
    in one step the step is flagged in the diagnostics.
    """
    z = np.array(z0, dtype=float)
    n = H.n
    J = J_matrix(n)
    nsteps, h = _steps(T, dt)
    times = h * np.arange(nsteps + 1)
    batch = z.shape[:-1]
    S = np.broadcast_to(np.eye(2 * n), batch + (2 * n, 2 * n)).copy()
    pts = np.empty((nsteps + 1,) + z.shape)
    mono = np.empty((nsteps + 1,) + S.shape)
    roots = np.empty((nsteps + 1,) + batch, dtype=complex)
    pts[0], mono[0], roots[0] = z, S, 1.0
    nproj = 0
    max_dev = 0.0
    max_arg = 0.0

    def rhs(z, S, t):
        return H.gradient(z, t) @ J.T, J @ H.hess(z, t) @ S

    d_prev = np.ones(batch, dtype=complex)
    for k in range(nsteps):
        t = times[k]
        a1, b1 = rhs(z, S, t)
        a2, b2 = rhs(z + 0.5 * h * a1, S + 0.5 * h * b1, t + 0.5 * h)
        a3, b3 = rhs(z + 0.5 * h * a2, S + 0.5 * h * b2, t + 0.5 * h)
        a4, b4 = rhs(z + h * a3, S + h * b3, t + h)
        z = z + (h / 6) * (a1 + 2 * a2 + 2 * a3 + a4)
        S = S + (h / 6) * (b1 + 2 * b2 + 2 * b3 + b4)
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(S))):
            raise DivergedError(f"variational flow diverged after t = {t:.6g}", t)
        dev = np.max(np.abs(np.swapaxes(S, -1, -2) @ J @ S - J))
        max_dev = max(max_dev, float(dev))
        if dev > REPROJECT_TOL:
            flat = S.reshape((-1, 2 * n, 2 * n))
            S = np.array([reproject_symplectic(m) for m in flat]).reshape(S.shape)
            nproj += 1
        d = np.linalg.det(S[..., :n, :n] + 1j * S[..., :n, n:])
        max_arg = max(max_arg, float(np.max(np.abs(np.angle(d / d_prev)), initial=0.0)))
        roots[k + 1] = _continue_roots(roots[k], d)
        d_prev = d
        pts[k + 1], mono[k + 1] = z, S
    if max_arg >= np.pi / 4:
        logger.warning("det(A + iB) turned by %.3f rad in one step; branch may be unreliable", max_arg)
    traj = Trajectory(
        times,
        pts,
        np.array(z0, dtype=float),
        monodromy=mono,
        roots=roots,
        diagnostics={
            "steps": nsteps,
            "dt": h,
            "reprojections": nproj,
            "max_symplectic_defect": max_dev,
            "max_branch_step": max_arg,
        },
    )
    if with_gamma:
        traj = Trajectory(**{**traj.__dict__, "gamma": action_phase(traj, H)})
    return traj


def action_phase(traj, H):
    """gamma(z0, t) at every sample by cumulative composite Simpson."""
    z = traj.points
    t = traj.times
    if len(t) == 1:
        return np.zeros(z.shape[:-1])
    tt = t.reshape((-1,) + (1,) * (z.ndim - 2))
    zdot = H.gradient(z, tt) @ J_matrix(H.n).T
    integrand = 0.5 * symplectic_form(z, zdot) - H.value(z, tt)
    if len(t) == 2:
        return np.stack([np.zeros_like(integrand[0]), 0.5 * (t[1] - t[0]) * (integrand[0] + integrand[1])])
    return cumulative_simpson(integrand, x=t, axis=0, initial=0.0)


def truncated_hamiltonian(H, z0, t, dt=1e-3):
    """
    Second-order Taylor truncation of H about f_t(z0).

    Returns a callable z -> H_{z0}(z, t).
    """
    zt = flow(H, z0, t, dt).final
    h0 = H.value(zt, t)
    g0 = H.gradient(zt, t)
    H2 = H.hess(zt, t)

    def Hz0(z):
        d = np.asarray(z, dtype=float) - zt
        return h0 + d @ g0 + 0.5 * np.einsum("...i,ij,...j->...", d, H2, d)

    return Hz0
