"""
Semiclassical nearby-orbit propagator

    U(t, z0) = exp(i gamma(z0, t) / hbar) T(f_t(z0)) S_hat_t(z0) T(z0)^{-1}

exact on squeezed coherent states, extended to arbitrary 1D wavefunctions
through the coherent-state resolution of the identity, plus the harness that
measures its error against the split-step reference solver.
"""

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .flows import variational_flow
from .gaussians import SqueezedState, UnderResolvedWarning, coherent_coefficients, to_grid
from .metaplectic import BranchState, MetaplecticElement, alpha
from .reference import WrapAroundError, auto_config, split_step
from .symplectic import symplectic_form

COEFF_CUTOFF = 1e-8


class ReferenceUnderResolved(RuntimeError):
    """The reference solver could not resolve the scenario; run aborted."""


@dataclass(frozen=True)
class PropagatorResult:
    """
    Output of `propagate_coherent` at the final time.

    `states` holds the propagated state at every integrator sample, and
    `times` the matching times.
    """

    state_out: SqueezedState
    gamma: float
    center: np.ndarray
    monodromy: np.ndarray
    times: np.ndarray = field(repr=False)
    states: tuple = field(repr=False)
    element: MetaplecticElement = field(repr=False, default=None)
    diagnostics: dict = field(default_factory=dict)
    trajectory: object = field(repr=False, default=None)

    def to_csv(self, path):
        """Columns t, x0.., p0.., Re M.., Im M.., gamma, phase_re, phase_im."""
        n = self.state_out.n
        head = (
            ["t"]
            + [f"x0_{i}" for i in range(n)]
            + [f"p0_{i}" for i in range(n)]
            + [f"ReM_{i}{j}" for i in range(n) for j in range(n)]
            + [f"ImM_{i}{j}" for i in range(n) for j in range(n)]
            + ["gamma", "phase_re", "phase_im"]
        )
        gammas = self.diagnostics.get("gamma_samples")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(head)
            for k, (t, s) in enumerate(zip(self.times, self.states)):
                g = gammas[k] if gammas is not None else np.nan
                row = [t, *s.center, *s.M.real.ravel(), *s.M.imag.ravel(), g, s.phase.real, s.phase.imag]
                w.writerow([repr(float(v)) for v in row])


def _hw_product_phase(a, b, hbar):
    """T(a) T(b) = exp(i sigma(a, b) / 2 hbar) T(a + b)."""
    return np.exp(0.5j * symplectic_form(a, b) / hbar)


def propagate_coherent(H, state, T, dt, expansion_point=None):
    """
    Propagate a squeezed coherent state with U(T, z0).

    By default z0 is the centre of `state` (the regime where the
    approximation is controlled). Passing `expansion_point` expands about a
    different orbit; the result is still a squeezed state.
    """
    hbar = state.hbar
    z0 = state.center if expansion_point is None else np.asarray(expansion_point, dtype=float)
    if expansion_point is not None and z0.shape != state.center.shape:
        raise ValueError("expansion point has the wrong dimension")
    traj = variational_flow(H, z0, T, dt)
    shift = state.center - z0
    base_phase = _hw_product_phase(-z0, state.center, hbar)
    states = []
    for k in range(len(traj.times)):
        S = traj.monodromy[k]
        ft = traj.points[k]
        u = _unit_phase_from_root(S, traj.roots[k], state.M)
        Sshift = S @ shift
        ph = (
            state.phase
            * np.exp(1j * traj.gamma[k] / hbar)
            * base_phase
            * u
            * _hw_product_phase(ft, Sshift, hbar)
        )
        states.append(state.replace(center=ft + Sshift, M=alpha(S, state.M), phase=ph))
    elem = MetaplecticElement.from_path(traj.monodromy) if len(traj.times) > 1 else MetaplecticElement.identity(state.n)
    diag = dict(traj.diagnostics)
    diag["gamma_samples"] = traj.gamma
    return PropagatorResult(
        state_out=states[-1],
        gamma=float(traj.gamma[-1]),
        center=traj.points[-1],
        monodromy=traj.monodromy[-1],
        times=traj.times,
        states=tuple(states),
        element=elem,
        diagnostics=diag,
        trajectory=traj,
    )


def _unit_phase_from_root(S, root_i, M):
    """Continue the tracked sqrt det(A + iB) to det(A + BM) and return its unit inverse."""
    if np.allclose(M, 1j * np.eye(len(M)), atol=0):
        return complex(abs(root_i) / root_i)
    elem = MetaplecticElement(S, S[None], BranchState(value=complex(root_i)))
    return elem.unit_phase(M)


@dataclass(frozen=True)
class PhaseSpaceLattice:
    """Quadrature lattice for the coherent-state resolution (n = 1)."""

    x0s: np.ndarray
    p0s: np.ndarray

    @property
    def cell(self):
        return float((self.x0s[1] - self.x0s[0]) * (self.p0s[1] - self.p0s[0]))

    @classmethod
    def auto(cls, psi, hbar, spacing=None, margin=6.0):
        """Cover the position and momentum support of `psi`, padded by margin * sqrt(hbar)."""
        if spacing is None:
            spacing = 0.2 * np.sqrt(hbar)
        x = psi.coords(0)
        dens = np.abs(psi.values) ** 2
        keep = dens > 1e-14 * dens.max()
        k = 2 * np.pi * np.fft.fftfreq(len(x), d=psi.spacing[0])
        pd = np.abs(np.fft.fft(psi.values)) ** 2
        pkeep = pd > 1e-14 * pd.max()
        pad = margin * np.sqrt(hbar)
        xlo, xhi = x[keep].min() - pad, x[keep].max() + pad
        plo, phi = hbar * k[pkeep].min() - pad, hbar * k[pkeep].max() + pad
        x0s = np.arange(xlo, xhi + spacing, spacing)
        p0s = np.arange(plo, phi + spacing, spacing)
        return cls(x0s, p0s)


def _propagated_coherent_values(H, z0s, T, dt, x, hbar, chunk=1024):
    """e^{i gamma / hbar} T(f_t) S_hat_t phi^hbar evaluated at x for every z0 (n = 1)."""
    out = np.empty((len(z0s), len(x)), dtype=complex)
    for k0 in range(0, len(z0s), chunk):
        zb = z0s[k0 : k0 + chunk]
        traj = variational_flow(H, zb, T, dt)
        S = traj.monodromy[-1]
        A, B, C, D = S[:, 0, 0], S[:, 0, 1], S[:, 1, 0], S[:, 1, 1]
        M = (C + 1j * D) / (A + 1j * B)
        root = traj.roots[-1]
        u = np.abs(root) / root
        ft = traj.points[-1]
        xc, pc = ft[:, :1], ft[:, 1:]
        amp = (np.pi * hbar) ** -0.25 * M.imag[:, None] ** 0.25
        ph = np.exp(1j * traj.gamma[-1] / hbar) * u
        d = x[None, :] - xc
        out[k0 : k0 + chunk] = (ph[:, None] * amp) * np.exp(
            1j * (pc * x[None, :] - 0.5 * pc * xc) / hbar + 0.5j * M[:, None] * d**2 / hbar
        )
    return out


def propagate_general(H, psi0, T, dt, hbar, lattice=None, cutoff=COEFF_CUTOFF):
    """
    Semiclassical propagation of an arbitrary 1D wavefunction:

        U(t) psi0 = (2 pi hbar)^{-1} int (psi0, phi_z0) e^{i gamma/hbar}
                    T(f_t(z0)) S_hat_t(z0) phi^hbar dz0

    discretised on `lattice`. Coefficients below `cutoff` times the largest
    one are skipped.
    """
    if psi0.ndim != 1:
        raise ValueError("propagate_general works on 1D position grids")
    if lattice is None:
        lattice = PhaseSpaceLattice.auto(psi0, hbar)
    if lattice.x0s[1] - lattice.x0s[0] > np.sqrt(hbar) or lattice.p0s[1] - lattice.p0s[0] > np.sqrt(hbar):
        raise ValueError("phase-space lattice spacing exceeds sqrt(hbar)")
    coeff = coherent_coefficients(psi0, lattice.x0s, lattice.p0s, hbar)
    amax = np.max(np.abs(coeff))
    edge = np.concatenate([coeff[0], coeff[-1], coeff[:, 0], coeff[:, -1]])
    if np.max(np.abs(edge)) > 1e-6 * amax:
        warnings.warn(
            "phase-space lattice does not cover the coefficient support "
            f"(edge/max = {np.max(np.abs(edge)) / amax:.1e})",
            UnderResolvedWarning,
            stacklevel=2,
        )
    X0, P0 = np.meshgrid(lattice.x0s, lattice.p0s, indexing="ij")
    mask = np.abs(coeff) >= cutoff * amax
    z0s = np.stack([X0[mask], P0[mask]], axis=-1)
    x = psi0.coords(0)
    vals = _propagated_coherent_values(H, z0s, T, dt, x, hbar)
    w = coeff[mask] * lattice.cell / (2 * np.pi * hbar)
    return psi0.with_values(w @ vals, t=T, terms=int(mask.sum()))


# error harness


@dataclass
class ErrorTable:
    hbar: np.ndarray
    sup_error: np.ndarray
    final_error: np.ndarray
    slope: float
    monotone: bool
    sample_times: np.ndarray
    errors: np.ndarray

    def rows(self):
        return [(float(h), float(e), self.slope) for h, e in zip(self.hbar, self.sup_error)]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["hbar", "error", "slope"])
            for h, e, s in self.rows():
                w.writerow([repr(h), repr(e), repr(s)])


def compare_with_reference(H, state, T, dt, n_samples=8, half_width=None):
    """
    L^2 distance between U(t, z0) state and the split-step solution at
    `n_samples` equally spaced times in (0, T].

    Returns (sample_times, errors, reference_final, semiclassical_final).
    """
    if H.potential is None:
        raise ValueError("reference comparison needs a kinetic-plus-potential model")
    hbar = state.hbar
    res = propagate_coherent(H, state, T, dt)
    nsteps = len(res.times) - 1
    idx = np.unique(np.round(np.linspace(0, nsteps, n_samples + 1)[1:]).astype(int))
    traj_x = np.array([s.center[0] for s in res.states])
    width = np.sqrt(hbar / min(np.min(np.linalg.eigvalsh(s.M.imag)) for s in res.states))
    if half_width is None:
        half_width = max(8.0, float(np.max(np.abs(traj_x))) + 16.0 * width)
    times = res.times[idx]
    try:
        cfg = auto_config(hbar, H.potential, T, dt=dt, half_width=half_width, snapshot_times=tuple(times))
        grid = cfg.grid()
        _, snaps = split_step(to_grid(state, grid), cfg)
    except (WrapAroundError, ValueError) as exc:
        raise ReferenceUnderResolved(str(exc)) from exc
    errors = np.array([(to_grid(res.states[k], grid) - snaps[t]).norm() for k, t in zip(idx, times)])
    return times, errors, snaps[times[-1]], res.states[-1]


def error_vs_reference(H, z0, M, hbar_list, T, dt, n_samples=8):
    """
    Semiclassical error as a function of hbar.

    For each hbar the sup over sampled t <= T of the L^2 error is recorded
    together with the final-time error; `slope` is the least-squares slope
    of log(sup error) against log(hbar).
    """
    hbar_list = np.asarray(hbar_list, dtype=float)
    if len(hbar_list) < 3:
        raise ValueError("need at least three hbar values")
    sups, finals, all_err = [], [], []
    for h in hbar_list:
        st = SqueezedState(np.asarray(z0, dtype=float), M, hbar=h)
        times, err, _, _ = compare_with_reference(H, st, T, dt, n_samples)
        sups.append(err.max())
        finals.append(err[-1])
        all_err.append(err)
    sups = np.array(sups)
    slope = float(np.polyfit(np.log(hbar_list), np.log(sups), 1)[0])
    order = np.argsort(hbar_list)[::-1]
    s = sups[order]
    monotone = bool(np.all(s[1:] <= 1.1 * s[:-1]))
    return ErrorTable(hbar_list, sups, np.array(finals), slope, monotone, times, np.array(all_err))
