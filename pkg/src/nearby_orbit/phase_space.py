"""
Phase-space representation (n = 1 on grids).

The wave-packet transform

    U_phi psi(x, p) = (2 pi hbar)^{-1/2} e^{i p x / 2 hbar}
                      int e^{-i p x' / hbar} psi(x') conj(phi(x - x')) dx'

maps wavefunctions isometrically onto a closed subspace H_phi of L^2(R^2).
Phase-space Heisenberg-Weyl operators, metaplectic operators and the
phase-space nearby-orbit propagator act on fields over (x, p) grids.

The exponent of the phase-space translation is not taken on trust: the
audit `audit_hwp` tries the four candidates exp(i kappa sigma(z0, z) / hbar),
kappa in {-1, 1, -1/2, 1/2}, against the intertwining relation
T_ph(z0) U_phi = U_phi T(z0) and the unique survivor is used everywhere.
"""

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .flows import variational_flow
from .gaussians import (
    ConventionAuditError,
    SqueezedState,
    UnderResolvedWarning,
    to_grid,
    wigner_moyal_cross,
)
from .grid import GridField, position_grid
from .metaplectic import BranchState, MetaplecticElement, _nearest_power_of_i, apply_to_gaussian
from .oracles import wavepacket_quadrature
from .symplectic import J_matrix, SingularSMinusIError, _as_array, cayley_transform, symplectic_form

HWP_CANDIDATES = {"-sigma": -1.0, "+sigma": 1.0, "-sigma/2": -0.5, "+sigma/2": 0.5}
DEFAULT_COUNT = 128
QUARTER_TURN = np.array([[0.0, 1.0], [-1.0, 0.0]])


class UnderResolvedError(ValueError):
    """Grid spacing too coarse for the oscillations of the integrand."""


@dataclass(frozen=True)
class WindowFunction:
    """Window phi of the wave-packet transform: a SqueezedState or a 1D GridField."""

    phi: object
    hbar: float

    def __post_init__(self):
        if isinstance(self.phi, SqueezedState):
            if self.phi.n != 1:
                raise NotImplementedError("phase-space grids are provided for n = 1")
            if abs(self.phi.hbar - self.hbar) > 1e-14 * self.hbar:
                raise ValueError("window hbar does not match")
            nrm = abs(self.phi.phase)
        elif isinstance(self.phi, GridField):
            nrm = self.phi.norm()
        else:
            raise TypeError("window must be a SqueezedState or a GridField")
        if abs(nrm - 1.0) > 1e-6:
            warnings.warn(f"window is not normalised (norm {nrm:.6g})", stacklevel=2)

    @classmethod
    def standard(cls, hbar):
        return cls(SqueezedState.standard(1, hbar), hbar)

    @property
    def gaussian(self):
        return isinstance(self.phi, SqueezedState)

    def __call__(self, x):
        if self.gaussian:
            return self.phi(x)
        x = np.asarray(x, dtype=float)
        return self.phi.interpolate(x.ravel()).reshape(x.shape)


class PhaseSpaceField(GridField):
    """GridField over (x, p); the window used to build it lives in meta["window"]."""

    def __post_init__(self):
        super().__post_init__()
        if self.axes != ("x", "p"):
            raise ValueError(f"phase-space fields need axes ('x', 'p'), got {self.axes}")

    @property
    def window(self):
        return self.meta.get("window")

    @classmethod
    def from_grid(cls, g):
        return cls(g.values, g.origin, g.spacing, ("x", "p"), dict(g.meta))


def phase_space_grid(hbar, radius=0.0, count=DEFAULT_COUNT, half_width=None, center=(0.0, 0.0)):
    """Empty (x, p) field on [c - L, c + L)^2, L = 7 sqrt(hbar) + radius by default."""
    if half_width is None:
        half_width = 7.0 * np.sqrt(hbar) + radius
    d = 2.0 * half_width / count
    origin = (center[0] - half_width, center[1] - half_width)
    return PhaseSpaceField(np.zeros((count, count), dtype=complex), origin, (d, d), ("x", "p"))


def _default_window(window, hbar):
    if window is None:
        return WindowFunction.standard(hbar)
    if isinstance(window, WindowFunction):
        return window
    return WindowFunction(window, hbar)


# wave-packet transform


def wavepacket_transform(psi, window=None, grid=None, hbar=None):
    """
    Quadrature of U_phi psi on a phase-space grid.

    Parameters
    ----------
    psi : GridField
        1D wavefunction samples.
    window : WindowFunction, SqueezedState or GridField, optional
        Defaults to the standard coherent state.
    grid : PhaseSpaceField, optional
        Output grid; defaults to `phase_space_grid(hbar)`.
    """
    if hbar is None:
        if window is None or not hasattr(window, "hbar"):
            raise ValueError("hbar is required")
        hbar = window.hbar
    window = _default_window(window, hbar)
    if grid is None:
        grid = phase_space_grid(hbar)
    x, p = grid.coords(0), grid.coords(1)
    xs = psi.coords(0)
    pmax = float(np.max(np.abs(p)))
    if psi.spacing[0] > np.pi * hbar / max(pmax, 1e-300):
        raise UnderResolvedError(
            f"wavefunction spacing {psi.spacing[0]:.3g} exceeds pi hbar / p_max = {np.pi * hbar / pmax:.3g}"
        )
    A = psi.values[None, :] * np.conj(window(x[:, None] - xs[None, :]))
    E = np.exp(-1j * np.outer(xs, p) / hbar)
    vals = (A @ E) * psi.spacing[0] / np.sqrt(2 * np.pi * hbar)
    vals *= np.exp(0.5j * np.outer(x, p) / hbar)
    return PhaseSpaceField.from_grid(grid.with_values(vals, window=window, hbar=hbar))


def transform_gaussian(state, window=None, grid=None):
    """
    U_phi applied to a squeezed state in closed form,

        U_phi psi(z) = (pi hbar / 2)^{1/2} W(psi, phi)(z / 2),

    for a Gaussian window; grid windows fall back to quadrature.
    """
    hbar = state.hbar
    window = _default_window(window, hbar)
    if grid is None:
        grid = phase_space_grid(hbar)
    if not window.gaussian:
        xg = _auxiliary_position_grid(grid, hbar)
        return wavepacket_transform(to_grid(state, xg), window, grid, hbar)
    X, P = grid.mesh()
    z = np.stack([X, P], axis=-1)
    vals = np.sqrt(np.pi * hbar / 2) * wigner_moyal_cross(state, window.phi, 0.5 * z)
    return PhaseSpaceField.from_grid(grid.with_values(vals, window=window, hbar=hbar))


def _auxiliary_position_grid(grid, hbar, pad=8.0):
    """1D grid covering the x-range of `grid` (padded) and resolving its p-range."""
    x = grid.coords(0)
    pmax = float(np.max(np.abs(grid.coords(1))))
    half = 0.5 * (x[-1] - x[0]) + pad * np.sqrt(hbar)
    center = 0.5 * (x[0] + x[-1])
    dx_max = min(0.5 * np.pi * hbar / max(pmax, 1e-300), 0.5 * grid.spacing[0])
    count = 1 << int(np.ceil(np.log2(2 * half / dx_max)))
    return position_grid(center, half, count)


def adjoint_transform(Psi, window=None, xgrid=None, hbar=None):
    """
    U_phi^* Psi (x') = (2 pi hbar)^{-1/2} int e^{-i p x / 2 hbar} e^{i p x' / hbar}
                       phi(x - x') Psi(x, p) dx dp
    """
    hbar = Psi.meta.get("hbar") if hbar is None else hbar
    if hbar is None:
        raise ValueError("hbar is required")
    window = _default_window(window if window is not None else Psi.window, hbar)
    if xgrid is None:
        xgrid = _auxiliary_position_grid(Psi, hbar)
    x, p = Psi.coords(0), Psi.coords(1)
    xs = xgrid.coords(0)
    tw = Psi.values * np.exp(-0.5j * np.outer(x, p) / hbar)
    B = tw @ np.exp(1j * np.outer(p, xs) / hbar)
    vals = np.sum(B * window(x[:, None] - xs[None, :]), axis=0)
    vals *= Psi.cell / np.sqrt(2 * np.pi * hbar)
    return xgrid.with_values(vals)


def project(Psi, window=None, hbar=None):
    """P_phi Psi = U_phi U_phi^* Psi, the orthogonal projection onto H_phi."""
    hbar = Psi.meta.get("hbar") if hbar is None else hbar
    window = _default_window(window if window is not None else Psi.window, hbar)
    psi = adjoint_transform(Psi, window, hbar=hbar)
    return wavepacket_transform(psi, window, Psi, hbar)


def projection_defect(Psi, window=None, hbar=None):
    """||Psi - P_phi Psi|| / ||Psi||."""
    return (Psi - project(Psi, window, hbar)).norm() / Psi.norm()


def ladder_residuals(psi, window=None, grid=None, hbar=None):
    """
    Relative residuals of the two ladder relations

        U(x psi) = (x/2 + i hbar d/dp) U psi,  U(-i hbar psi') = (p/2 - i hbar d/dx) U psi,

    with fourth-order central differences on the phase-space grid (borders
    excluded).
    """
    Psi = wavepacket_transform(psi, window, grid, hbar)
    hbar = Psi.meta["hbar"]
    X, P = Psi.mesh()
    xs = psi.coords(0)
    k = 2 * np.pi * np.fft.fftfreq(len(xs), d=psi.spacing[0])
    dpsi = psi.with_values(-1j * hbar * np.fft.ifft(1j * k * np.fft.fft(psi.values)))
    lhs_x = wavepacket_transform(psi.with_values(xs * psi.values), Psi.window, Psi, hbar).values
    lhs_p = wavepacket_transform(dpsi, Psi.window, Psi, hbar).values

    def d4(f, axis, h):
        return (
            -np.roll(f, -2, axis) + 8 * np.roll(f, -1, axis) - 8 * np.roll(f, 1, axis) + np.roll(f, 2, axis)
        ) / (12 * h)

    V = Psi.values
    rhs_x = 0.5 * X * V + 1j * hbar * d4(V, 1, Psi.spacing[1])
    rhs_p = 0.5 * P * V - 1j * hbar * d4(V, 0, Psi.spacing[0])
    inner = (slice(2, -2), slice(2, -2))

    def rel(a, b):
        return float(np.linalg.norm((a - b)[inner]) / np.linalg.norm(a[inner]))

    return {"position": rel(lhs_x, rhs_x), "momentum": rel(lhs_p, rhs_p)}


# phase-space Heisenberg-Weyl operators


def _audit_cases():
    rng = np.random.default_rng(20240612)
    cases = []
    for _ in range(3):
        psi = SqueezedState.from_XY(rng.uniform(0.5, 2.0), rng.uniform(-1, 1), rng.uniform(-1, 1, 2))
        z0 = rng.uniform(-1, 1, 2)
        zs = rng.uniform(-2, 2, size=(6, 2))
        cases.append((psi, z0, zs))
    return cases


def audit_hwp(tol=1e-6):
    """
    Select the exponent of T_ph(z0) from the intertwining relation, using
    direct quadrature of the wave-packet transform (hbar = 1, standard window).

    Returns the JSON-ready record {"hwp_convention", "kappa", "residuals",
    "tol", "conclusive"}.
    """
    window = SqueezedState.standard(1, 1.0)
    residuals = {}
    for name, kappa in HWP_CANDIDATES.items():
        worst = 0.0
        for psi, z0, zs in _audit_cases():
            x0, p0 = z0

            def shifted(x, psi=psi, x0=x0, p0=p0):
                return np.exp(1j * (p0 * x - 0.5 * p0 * x0)) * psi(x - x0)

            rhs = wavepacket_quadrature(shifted, window, zs, 1.0)
            lhs = np.exp(1j * kappa * symplectic_form(z0, zs)) * wavepacket_quadrature(psi, window, zs - z0, 1.0)
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
        residuals[name] = worst
    passing = [k for k, v in residuals.items() if v <= tol]
    out = {
        "hwp_convention": passing[0] if len(passing) == 1 else None,
        "kappa": HWP_CANDIDATES[passing[0]] if len(passing) == 1 else None,
        "residuals": residuals,
        "tol": tol,
        "conclusive": len(passing) == 1,
    }
    return out


@lru_cache(maxsize=None)
def _hwp_default():
    return audit_hwp()


def hwp_convention():
    res = _hwp_default()
    if not res["conclusive"]:
        raise ConventionAuditError(f"phase-space translation audit inconclusive: {res['residuals']}")
    return res


def _shift(values, spacing, z0):
    """values(z - z0) on a periodic grid: exact roll on the lattice, spectral shift otherwise."""
    steps = np.asarray(z0, dtype=float) / np.asarray(spacing)
    if np.allclose(steps, np.round(steps), atol=1e-9):
        return np.roll(values, tuple(int(s) for s in np.round(steps)), axis=(0, 1))
    kx = 2 * np.pi * np.fft.fftfreq(values.shape[0], d=spacing[0])
    kp = 2 * np.pi * np.fft.fftfreq(values.shape[1], d=spacing[1])
    ramp = np.exp(-1j * (np.outer(kx * z0[0], np.ones_like(kp)) + kp[None, :] * z0[1]))
    return np.fft.ifft2(np.fft.fft2(values) * ramp)


def t_ph(z0, Psi, hbar=None, kappa=None):
    """
    Phase-space translation T_ph(z0) Psi(z) = exp(i kappa sigma(z0, z) / hbar) Psi(z - z0).

    `kappa` defaults to the audited convention. Off-lattice shifts use a
    spectral (Fourier) shift, which is exact for band-limited fields.
    """
    hbar = Psi.meta.get("hbar") if hbar is None else hbar
    if kappa is None:
        kappa = hwp_convention()["kappa"]
    z0 = np.asarray(z0, dtype=float)
    if not np.any(z0):
        return Psi
    X, P = Psi.mesh()
    sig = z0[1] * X - P * z0[0]
    vals = np.exp(1j * kappa * sig / hbar) * _shift(Psi.values, Psi.spacing, z0)
    out = Psi.with_values(vals)
    if out.edge_mass() > 1e-8:
        warnings.warn(
            f"translated field reaches the grid edge (edge mass {out.edge_mass():.1e})",
            UnderResolvedWarning,
            stacklevel=2,
        )
    return out


# phase-space metaplectic operators


def _meta_raw(S, Psi, hbar, kappa, chunk=4096):
    """
    Quadrature of the phase-space metaplectic integral without the i^nu
    factor, written as a twisted convolution over w = z - z0:

        (2 pi hbar)^{-1} |det(S - I)|^{-1/2} e^{i M_S z.z / 2 hbar}
        int e^{-i z.(M_S + kappa J) w / hbar} e^{i M_S w.w / 2 hbar} Psi(w) dw.
    """
    MS = cayley_transform(S)
    K = MS + kappa * J_matrix(1)
    detSI = abs(np.linalg.det(S - np.eye(2)))
    X, P = Psi.mesh()
    z1, z2 = Psi.coords(0), Psi.coords(1)
    q, chirp = _chirp(MS, Psi, hbar)
    g = (chirp * Psi.values).ravel()
    w1, w2 = X.ravel(), P.ravel()
    support = np.abs(g) > 1e-10 * np.max(np.abs(g))
    ratio = _alias_ratio(S, Psi, hbar, kappa)
    if ratio >= 1.0:
        warnings.warn(
            f"phase-space metaplectic kernel aliases on this grid (ratio {ratio:.2f})",
            UnderResolvedWarning,
            stacklevel=3,
        )
    a = K[0, 0] * w1 + K[0, 1] * w2
    b = K[1, 0] * w1 + K[1, 1] * w2
    out = np.zeros(Psi.shape, dtype=complex)
    idx = np.flatnonzero(support)
    for k0 in range(0, len(idx), chunk):
        sl = idx[k0 : k0 + chunk]
        E1 = np.exp(-1j * np.outer(z1, a[sl]) / hbar)
        E2 = np.exp(-1j * np.outer(z2, b[sl]) / hbar)
        out += (E1 * g[sl]) @ E2.T
    out *= Psi.cell * np.exp(0.5j * q / hbar) / (2 * np.pi * hbar * np.sqrt(detSI))
    return Psi.with_values(out)


def _chirp(MS, Psi, hbar):
    X, P = Psi.mesh()
    q = MS[0, 0] * X**2 + 2 * MS[0, 1] * X * P + MS[1, 1] * P**2
    return q, np.exp(0.5j * q / hbar)


def _alias_ratio(S, Psi, hbar, kappa):
    """
    The w-sum evaluates the discrete Fourier transform of g = chirp * Psi at
    frequencies K^T z / hbar. Periodic images stay out of the way while, per
    axis, max |K^T z| / hbar + band(g) < 2 pi / spacing; the largest ratio of
    the two sides is returned (>= 1 means aliasing).
    """
    MS = cayley_transform(S)
    K = MS + kappa * J_matrix(1)
    X, P = Psi.mesh()
    g = _chirp(MS, Psi, hbar)[1] * Psi.values
    spec = np.abs(np.fft.fft2(g))
    live = spec > 1e-8 * spec.max()
    ratio = 0.0
    for ax in range(2):
        freq = np.abs(K[0, ax] * X + K[1, ax] * P).max() / hbar
        k = np.abs(2 * np.pi * np.fft.fftfreq(g.shape[ax], d=Psi.spacing[ax]))
        kk = k[:, None] if ax == 0 else k[None, :]
        band = float(np.max(np.broadcast_to(kk, g.shape)[live]))
        ratio = max(ratio, (freq + band) * Psi.spacing[ax] / (2 * np.pi))
    return float(ratio)


def _factorization(S, Psi, hbar, kappa):
    """
    Factors of S in order of application. S itself is used when its kernel
    does not alias on the grid of Psi; otherwise S = (S R^k)(R^{-k}) with R
    the quarter turn and k chosen to minimise the worse aliasing ratio.
    """
    best = None
    for k in range(4):
        Rk = np.linalg.matrix_power(QUARTER_TURN, k)
        factors = [S] if k == 0 else [np.linalg.matrix_power(QUARTER_TURN.T, k), S @ Rk]
        try:
            score = max(_alias_ratio(F, Psi, hbar, kappa) for F in factors)
        except SingularSMinusIError:
            continue
        if k == 0 and score < 1.0:
            return factors
        if best is None or score < best[0] - 1e-12:
            best = (score, factors)
    if best is None:
        raise SingularSMinusIError("no admissible factorisation of S")
    return best[1]


def _probe_field(grid, hbar, window):
    c = np.array([grid.coords(0)[grid.shape[0] // 2], grid.coords(1)[grid.shape[1] // 2]])
    x, p = grid.coords(0), grid.coords(1)
    center = np.zeros(2) if (x[0] < 0 < x[-1] and p[0] < 0 < p[-1]) else c
    probe = SqueezedState.coherent(center, hbar)
    return probe, transform_gaussian(probe, window, grid)


def _s_ph(S, Psi, hbar, element, window, kappa, phase_tol, factorize=True):
    factors = _factorization(S, Psi, hbar, kappa) if factorize else [S]
    probe, probe_field = _probe_field(Psi, hbar, window)
    raw, raw_probe = Psi, probe_field
    for F in factors:
        raw = _meta_raw(F, raw, hbar, kappa)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UnderResolvedWarning)
            raw_probe = _meta_raw(F, raw_probe, hbar, kappa)
    exact = transform_gaussian(apply_to_gaussian(element, probe), window, Psi)
    ratio = np.vdot(raw_probe.values, exact.values) / np.vdot(raw_probe.values, raw_probe.values)
    _, ph = _nearest_power_of_i(ratio, phase_tol)
    return raw, ph


def s_ph_apply(S, Psi, hbar=None, element=None, window=None, phase_tol=1e-3, factorize=True):
    """
    Phase-space metaplectic operator by quadrature.

    Returns the quadrature without the i^nu factor and the inferred unit
    phase, so that `phase * field` approximates S_ph Psi for the lift
    `element` (default: the polar-path lift of S). With `factorize`, a
    strongly oscillating kernel is split through a quarter turn; the
    inferred phase then covers both factors.
    """
    S = _as_array(S)
    hbar = Psi.meta.get("hbar") if hbar is None else hbar
    if abs(np.linalg.det(S - np.eye(len(S)))) < 1e-12:
        raise SingularSMinusIError("det(S - I) vanishes")
    if element is None:
        element = MetaplecticElement.from_matrix(S)
    elif not np.allclose(element.S, S, atol=1e-10):
        raise ValueError("element does not project onto S")
    window = _default_window(window if window is not None else Psi.window, hbar)
    kappa = hwp_convention()["kappa"]
    return _s_ph(S, Psi, hbar, element, window, kappa, phase_tol, factorize)


# phase-space coherent states


def ps_coherent(z0, hbar, window=None, grid=None, M=None):
    """Phi_{z0, M} = U_phi phi_{z0, M} (M defaults to i)."""
    M = 1j if M is None else M
    return transform_gaussian(SqueezedState(np.asarray(z0, dtype=float), M, hbar=hbar), window, grid)


@dataclass(frozen=True)
class ReconstructionLattice:
    x0s: np.ndarray
    p0s: np.ndarray

    @property
    def cell(self):
        return float((self.x0s[1] - self.x0s[0]) * (self.p0s[1] - self.p0s[0]))

    @classmethod
    def covering(cls, Psi, hbar, spacing=None, pad=5.0):
        """Cover the support of |Psi| (above 1e-6 of its peak), padded by pad * sqrt(hbar)."""
        if spacing is None:
            spacing = 0.5 * np.sqrt(hbar)
        X, P = Psi.mesh()
        a = np.abs(Psi.values)
        keep = a > 1e-6 * a.max()
        r = pad * np.sqrt(hbar)
        x0s = np.arange(X[keep].min() - r, X[keep].max() + r + spacing, spacing)
        p0s = np.arange(P[keep].min() - r, P[keep].max() + r + spacing, spacing)
        return cls(x0s, p0s)


def _lattice_fields(Psi, hbar, window, lattice, chunk=64):
    """
    Yield (index array, Phi_{z0} values) in lattice chunks, using
    Phi_{z0}(z) = exp(i kappa sigma(z0, z) / hbar) Phi_0(z - z0).
    """
    X0, P0 = np.meshgrid(lattice.x0s, lattice.p0s, indexing="ij")
    z0s = np.stack([X0.ravel(), P0.ravel()], axis=-1)
    if not window.gaussian:
        for k, z0 in enumerate(z0s):
            yield np.array([k]), ps_coherent(z0, hbar, window, Psi).values[None]
        return
    kappa = hwp_convention()["kappa"]
    ground = SqueezedState.standard(1, hbar)
    X, P = Psi.mesh()
    z = np.stack([X, P], axis=-1)
    for k0 in range(0, len(z0s), chunk):
        zc = z0s[k0 : k0 + chunk, None, None, :]
        d = z[None] - zc
        vals = np.sqrt(np.pi * hbar / 2) * wigner_moyal_cross(ground, window.phi, 0.5 * d)
        sig = zc[..., 1] * X[None] - P[None] * zc[..., 0]
        yield np.arange(k0, k0 + len(zc)), vals * np.exp(1j * kappa * sig / hbar)


def _is_standard(window):
    phi = window.phi
    return window.gaussian and not np.any(phi.center) and np.allclose(phi.M, 1j) and abs(phi.phase - 1) < 1e-14


def _separable_factors(Psi, hbar, lattice):
    """
    Standard window and standard phi: Phi_{z0}(x, p) = a(x) b(p) with
    a = (2 pi hbar)^{-1/2} e^{i kappa p0 x / hbar} e^{-(x - x0)^2 / 4 hbar}
    and b = e^{-i kappa p x0 / hbar} e^{-(p - p0)^2 / 4 hbar}. Rows run over
    the lattice points in C order.
    """
    kappa = hwp_convention()["kappa"]
    X0, P0 = np.meshgrid(lattice.x0s, lattice.p0s, indexing="ij")
    x0, p0 = X0.ravel()[:, None], P0.ravel()[:, None]
    x, p = Psi.coords(0)[None, :], Psi.coords(1)[None, :]
    A = np.exp(1j * kappa * p0 * x / hbar - (x - x0) ** 2 / (4 * hbar)) / np.sqrt(2 * np.pi * hbar)
    B = np.exp(-1j * kappa * p * x0 / hbar - (p - p0) ** 2 / (4 * hbar))
    return A, B


def _coherent_coefficients_ps(Psi, hbar, window, lattice):
    shape = (len(lattice.x0s), len(lattice.p0s))
    if _is_standard(window):
        A, B = _separable_factors(Psi, hbar, lattice)
        return (np.sum((np.conj(A) @ Psi.values) * np.conj(B), axis=1) * Psi.cell).reshape(shape)
    coeffs = np.empty(shape[0] * shape[1], dtype=complex)
    for idx, F in _lattice_fields(Psi, hbar, window, lattice):
        coeffs[idx] = np.einsum("kij,ij->k", np.conj(F), Psi.values) * Psi.cell
    return coeffs.reshape(shape)


def _lattice_sum(coeffs, Psi, hbar, window, lattice):
    flat = coeffs.ravel()
    if _is_standard(window):
        A, B = _separable_factors(Psi, hbar, lattice)
        return (A.T * flat) @ B
    out = np.zeros(Psi.shape, dtype=complex)
    for idx, F in _lattice_fields(Psi, hbar, window, lattice):
        out += np.einsum("k,kij->ij", flat[idx], F)
    return out


def ps_reconstruct(Psi, hbar=None, window=None, lattice=None):
    """
    (2 pi hbar)^{-1} sum over the lattice of (Psi, Phi_{z0}) Phi_{z0} dz0.

    Equals Psi for Psi in H_phi and P_phi Psi in general, up to lattice
    error. Warns when the lattice edge carries non-negligible coefficients.
    """
    hbar = Psi.meta.get("hbar") if hbar is None else hbar
    window = _default_window(window if window is not None else Psi.window, hbar)
    if lattice is None:
        lattice = ReconstructionLattice.covering(Psi, hbar)
    coeffs = _coherent_coefficients_ps(Psi, hbar, window, lattice)
    _warn_lattice_edge(coeffs)
    out = _lattice_sum(coeffs, Psi, hbar, window, lattice)
    out *= lattice.cell / (2 * np.pi * hbar)
    return Psi.with_values(out)


def coherent_norm_integral(Psi, hbar=None, window=None, lattice=None):
    """(2 pi hbar)^{-1} sum |(Psi, Phi_{z0})|^2 dz0, which equals ||Psi||^2 on H_phi."""
    hbar = Psi.meta.get("hbar") if hbar is None else hbar
    window = _default_window(window if window is not None else Psi.window, hbar)
    if lattice is None:
        lattice = ReconstructionLattice.covering(Psi, hbar)
    coeffs = _coherent_coefficients_ps(Psi, hbar, window, lattice)
    _warn_lattice_edge(coeffs)
    return float(np.sum(np.abs(coeffs) ** 2) * lattice.cell / (2 * np.pi * hbar))


def _warn_lattice_edge(coeffs):
    amax = np.max(np.abs(coeffs))
    edge = np.concatenate([coeffs[0], coeffs[-1], coeffs[:, 0], coeffs[:, -1]])
    if amax > 0 and np.max(np.abs(edge)) > 1e-6 * amax:
        warnings.warn(
            f"reconstruction lattice truncated (edge/max = {np.max(np.abs(edge)) / amax:.1e})",
            UnderResolvedWarning,
            stacklevel=3,
        )


# phase-space nearby-orbit propagator


def u_ph_propagate(H, Psi0, z0, T, dt, hbar=None, window=None, check_membership=True, phase_tol=1e-3):
    """
    U_ph(t, z0) Psi0 = e^{i gamma / hbar} T_ph(f_t(z0)) (S_t(z0))_ph T_ph(z0)^{-1} Psi0

    with the metaplectic lift fixed by the branch tracked along the
    linearised flow. The grid of Psi0 must contain z0, the origin and f_T(z0)
    with room for the packet width.
    """
    hbar = Psi0.meta.get("hbar") if hbar is None else hbar
    window = _default_window(window if window is not None else Psi0.window, hbar)
    z0 = np.asarray(z0, dtype=float)
    if check_membership:
        defect = projection_defect(Psi0, window, hbar)
        if defect > 1e-3:
            raise ValueError(f"initial field is not in H_phi (projection defect {defect:.1e})")
    if T == 0:
        return Psi0
    traj = variational_flow(H, z0, T, dt)
    S = traj.monodromy[-1]
    elem = MetaplecticElement(S, S[None], BranchState(value=complex(traj.roots[-1])))
    kappa = hwp_convention()["kappa"]
    Psi1 = t_ph(-z0, Psi0, hbar, kappa)
    raw, ph = _s_ph(S, Psi1, hbar, elem, window, kappa, phase_tol)
    out = t_ph(traj.points[-1], raw * ph, hbar, kappa)
    return out * np.exp(1j * traj.gamma[-1] / hbar)
