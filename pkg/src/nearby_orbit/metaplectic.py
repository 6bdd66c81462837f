"""
Metaplectic operators acting on squeezed coherent states.

An element of Mp(n) is stored as a symplectic matrix together with a path
from the identity; the path fixes which of the two lifts is meant through a
continuously tracked square root of det(A_t + i B_t).
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm, logm

from .gaussians import SqueezedState, UnderResolvedWarning, check_siegel
from .symplectic import (
    SingularSMinusIError,
    _as_array,
    block_decompose,
    cayley_transform,
    symplectic_inverse,
)

MAX_ARG_STEP = np.pi / 4


class ConditioningError(ArithmeticError):
    """det(A + B M) too small to trust the Siegel action."""


class DegenerateMaslovError(ValueError):
    """P' + Q has a vanishing eigenvalue; the index is undefined."""


class PhaseInferenceError(ArithmeticError):
    """Inferred unit phase is not an integer power of i."""


def alpha(S, M, tol=1e-12):
    """Siegel action (C + D M)(A + B M)^{-1}."""
    A, B, C, D, _ = block_decompose(S)
    M = check_siegel(M)
    den = A + B @ M
    d = np.linalg.det(den)
    if abs(d) < tol:
        raise ConditioningError(f"|det(A + BM)| = {abs(d):.2e} below {tol:.0e}")
    out = (C + D @ M) @ np.linalg.inv(den)
    return 0.5 * (out + out.T)


def _det_AiB(S, M=None):
    A, B = S[..., : S.shape[-1] // 2, : S.shape[-1] // 2], S[..., : S.shape[-1] // 2, S.shape[-1] // 2 :]
    if M is None:
        return np.linalg.det(A + 1j * B)
    return np.linalg.det(A + B @ M)


def _continue_root(prev_root, value):
    r = np.sqrt(value)
    return r if abs(r - prev_root) <= abs(r + prev_root) else -r


@dataclass(frozen=True)
class BranchState:
    """
    Tracked root of det(A_t + i B_t) at the end of a path.

    `winding` counts full turns of det(A_t + i B_t) around the origin.
    """

    value: complex = 1.0 + 0j
    step: int = 0
    winding: int = 0
    total_arg: float = 0.0


def _track(path):
    """Follow sqrt det(A + iB) along sampled symplectic matrices, refining as needed."""
    root = 1.0 + 0j
    total = 0.0
    steps = 0
    prev_S = path[0]
    prev_d = _det_AiB(prev_S)
    root = _continue_root(1.0 + 0j, prev_d)
    if abs(prev_d - 1.0) > 1e-12 and not np.allclose(prev_S, np.eye(len(prev_S)), atol=1e-12):
        raise ValueError("metaplectic path must start at the identity")
    for S in path[1:]:
        stack = [(prev_S, S)]
        while stack:
            S0, S1 = stack.pop()
            d0, d1 = _det_AiB(S0), _det_AiB(S1)
            darg = np.angle(d1 / d0)
            if abs(darg) >= MAX_ARG_STEP:
                mid = _midpoint(S0, S1)
                stack.append((mid, S1))
                stack.append((S0, mid))
                continue
            root = _continue_root(root, d1)
            total += darg
            steps += 1
        prev_S = S
    return root, steps, total


def _midpoint(S0, S1):
    delta = symplectic_inverse(S0) @ S1
    log = logm(delta)
    if np.max(np.abs(log.imag)) > 1e-8:
        raise ValueError("path samples too far apart to interpolate")
    return S0 @ expm(0.5 * log.real)


@dataclass(frozen=True)
class MetaplecticElement:
    """
    Element of Mp(n): projection `S` plus the sampled path used to lift it.

    Construct with `identity`, `from_path` or `from_matrix`; `sign = -1`
    selects the other lift of the same path endpoint.
    """

    S: np.ndarray
    path: np.ndarray = field(repr=False)
    branch: BranchState = BranchState()
    sign: int = 1

    @classmethod
    def identity(cls, n=1):
        eye = np.eye(2 * n)
        return cls(eye, eye[None], BranchState())

    @classmethod
    def from_path(cls, path, sign=1):
        path = np.asarray(path, dtype=float)
        root, steps, total = _track(path)
        branch = BranchState(
            value=complex(sign * root), step=steps, winding=int(np.floor(total / (2 * np.pi))), total_arg=total
        )
        return cls(path[-1].copy(), path, branch, sign)

    @classmethod
    def from_matrix(cls, S, sign=1, samples=64):
        """
        Lift along the polar path S_t = U_t P_t: P_t = P^t for the positive
        factor and U_t the unitary factor with eigen-angles in (-pi, pi]
        scaled by t.
        """
        S = _as_array(S)
        return cls.from_path(polar_path(S, samples), sign=sign)

    @property
    def n(self):
        return self.S.shape[0] // 2

    def unit_phase(self, M):
        """
        Phase u with S_hat phi_M = u phi_{alpha(S) M}, i.e. the unit-modulus
        version of det(A + B M)^{-1/2} on the tracked branch.
        """
        M = check_siegel(M)
        n = self.n
        root = self.branch.value
        # continue from M = iI to M along the segment inside the Siegel space
        s_prev, d_prev = 0.0, _det_AiB(self.S)
        stack = [1.0]
        while stack:
            s = stack[-1]
            Ms = (1 - s) * 1j * np.eye(n) + s * M
            d = _det_AiB(self.S, Ms)
            if abs(np.angle(d / d_prev)) >= MAX_ARG_STEP:
                stack.append(0.5 * (s_prev + s))
                continue
            stack.pop()
            root = _continue_root(root, d)
            s_prev, d_prev = s, d
        return complex(abs(root) / root)

    def inverse(self):
        path = np.array([symplectic_inverse(P) for P in self.path])
        return MetaplecticElement.from_path(path, sign=self.sign)

    def __matmul__(self, other):
        """Composition self o other, lifted along other's path followed by self's."""
        tail = np.array([P @ other.S for P in self.path])
        path = np.concatenate([other.path, tail[1:]], axis=0) if len(tail) > 1 else other.path
        return MetaplecticElement.from_path(path, sign=self.sign * other.sign)


def polar_path(S, samples=64):
    S = _as_array(S)
    n = S.shape[0] // 2
    w, V = np.linalg.eigh(S.T @ S)
    logP = 0.5 * (V * np.log(w)) @ V.T
    U = S @ ((V / np.sqrt(w)) @ V.T)
    u = U[:n, :n] + 1j * U[:n, n:]
    ev, W = np.linalg.eig(u)
    theta = np.angle(ev)
    Winv = np.linalg.inv(W)
    path = []
    for t in np.linspace(0.0, 1.0, samples + 1):
        ut = (W * np.exp(1j * t * theta)) @ Winv
        Ut = np.block([[ut.real, ut.imag], [-ut.imag, ut.real]])
        path.append(Ut @ expm(t * logP))
    path[0] = np.eye(2 * n)
    return np.array(path)


def apply_to_gaussian(elem, state):
    """
    S_hat c phi_{z0,M} = c u phi_{S z0, alpha(S) M}.

    The output is again a SqueezedState; its norm equals the input norm.
    """
    M_new = alpha(elem.S, state.M)
    u = elem.unit_phase(state.M)
    return state.replace(center=elem.S @ state.center, M=M_new, phase=state.phase * u)


def maslov_compose(W, Wp, tol=1e-10):
    """m(S_hat) = m + m' - Inert(P' + Q) mod 4 for S_hat = S_{W,m} S_{W',m'}."""
    R = Wp.P + W.Q
    ev = np.linalg.eigvalsh(0.5 * (R + R.T))
    if np.min(np.abs(ev)) < tol:
        raise DegenerateMaslovError("P' + Q is singular")
    return int(W.m + Wp.m - np.sum(ev < 0)) % 4


def _nearest_power_of_i(ratio, tol):
    k = int(np.round(np.angle(ratio) / (np.pi / 2))) % 4
    target = 1j**k
    if abs(ratio - target) > tol:
        raise PhaseInferenceError(f"inferred phase {ratio:.6f} is not a power of i (tol {tol})")
    return k, target


def _weyl_raw(S, psi, hbar, warn=True):
    """Quadrature of the Weyl integral without the i^nu factor (n = 1)."""
    S = _as_array(S)
    if S.shape != (2, 2):
        raise NotImplementedError("weyl_apply is implemented for n = 1 grids")
    MS = cayley_transform(S)
    a, b, c = MS[0, 0], MS[0, 1], MS[1, 1]
    detSI = abs(np.linalg.det(S - np.eye(2)))
    x = psi.coords(0)
    dy = psi.spacing[0]
    scale = max(1.0, float(np.max(np.abs(MS))))
    if abs(c) <= 1e-14 * scale:
        # p0-integral collapses to a delta at x + (b - 1/2) x0 = 0
        if abs(b - 0.5) <= 1e-14 * scale:
            raise SingularSMinusIError("degenerate Weyl kernel")
        x0 = x / (0.5 - b)
        vals = psi.interpolate(x - x0) * np.exp(0.5j * a * x0**2 / hbar) / (abs(b - 0.5) * np.sqrt(detSI))
        return psi.with_values(vals)
    X, Y = np.meshgrid(x, x, indexing="ij")
    x0 = X - Y
    beta = X + (b - 0.5) * x0
    if warn:
        support = np.abs(psi.values) > 1e-8 * np.max(np.abs(psi.values))
        dphase = np.abs(-a * x0 + (b - 0.5) * beta / c)[:, support] / hbar
        if dphase.size and np.max(dphase) * dy > np.pi / 4:
            warnings.warn(
                f"Weyl kernel phase changes by {np.max(dphase) * dy:.2f} rad per cell",
                UnderResolvedWarning,
                stacklevel=3,
            )
    kernel = np.exp(0.5j * (a * x0**2 - beta**2 / c) / hbar)
    pref = np.sqrt(1.0 / (-1j * c)) / (np.sqrt(2 * np.pi * hbar) * np.sqrt(detSI))
    return psi.with_values(pref * (kernel @ psi.values) * dy)


def weyl_apply(S, psi, hbar, element=None, probe=None, phase_tol=1e-3):
    """
    Apply S_hat through its Weyl representation, by quadrature.

    The integral over z0 of exp(i M_S z0.z0 / 2 hbar) T(z0) psi is evaluated
    with the momentum integral done exactly (Fresnel) and the position
    integral on the grid of `psi`. The i^nu factor is not applied; instead it
    is inferred by comparing with `apply_to_gaussian` on a probe Gaussian.

    Returns
    -------
    out : GridField
        Quadrature result without the i^nu factor.
    inferred_phase : complex
        i^nu, so that inferred_phase * out approximates S_hat psi.
    """
    S = _as_array(S)
    if element is None:
        element = MetaplecticElement.from_matrix(S)
    elif not np.allclose(element.S, S, atol=1e-10):
        raise ValueError("element does not project onto S")
    out = _weyl_raw(S, psi, hbar)
    if probe is None:
        mid = psi.origin[0] + 0.5 * psi.spacing[0] * (psi.shape[0] - 1)
        probe = SqueezedState.coherent([mid, 0.0], hbar)
    grid = psi.with_values(np.zeros(psi.shape))
    raw_probe = _weyl_raw(S, grid.with_values(probe(grid.coords(0))), hbar, warn=False).values
    exact = apply_to_gaussian(element, probe)(grid.coords(0))
    ratio = np.vdot(raw_probe, exact) / np.vdot(raw_probe, raw_probe)
    _, ph = _nearest_power_of_i(ratio, phase_tol)
    return out, ph
