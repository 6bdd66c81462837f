"""
Real symplectic linear algebra on R^{2n} with z = (x, p).

Block convention: S = [[A, B], [C, D]] acts on column vectors (x, p), so A
maps positions to positions and B momenta to positions.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

TOL_SYMPL = 1e-10
TOL_DET = 1e-12


class NotFreeError(ValueError):
    """Raised when a symplectic matrix has (numerically) singular B block."""


class SingularSMinusIError(ValueError):
    """Raised when det(S - I) vanishes, i.e. S has eigenvalue one."""


def J_matrix(n):
    """Standard symplectic matrix [[0, I], [-I, 0]] of size 2n."""
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.block([[zero, eye], [-eye, zero]])


def _split(z):
    z = np.asarray(z, dtype=float)
    if z.shape[-1] % 2:
        raise ValueError(f"phase-space vector has odd length {z.shape[-1]}")
    n = z.shape[-1] // 2
    return z[..., :n], z[..., n:]


def symplectic_form(z, zp):
    """
    sigma(z, z') = p.x' - p'.x

    Broadcasts over leading axes of `z` and `zp`.
    """
    z = np.asarray(z, dtype=float)
    zp = np.asarray(zp, dtype=float)
    if z.shape[-1] != zp.shape[-1]:
        raise ValueError(f"dimension mismatch: {z.shape[-1]} vs {zp.shape[-1]}")
    x, p = _split(z)
    xp, pp = _split(zp)
    return np.sum(p * xp, axis=-1) - np.sum(pp * x, axis=-1)


def symplectic_defect(S):
    """Max-norm of S^T J S - J."""
    S = np.asarray(S, dtype=float)
    n = S.shape[-1] // 2
    J = J_matrix(n)
    return float(np.max(np.abs(S.T @ J @ S - J)))


def is_symplectic(S, tol=TOL_SYMPL):
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {S.shape}")
    if S.shape[0] % 2:
        raise ValueError(f"symplectic matrices have even size, got {S.shape[0]}")
    return symplectic_defect(S) <= tol


@dataclass(frozen=True)
class SymplecticMatrix:
    """
    Validated element of Sp(n).

    Parameters
    ----------
    entries : array_like (2n, 2n)
        Real matrix with S^T J S = J up to `tol`.
    tol : float
        Validation tolerance on the max-norm defect.
    """

    entries: np.ndarray
    tol: float = TOL_SYMPL

    def __post_init__(self):
        S = np.array(self.entries, dtype=float)
        if not is_symplectic(S, self.tol):
            raise ValueError(
                f"matrix is not symplectic (defect {symplectic_defect(S):.3e} > {self.tol:.1e})"
            )
        S.setflags(write=False)
        object.__setattr__(self, "entries", S)

    @property
    def n(self):
        return self.entries.shape[0] // 2

    @property
    def blocks(self):
        return block_decompose(self.entries)[:4]

    def __matmul__(self, other):
        other = other.entries if isinstance(other, SymplecticMatrix) else other
        return self.entries @ other

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


def _as_array(S):
    return S.entries if isinstance(S, SymplecticMatrix) else np.asarray(S, dtype=float)


def block_decompose(S, tol_det=TOL_DET):
    """
    Split S into its n x n blocks.

    Returns
    -------
    A, B, C, D : ndarray
    is_free : bool
        True when |det B| exceeds `tol_det` (relative to the scale of S).
    """
    S = _as_array(S)
    n = S.shape[0] // 2
    A, B = S[:n, :n], S[:n, n:]
    C, D = S[n:, :n], S[n:, n:]
    scale = max(1.0, float(np.max(np.abs(S)))) ** n
    is_free = abs(np.linalg.det(B)) > tol_det * scale
    return A, B, C, D, is_free


@dataclass(frozen=True)
class GeneratingFunction:
    """
    Quadratic form W(x, x') = 1/2 P x.x - L x.x' + 1/2 Q x'.x'.

    `m` is the integer (mod 4) fixing the argument of det L; it is only
    meaningful when the form labels a metaplectic operator.
    """

    P: np.ndarray
    L: np.ndarray
    Q: np.ndarray
    m: int = 0

    def __post_init__(self):
        for name in ("P", "L", "Q"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        if not np.allclose(self.P, self.P.T, atol=1e-10):
            raise ValueError("P must be symmetric")
        if not np.allclose(self.Q, self.Q.T, atol=1e-10):
            raise ValueError("Q must be symmetric")
        if abs(np.linalg.det(self.L)) <= TOL_DET:
            raise ValueError("L must be invertible")
        object.__setattr__(self, "m", int(self.m) % 4)

    @property
    def n(self):
        return self.P.shape[0]


def generating_function_of(S, tol_det=TOL_DET):
    """
    Generating function of a free symplectic matrix.

    (x, p) = S (x', p') iff p = dW/dx and p' = -dW/dx'.
    """
    A, B, C, D, free = block_decompose(S, tol_det)
    if not free:
        raise NotFreeError("det B vanishes; S has no generating function")
    Binv = np.linalg.inv(B)
    P = D @ Binv
    Q = Binv @ A
    return GeneratingFunction(P=(P + P.T) / 2, L=Binv.T, Q=(Q + Q.T) / 2)


def eval_W(W, x, xp):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xp = np.atleast_1d(np.asarray(xp, dtype=float))
    return 0.5 * x @ W.P @ x - x @ W.L @ xp + 0.5 * xp @ W.Q @ xp


def grad_W(W, x, xp):
    """Return (dW/dx, dW/dx')."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xp = np.atleast_1d(np.asarray(xp, dtype=float))
    return W.P @ x - W.L @ xp, -W.L.T @ x + W.Q @ xp


def matrix_of_generating_function(W):
    """Free symplectic matrix generated by W (inverse of generating_function_of)."""
    # p' = L^T x - Q x'  =>  x = L^{-T}(p' + Q x');  p = P x - L x'
    LinvT = np.linalg.inv(W.L.T)
    A = LinvT @ W.Q
    B = LinvT
    C = W.P @ LinvT @ W.Q - W.L
    D = W.P @ LinvT
    return np.block([[A, B], [C, D]])


def cayley_transform(S, tol_det=TOL_DET, symmetrize=True):
    """
    Symplectic Cayley transform M_S = 1/2 J (S + I)(S - I)^{-1}.

    The result is real symmetric; by default it is symmetrised to remove
    rounding (pass ``symmetrize=False`` to inspect the raw product).
    """
    S = _as_array(S)
    n = S.shape[0] // 2
    eye = np.eye(2 * n)
    SmI = S - eye
    scale = max(1.0, float(np.max(np.abs(S)))) ** (2 * n)
    if abs(np.linalg.det(SmI)) <= tol_det * scale:
        raise SingularSMinusIError("S has eigenvalue 1; Cayley transform undefined")
    MS = 0.5 * J_matrix(n) @ (S + eye) @ np.linalg.inv(SmI)
    return 0.5 * (MS + MS.T) if symmetrize else MS


def random_symplectic(n, rng, scale=1.0):
    """exp(J K) for a random symmetric K with entries of size `scale`."""
    K = rng.normal(scale=scale, size=(2 * n, 2 * n))
    K = 0.5 * (K + K.T)
    return expm(J_matrix(n) @ K)


def symplectic_inverse(S):
    """S^{-1} = -J S^T J."""
    S = _as_array(S)
    J = J_matrix(S.shape[0] // 2)
    return -J @ S.T @ J


def reproject_symplectic(S, tol=1e-14, maxiter=8):
    """
    Pull a nearly symplectic matrix back onto Sp(n).

    Each step right-multiplies by I - (D - I)/2 with D = S^{-1}_sympl S;
    the correction lies in the symplectic Lie algebra to first order, so
    the defect contracts quadratically.
    """
    S = np.array(_as_array(S), dtype=float)
    n = S.shape[0] // 2
    J = J_matrix(n)
    eye = np.eye(2 * n)
    for _ in range(maxiter):
        D = -J @ S.T @ J @ S
        if np.max(np.abs(D - eye)) <= tol:
            break
        S = S @ (eye - 0.5 * (D - eye))
    return S
