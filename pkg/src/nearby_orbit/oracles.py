"""
Brute-force quadrature oracles.

Nothing in this module knows about the closed-form Gaussian calculus; every
routine takes plain callables and integrates numerically, so it can arbitrate
between candidate closed forms.
"""

import numpy as np
from scipy.integrate import quad


def wigner_moyal_quadrature(psi, phi, z, hbar, half_width=None, count=4096):
    """
    Cross Wigner-Moyal transform of two 1D wavefunctions by the midpoint rule.

    W(psi, phi)(x, p) = (2 pi hbar)^{-1} int exp(-i p y / hbar)
                        psi(x + y/2) conj(phi(x - y/2)) dy

    Parameters
    ----------
    psi, phi : callable
        Vectorised functions of position.
    z : array_like (..., 2)
        Phase-space points (x, p).
    half_width : float, optional
        Integration range [-Y, Y] in y; defaults to 40 sqrt(hbar).
    """
    z = np.asarray(z, dtype=float)
    if half_width is None:
        half_width = 40.0 * np.sqrt(hbar)
    dy = 2.0 * half_width / count
    y = -half_width + (np.arange(count) + 0.5) * dy
    x = z[..., 0:1]
    p = z[..., 1:2]
    integrand = np.exp(-1j * p * y / hbar) * psi(x + 0.5 * y) * np.conj(phi(x - 0.5 * y))
    return integrand.sum(axis=-1) * dy / (2.0 * np.pi * hbar)


def fresnel_lhs(xi, K, hbar=1.0):
    """
    (2 pi hbar)^{-1/2} int exp(-i xi x / hbar) exp(-K x^2 / (2 hbar)) dx for scalar K.

    Adaptive quadrature over the real line; requires Re K > 0.
    """

    def f(x, part):
        v = np.exp(-1j * xi * x / hbar - K * x * x / (2 * hbar))
        return v.real if part == 0 else v.imag

    re = quad(f, -np.inf, np.inf, args=(0,), epsabs=1e-13, epsrel=1e-12, limit=400)[0]
    im = quad(f, -np.inf, np.inf, args=(1,), epsabs=1e-13, epsrel=1e-12, limit=400)[0]
    return (re + 1j * im) / np.sqrt(2 * np.pi * hbar)


def l2_inner_quadrature(f, g, center=0.0, half_width=20.0, count=8192):
    """int f conj(g) dx by the midpoint rule on [center - L, center + L]."""
    dx = 2.0 * half_width / count
    x = center - half_width + (np.arange(count) + 0.5) * dx
    return complex(np.sum(f(x) * np.conj(g(x))) * dx)


def phase_space_integral(f, half_width, count):
    """Midpoint rule of a vectorised f(x, p) over [-L, L]^2."""
    d = 2.0 * half_width / count
    u = -half_width + (np.arange(count) + 0.5) * d
    X, P = np.meshgrid(u, u, indexing="ij")
    return complex(np.sum(f(X, P)) * d * d)


def wavepacket_quadrature(psi, phi, z, hbar, half_width=None, count=4096, center=0.0):
    """
    Wave-packet transform of a 1D wavefunction at scattered points z = (x, p):

        (2 pi hbar)^{-1/2} exp(i p x / 2 hbar) int exp(-i p x' / hbar) psi(x') conj(phi(x - x')) dx'

    by the midpoint rule on [center - L, center + L] (default L = 40 sqrt(hbar)).
    """
    z = np.asarray(z, dtype=float)
    if half_width is None:
        half_width = 40.0 * np.sqrt(hbar)
    dx = 2.0 * half_width / count
    xp = center - half_width + (np.arange(count) + 0.5) * dx
    x = z[..., 0:1]
    p = z[..., 1:2]
    integrand = np.exp(-1j * p * xp / hbar) * psi(xp) * np.conj(phi(x - xp))
    pref = np.exp(0.5j * z[..., 1] * z[..., 0] / hbar) / np.sqrt(2 * np.pi * hbar)
    return pref * integrand.sum(axis=-1) * dx
