"""
Self-test: convention audits, identity-level checks and quadrature smoke
tests, summarised in a report whose payload is byte-stable across runs.
"""

import numpy as np

from .flows import builtin
from .gaussians import (
    SqueezedState,
    audit_fm,
    audit_wsqu,
    fresnel_sqrt,
    gaussian_inner,
    wigner,
    wigner_moyal_cross,
)
from .grid import position_grid
from .metaplectic import MetaplecticElement, alpha, apply_to_gaussian, weyl_apply
from .oracles import fresnel_lhs, l2_inner_quadrature, wavepacket_quadrature, wigner_moyal_quadrature
from .phase_space import audit_hwp, phase_space_grid, t_ph, transform_gaussian
from .propagator import propagate_coherent
from .symplectic import J_matrix, cayley_transform, is_symplectic, random_symplectic

SMOKE_TOL = 1e-6


def _check(name, value, tol):
    value = float(value)
    return {"name": name, "value": value, "tol": tol, "pass": bool(value <= tol)}


def _trivial_checks():
    out = []
    J = J_matrix(2)
    out.append(_check("J squared is -I", np.max(np.abs(J @ J + np.eye(4))), 0.0))
    out.append(_check("identity is symplectic", 0.0 if is_symplectic(np.eye(4)) else 1.0, 0.0))
    M = np.array([[0.3 + 1.2j, 0.1], [0.1, -0.4 + 0.9j]])
    out.append(_check("alpha(I) M = M", np.max(np.abs(alpha(np.eye(4), M) - M)), 1e-15))
    out.append(_check("Cayley transform of -I vanishes", np.max(np.abs(cayley_transform(-np.eye(2)))), 1e-15))
    s = SqueezedState([0.4, -0.3], 0.2 + 1.1j, hbar=0.5)
    res = propagate_coherent(builtin("harmonic"), s, 0.0, 1e-3)
    st = res.state_out
    err = max(np.max(np.abs(st.center - s.center)), np.max(np.abs(st.M - s.M)), abs(st.phase - s.phase))
    out.append(_check("propagation over T = 0 is the identity", err, 1e-15))
    G = phase_space_grid(0.5, count=32)
    F = transform_gaussian(s, None, G)
    out.append(_check("T_ph(0) is the identity", np.max(np.abs(t_ph([0.0, 0.0], F).values - F.values)), 0.0))
    e = MetaplecticElement.identity(1)
    out.append(_check("identity lift has unit phase", abs(e.unit_phase(s.M) - 1.0), 1e-15))
    return out


def _smoke_checks(seed):
    rng = np.random.default_rng(seed)
    out = []
    K = 1.0 + 1.0j
    xi = 0.3
    closed = fresnel_sqrt(np.array([[K]])) * np.exp(-xi * xi / (2 * K))
    out.append(_check("Fresnel integral", abs(fresnel_lhs(xi, K) - closed), SMOKE_TOL))

    a = SqueezedState.from_XY(1.3, 0.4, [0.2, -0.5])
    b = SqueezedState.from_XY(0.7, -0.6, [-0.3, 0.1])
    zs = rng.uniform(-1.5, 1.5, size=(5, 2))
    w_closed = wigner_moyal_cross(a, b, zs)
    w_quad = wigner_moyal_quadrature(a, b, zs, a.hbar)
    out.append(_check("cross-Wigner closed form vs quadrature", np.max(np.abs(w_closed - w_quad)), SMOKE_TOL))
    out.append(
        _check(
            "Wigner closed form vs quadrature",
            np.max(np.abs(wigner(a, zs) - wigner_moyal_quadrature(a, a, zs, a.hbar).real)),
            SMOKE_TOL,
        )
    )
    out.append(_check("Gaussian inner product vs quadrature", abs(gaussian_inner(a, b) - l2_inner_quadrature(a, b)), SMOKE_TOL))

    window = SqueezedState.standard(1, 1.0)
    F = transform_gaussian(a, window, phase_space_grid(1.0, count=16))
    pts = np.stack([c.ravel() for c in F.mesh()], axis=-1)[::37]
    direct = wavepacket_quadrature(a, window, pts, 1.0)
    via_w = F.values.ravel()[::37]
    out.append(_check("wave-packet transform via cross-Wigner", np.max(np.abs(direct - via_w)), SMOKE_TOL))

    S = random_symplectic(1, rng, 0.4)
    g = position_grid(0.0, 8.0, 2048)
    probe = SqueezedState.coherent([0.0, 0.0], 1.0)
    raw, ph = weyl_apply(S, g.with_values(probe(g.coords(0))), 1.0)
    exact = g.with_values(apply_to_gaussian(MetaplecticElement.from_matrix(S), probe)(g.coords(0)))
    out.append(_check("Weyl quadrature vs Siegel action", (raw * ph - exact).norm() / exact.norm(), 1e-4))
    return out


def _conclusive(res):
    return bool(res["conclusive"])


def run_selftest(audit_tol=1e-6, seed=20240611):
    """
    Run every audit and check; returns (report, ok).

    `audit_tol` is the acceptance tolerance handed to the convention audits;
    an absurdly small value forces them to be inconclusive (negative control).
    """
    fm = audit_fm(tol=audit_tol)
    ws = audit_wsqu(tol=audit_tol)
    hw = audit_hwp(tol=audit_tol)
    audits = {"fm": fm, "wsqu": ws, "hwp": hw}
    conventions = {
        "fm": fm.get("selected"),
        "wsqu": ws.get("selected"),
        "hwp": hw.get("hwp_convention"),
    }
    checks = []
    all_conclusive = all(_conclusive(a) for a in audits.values())
    if all_conclusive:
        checks += _trivial_checks()
        checks += _smoke_checks(seed)
    report = {
        "audits": audits,
        "conventions": conventions,
        "all_conclusive": all_conclusive,
        "checks": checks,
    }
    ok = all_conclusive and all(c["pass"] for c in checks)
    report["ok"] = ok
    return report, ok
