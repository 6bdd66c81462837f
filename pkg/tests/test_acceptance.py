"""
Acceptance criteria, each at its stated tolerance and runtime budget.

Every test records one (criterion, ok, detail) line before asserting, and
the lines are printed in a summary section at the end of the run.
"""

import json
import time
import warnings

import numpy as np
import pytest

from helpers import admissible_symplectic, random_1d_state, random_siegel
from nearby_orbit.cli import run_selftest_cli
from nearby_orbit.flows import builtin
from nearby_orbit.gaussians import SqueezedState, g_matrix, gaussian_inner, is_siegel, to_grid, wigner, wigner_moyal_cross
from nearby_orbit.grid import position_grid
from nearby_orbit.metaplectic import MetaplecticElement, alpha, apply_to_gaussian, weyl_apply
from nearby_orbit.oracles import wigner_moyal_quadrature
from nearby_orbit.phase_space import (
    coherent_norm_integral,
    phase_space_grid,
    ps_reconstruct,
    t_ph,
    transform_gaussian,
    u_ph_propagate,
    wavepacket_transform,
)
from nearby_orbit.propagator import compare_with_reference, error_vs_reference, propagate_coherent
from nearby_orbit.reference import auto_config, split_step
from nearby_orbit.symplectic import cayley_transform, random_symplectic, symplectic_defect

pytestmark = pytest.mark.acceptance


def record(log, label, checks, elapsed, budget):
    """checks: list of (name, value, ok). Appends one line and returns overall ok."""
    checks = checks + [("runtime [s]", round(elapsed, 2), elapsed < budget)]
    ok = all(c[2] for c in checks)
    detail = "; ".join(f"{n} = {v:.3g}" if isinstance(v, float) else f"{n} = {v}" for n, v, _ in checks)
    log.append((label, ok, detail))
    return ok, checks


def test_1_quadratic_exactness(acceptance_log):
    t0 = time.perf_counter()
    s = SqueezedState.coherent([1.0, 0.0], 0.1)
    _, err, _, _ = compare_with_reference(builtin("harmonic"), s, 2 * np.pi, 1e-3, n_samples=8)
    ok, checks = record(
        acceptance_log,
        "1 quadratic exactness",
        [("max L2 error over 8 times", float(err.max()), bool(err.max() <= 1e-4)), ("samples", len(err), len(err) == 8)],
        time.perf_counter() - t0,
        10.0,
    )
    assert ok, checks


def test_2_sqrt_hbar_law(acceptance_log):
    t0 = time.perf_counter()
    table = error_vs_reference(builtin("quartic"), [1.0, 0.0], 1j, [0.2, 0.1, 0.05, 0.025], 1.0, 1e-3, n_samples=8)
    ok, checks = record(
        acceptance_log,
        "2 sqrt(hbar) law",
        [
            ("slope", float(table.slope), bool(0.35 <= table.slope <= 0.75)),
            ("monotone within 10%", bool(table.monotone), bool(table.monotone)),
        ],
        time.perf_counter() - t0,
        120.0,
    )
    assert ok, checks


def test_3_gaussian_calculus_oracles(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    hbar = 1.0
    worst_w = worst_c = 0.0
    for _ in range(20):
        a, b = random_1d_state(rng, hbar), random_1d_state(rng, hbar)
        zs = rng.uniform(-2.0, 2.0, size=(100, 2))
        worst_c = max(worst_c, float(np.max(np.abs(wigner_moyal_cross(a, b, zs) - wigner_moyal_quadrature(a, b, zs, hbar)))))
        worst_w = max(worst_w, float(np.max(np.abs(wigner(a, zs) - wigner_moyal_quadrature(a, a, zs, hbar)))))
    ok, checks = record(
        acceptance_log,
        "3 Gaussian calculus oracles",
        [("Wigner max abs error", worst_w, worst_w <= 1e-6), ("cross-Wigner max abs error", worst_c, worst_c <= 1e-6)],
        time.perf_counter() - t0,
        30.0,
    )
    assert ok, checks


def test_4_symplectic_siegel_suite(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    g_def = cocycle = cayley = 0.0
    siegel = True
    for k in range(500):
        n = 1 + k % 3
        M = random_siegel(rng, n)
        S, Sp = random_symplectic(n, rng, 0.5), random_symplectic(n, rng, 0.5)
        g_def = max(g_def, symplectic_defect(g_matrix(M.imag, -M.real)))
        siegel &= bool(is_siegel(alpha(S, M)))
        cocycle = max(cocycle, float(np.max(np.abs(alpha(S @ Sp, M) - alpha(S, alpha(Sp, M))))))
        MS = cayley_transform(S, symmetrize=False)
        cayley = max(cayley, float(np.max(np.abs(MS - MS.T))))
    ok, checks = record(
        acceptance_log,
        "4 symplectic/Siegel suite",
        [
            ("G symplectic defect", g_def, g_def <= 1e-10),
            ("alpha(S) M in Siegel space", siegel, siegel),
            ("cocycle residual", cocycle, cocycle <= 1e-9),
            ("Cayley asymmetry", cayley, cayley <= 1e-10),
        ],
        time.perf_counter() - t0,
        5.0,
    )
    assert ok, checks


def test_5_weyl_representation(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    # fine enough that the kernel-resolution warning stays silent
    g = position_grid(0.0, 6.0, 2048)
    probe = SqueezedState.coherent([0.0, 0.0], 1.0)
    psi = to_grid(probe, g)
    worst = worst_phase = 0.0
    for _ in range(20):
        S = admissible_symplectic(rng)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            raw, ph = weyl_apply(S, psi, 1.0)
        exact = to_grid(apply_to_gaussian(MetaplecticElement.from_matrix(S), probe), g)
        ratio = exact.inner(raw) / raw.norm() ** 2
        worst_phase = max(worst_phase, abs(ratio - ph))
        worst = max(worst, (raw * ph - exact).norm() / exact.norm())
    ok, checks = record(
        acceptance_log,
        "5 Weyl representation",
        [("distance of unit phase to i^k", worst_phase, worst_phase <= 1e-3), ("relative L2 mismatch", worst, worst <= 1e-4)],
        time.perf_counter() - t0,
        60.0,
    )
    assert ok, checks


def test_6_phase_space_layer(acceptance_log):
    t0 = time.perf_counter()
    hbar = 0.1
    z0 = np.array([0.8, 0.0])
    grid = phase_space_grid(hbar, radius=1.0)
    rng = np.random.default_rng(6)

    a, b = random_1d_state(rng, hbar), random_1d_state(rng, hbar)
    xg = position_grid(0.0, 4.0, 1024)
    Ua = wavepacket_transform(to_grid(a, xg), grid=grid, hbar=hbar)
    Ub = wavepacket_transform(to_grid(b, xg), grid=grid, hbar=hbar)
    parseval = max(abs(Ua.inner(Ub) - gaussian_inner(a, b)), abs(Ua.norm() ** 2 - 1.0))

    w = rng.uniform(-0.5, 0.5, 2)
    x = xg.coords(0)
    shifted = xg.with_values(np.exp(1j * (w[1] * x - 0.5 * w[1] * w[0]) / hbar) * a(x - w[0]))
    intertwining = (t_ph(w, Ua) - wavepacket_transform(shifted, grid=grid, hbar=hbar)).norm()

    propa = {}
    for name in ("harmonic", "quartic"):
        H = builtin(name)
        s = SqueezedState.coherent(z0, hbar)
        out = u_ph_propagate(H, transform_gaussian(s, grid=grid), z0, 0.5, 1e-3)
        lifted = transform_gaussian(propagate_coherent(H, s, 0.5, 1e-3).state_out, grid=grid)
        propa[name] = (out - lifted).norm() / lifted.norm()

    F = transform_gaussian(a, grid=grid)
    recon = (ps_reconstruct(F) - F).norm() / F.norm()
    norm_id = abs(coherent_norm_integral(F) - F.norm() ** 2)

    ok, checks = record(
        acceptance_log,
        "6 phase-space layer",
        [
            ("isometry", float(parseval), parseval <= 1e-4),
            ("intertwining", float(intertwining), intertwining <= 1e-3),
            ("propagator commutation, harmonic", float(propa["harmonic"]), propa["harmonic"] <= 1e-3),
            ("propagator commutation, quartic", float(propa["quartic"]), propa["quartic"] <= 1e-3),
            ("reconstruction", float(recon), recon <= 1e-3),
            ("norm identity", float(norm_id), norm_id <= 1e-3),
        ],
        time.perf_counter() - t0,
        120.0,
    )
    assert ok, checks


def test_7_double_cover(acceptance_log):
    t0 = time.perf_counter()
    hbar = 0.1
    H = builtin("harmonic")
    s = SqueezedState.coherent([1.0, 0.0], hbar)
    res = propagate_coherent(H, s, 2 * np.pi, 1e-3)
    rel = gaussian_inner(res.state_out, s)
    cfg = auto_config(hbar, H.potential, 2 * np.pi, dt=1e-3)
    ref, _ = split_step(to_grid(s, cfg.grid()), cfg)
    ref_rel = ref.inner(to_grid(s, ref))
    ok, checks = record(
        acceptance_log,
        "7 double cover",
        [
            ("|phase + 1|", float(abs(rel + 1.0)), abs(rel + 1.0) <= 1e-6),
            ("mismatch with reference phase", float(abs(rel - ref_rel)), abs(rel - ref_rel) <= 1e-3),
        ],
        time.perf_counter() - t0,
        10.0,
    )
    assert ok, checks


def test_8_determinism(acceptance_log, tmp_path):
    t0 = time.perf_counter()
    payloads = []
    for d in ("a", "b"):
        code = run_selftest_cli(tmp_path / d)
        doc = json.loads((tmp_path / d / "selftest.json").read_text())
        doc.pop("timestamp")
        payloads.append((code, json.dumps(doc, sort_keys=True)))
    same = payloads[0][1] == payloads[1][1]
    ok, checks = record(
        acceptance_log,
        "8 determinism",
        [
            ("identical payloads", same, same),
            ("exit codes", f"{payloads[0][0]},{payloads[1][0]}", payloads[0][0] == payloads[1][0] == 0),
        ],
        time.perf_counter() - t0,
        60.0,
    )
    assert ok, checks
