import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nearby_orbit.flows import (
    BUILTINS,
    DivergedError,
    HamiltonianModel,
    action_phase,
    builtin,
    flow,
    separable,
    truncated_hamiltonian,
    variational_flow,
)
from nearby_orbit.symplectic import symplectic_defect

points = st.tuples(st.floats(-2, 2), st.floats(-2, 2)).map(np.array)


# flow


def test_harmonic_quarter_period():
    z = flow(builtin("harmonic"), [1.0, 0.0], np.pi / 2, 1e-3).final
    np.testing.assert_allclose(z, [0.0, -1.0], atol=1e-8)


def test_free_motion():
    z = flow(builtin("free"), [0.0, 1.0], 2.0, 0.1).final
    np.testing.assert_allclose(z, [2.0, 1.0], atol=1e-14)


def test_linear_potential():
    z = flow(builtin("linear"), [0.0, 0.0], 1.0, 1e-2).final
    np.testing.assert_allclose(z, [-0.5, -1.0], atol=1e-10)


def test_backward_integration():
    z = flow(builtin("harmonic"), [1.0, 0.0], -np.pi / 2, 1e-3).final
    np.testing.assert_allclose(z, [0.0, 1.0], atol=1e-8)


def test_zero_time_and_step_layout():
    tr = flow(builtin("harmonic"), [1.0, 0.0], 0.0, 1e-3)
    assert tr.times.tolist() == [0.0]
    tr = flow(builtin("harmonic"), [1.0, 0.0], 1.0, 0.3)
    assert len(tr.times) == 5 and tr.times[-1] == pytest.approx(1.0)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_reported():
    H = separable("unstable", lambda x: -(x**4), lambda x: -4 * x**3, lambda x: -12 * x**2)
    with pytest.raises(DivergedError) as info:
        flow(H, [2.0, 0.0], 10.0, 1e-2)
    assert 0 < info.value.t_last < 10.0


def test_bad_step_rejected():
    with pytest.raises(ValueError):
        flow(builtin("harmonic"), [1.0, 0.0], 1.0, 0.0)


def test_batched_flow_matches_single():
    H = builtin("quartic")
    zs = np.array([[1.0, 0.0], [0.3, -0.4]])
    batch = flow(H, zs, 0.7, 1e-2).final
    for k in range(2):
        np.testing.assert_allclose(batch[k], flow(H, zs[k], 0.7, 1e-2).final, atol=1e-15)


def test_rk4_order():
    H = builtin("harmonic")
    dts = np.array([1e-2, 5e-3, 2.5e-3])
    T = 3.0
    exact = np.array([np.cos(T), -np.sin(T)])
    errs = [np.linalg.norm(flow(H, [1.0, 0.0], T, dt).final - exact) for dt in dts]
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert abs(slope - 4.0) <= 0.2


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_energy_drift(name):
    H = builtin(name)
    z0 = np.array([0.8, 0.3])
    tr = flow(H, z0, 10.0, 1e-3)
    assert np.max(np.abs(H.value(tr.points, 0.0) - H.value(z0, 0.0))) <= 1e-8


# variational flow


def test_harmonic_monodromy_is_rotation():
    tr = variational_flow(builtin("harmonic"), [0.3, 0.8], 2.0, 1e-3)
    for t, S in zip(tr.times[::250], tr.monodromy[::250]):
        R = np.array([[np.cos(t), np.sin(t)], [-np.sin(t), np.cos(t)]])
        np.testing.assert_allclose(S, R, atol=1e-8)


def test_linear_potential_monodromy_is_shear():
    tr = variational_flow(builtin("linear"), [0.0, 0.0], 1.5, 1e-2)
    np.testing.assert_allclose(tr.monodromy[-1], [[1.0, 1.5], [0.0, 1.0]], atol=1e-13)


def test_quartic_linearisation_is_second_order():
    H = builtin("quartic")
    z0 = np.array([1.0, 0.2])
    tr = variational_flow(H, z0, 1.0, 1e-3)
    direction = np.array([0.6, -0.8])
    rem = []
    for d in (1e-2, 5e-3, 2.5e-3):
        moved = flow(H, z0 + d * direction, 1.0, 1e-3).final
        rem.append(np.linalg.norm(moved - tr.final - tr.monodromy[-1] @ (d * direction)))
    ratios = np.array(rem[:-1]) / np.array(rem[1:])
    np.testing.assert_allclose(ratios, 4.0, rtol=0.05)


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_monodromy_symplectic_everywhere(name):
    tr = variational_flow(builtin(name), [0.9, -0.4], 5.0, 1e-3)
    assert max(symplectic_defect(S) for S in tr.monodromy) <= 1e-6
    assert tr.points[0].tolist() == [0.9, -0.4]
    np.testing.assert_array_equal(tr.monodromy[0], np.eye(2))
    assert tr.gamma[0] == 0.0


def test_two_dimensional_monodromy():
    tr = variational_flow(builtin("quartic", n=2), [1.0, 0.5, 0.0, 0.3], 2.0, 1e-3)
    assert tr.monodromy.shape == (2001, 4, 4)
    assert symplectic_defect(tr.monodromy[-1]) <= 1e-6


def test_hessian_fallback_matches_analytic():
    ref = builtin("pendulum")
    bare = HamiltonianModel("pendulum-fd", 1, ref.value, ref.gradient)
    z = np.array([[0.4, 1.1], [-2.0, 0.3]])
    np.testing.assert_allclose(bare.hess(z, 0.0), ref.hess(z, 0.0), atol=1e-8)
    a = variational_flow(bare, [1.0, 0.0], 2.0, 1e-2).monodromy[-1]
    b = variational_flow(ref, [1.0, 0.0], 2.0, 1e-2).monodromy[-1]
    np.testing.assert_allclose(a, b, atol=1e-8)


def test_wrong_gradient_rejected_at_registration():
    with pytest.raises(ValueError):
        HamiltonianModel("bad", 1, lambda z, t: z[..., 0] ** 2, lambda z, t: np.zeros_like(z))


def test_unknown_builtin():
    with pytest.raises(ValueError):
        builtin("morse")


# action phase


@settings(max_examples=20)
@given(points)
def test_gamma_vanishes_for_harmonic(z0):
    tr = variational_flow(builtin("harmonic"), z0, 3.0, 1e-2)
    assert np.max(np.abs(tr.gamma)) <= 1e-8


@settings(max_examples=20)
@given(points)
def test_gamma_vanishes_for_free_particle(z0):
    tr = variational_flow(builtin("free"), z0, 3.0, 1e-2)
    assert np.max(np.abs(tr.gamma)) <= 1e-12


def test_gamma_linear_potential():
    tr = variational_flow(builtin("linear"), [0.0, 0.0], 2.0, 1e-3)
    np.testing.assert_allclose(tr.gamma, tr.times**3 / 12, atol=1e-8)


@settings(max_examples=8)
@given(points, st.floats(0.2, 1.0), st.floats(0.2, 1.0))
def test_gamma_additive(z0, t1, t2):
    H = builtin("quartic")
    dt = 1e-3
    t1 = round(t1 / dt) * dt
    t2 = round(t2 / dt) * dt
    whole = variational_flow(H, z0, t1 + t2, dt).gamma[-1]
    first = variational_flow(H, z0, t1, dt)
    second = variational_flow(H, first.final, t2, dt).gamma[-1]
    assert whole == pytest.approx(first.gamma[-1] + second, abs=1e-8)


def test_gamma_with_two_samples():
    tr = flow(builtin("linear"), [0.0, 0.0], 0.1, 0.1)
    g = action_phase(tr, builtin("linear"))
    assert g.shape == (2,) and g[0] == 0.0


# truncated Hamiltonian


@settings(max_examples=20)
@given(points, points)
def test_truncation_exact_for_quadratic(z0, z):
    H = builtin("harmonic", omega=1.3)
    Hz = truncated_hamiltonian(H, z0, 0.7)
    assert Hz(z) == pytest.approx(H.value(z, 0.7), abs=1e-10)


def test_truncation_matches_at_orbit_point():
    H = builtin("pendulum")
    z0 = np.array([0.5, 0.5])
    zt = flow(H, z0, 1.2, 1e-3).final
    assert truncated_hamiltonian(H, z0, 1.2)(zt) == pytest.approx(H.value(zt, 1.2), abs=1e-14)


def test_truncation_remainder_is_third_order():
    H = builtin("quartic")
    z0 = np.array([1.0, 0.0])
    Hz = truncated_hamiltonian(H, z0, 0.5)
    zt = flow(H, z0, 0.5, 1e-3).final
    direction = np.array([1.0, 0.3])
    rem = [abs(H.value(zt + d * direction, 0.5) - Hz(zt + d * direction)) for d in (0.04, 0.02, 0.01)]
    ratios = np.array(rem[:-1]) / np.array(rem[1:])
    np.testing.assert_allclose(ratios, 8.0, rtol=0.1)


# export


def test_trajectory_csv(tmp_path):
    tr = variational_flow(builtin("harmonic"), [1.0, 0.0], 0.01, 1e-3)
    tr.to_csv(tmp_path / "t.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == ["t", "x0", "p0", "S_00", "S_01", "S_10", "S_11", "gamma"]
    assert len(rows) == 12
    assert float(rows[-1][0]) == pytest.approx(0.01)
