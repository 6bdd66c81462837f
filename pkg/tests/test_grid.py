import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nearby_orbit.grid import GridField, position_grid

entries = st.complex_numbers(max_magnitude=1e6, allow_nan=False, allow_infinity=False)


@given(arrays(np.complex128, st.tuples(st.integers(1, 6), st.integers(1, 5)), elements=entries))
def test_text_round_trip_is_exact(values):
    g = GridField(values, (-1.25, 0.1), (0.3, 1.0 / 3.0), ("x", "p"))
    back = GridField.loads(g.dumps())
    np.testing.assert_array_equal(back.values, g.values)
    assert back.origin == g.origin and back.spacing == g.spacing and back.axes == g.axes


def test_header_format():
    g = GridField(np.zeros((2, 3)), (-1.0, -2.0), (0.5, 0.25), ("x", "p"))
    assert g.header() == "# axis=x,p origin=-1.0,-2.0 spacing=0.5,0.25 count=2,3"
    rows = g.dumps().splitlines()
    assert rows[1] == "0 0 0.0 0.0" and rows[-1] == "1 2 0.0 0.0" and len(rows) == 7


def test_load_rejects_missing_header():
    with pytest.raises(ValueError):
        GridField.loads("0 1.0 0.0\n")


def test_validation():
    with pytest.raises(ValueError):
        GridField(np.zeros(4), (0.0,), (0.0,))
    with pytest.raises(ValueError):
        GridField(np.zeros(4), (0.0, 0.0), (1.0,))


def test_symmetric_and_position_grid():
    g = GridField.symmetric(4.0, 8)
    np.testing.assert_allclose(g.coords(0), np.arange(-4.0, 4.0, 1.0))
    p = position_grid(1.0, 4.0, 8)
    np.testing.assert_allclose(p.coords(0), g.coords(0) + 1.0)


def test_inner_and_norm():
    g = GridField.symmetric(10.0, 2048)
    x = g.coords(0)
    a = g.with_values(np.exp(-x * x / 2))
    b = g.with_values(np.exp(-x * x / 2 + 1j * x))
    assert a.norm() ** 2 == pytest.approx(np.sqrt(np.pi), rel=1e-12)
    assert a.inner(b) == pytest.approx(np.sqrt(np.pi) * np.exp(-0.25), rel=1e-10)
    with pytest.raises(ValueError):
        a.inner(GridField.symmetric(9.0, 2048))


def test_arithmetic_keeps_grid_and_meta():
    g = GridField.symmetric(1.0, 4).with_values(np.ones(4), tag="a")
    h = 2 * g - g
    np.testing.assert_array_equal(h.values, np.ones(4))
    assert h.meta["tag"] == "a"


def test_interpolation_of_smooth_field():
    g = GridField.symmetric(6.0, 256)
    g = g.with_values(np.exp(-g.coords(0) ** 2) * (1 + 1j))
    pts = np.array([-1.234, 0.0, 0.77, 10.0])
    out = g.interpolate(pts)
    np.testing.assert_allclose(out[:3], np.exp(-pts[:3] ** 2) * (1 + 1j), atol=1e-6)
    assert out[3] == 0


def test_edge_mass():
    g = GridField.symmetric(1.0, 16)
    v = np.zeros(16)
    v[0] = 1.0
    v[8] = 1.0
    assert g.with_values(v).edge_mass() == pytest.approx(0.5)
    assert g.edge_mass() == 0.0


def test_from_function_two_axes():
    g = GridField.from_function(lambda x, p: x + 1j * p, (0.0, 0.0), (1.0, 2.0), (3, 2), axes=("x", "p"))
    assert g.values[2, 1] == 2 + 2j
