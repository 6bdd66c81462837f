"""
Uniform rectangular grids carrying complex samples.

Text format (one file per field)::

    # axis=x,p origin=-6.0,-6.0 spacing=0.09375,0.09375 count=128,128
    0 0 1.2e-17 -3.4e-18
    0 1 ...

Header keys are comma-separated per axis; each following row holds the
integer index along every axis (C order), then the real and imaginary part.
Floats are written with ``repr`` so a save/load round trip is exact.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GridField:
    """
    Complex samples on a uniform grid.

    Parameters
    ----------
    values : ndarray
        Complex array; one array axis per grid axis.
    origin : tuple of float
        Coordinate of index 0 along each axis.
    spacing : tuple of float
        Positive step per axis.
    axes : tuple of str
        Axis roles, ``("x",)`` for wavefunctions or ``("x", "p")`` for
        phase-space fields.
    meta : dict
        Free-form metadata (window, conventions); not serialised.
    """

    values: np.ndarray
    origin: tuple
    spacing: tuple
    axes: tuple = ("x",)
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "origin", tuple(float(o) for o in np.atleast_1d(self.origin)))
        object.__setattr__(self, "spacing", tuple(float(s) for s in np.atleast_1d(self.spacing)))
        object.__setattr__(self, "axes", tuple(self.axes))
        if not (len(self.origin) == len(self.spacing) == len(self.axes) == values.ndim):
            raise ValueError("origin, spacing, axes and values must agree on dimension")
        if any(s <= 0 for s in self.spacing):
            raise ValueError("grid spacing must be positive")

    @classmethod
    def from_function(cls, f, origin, spacing, count, axes=("x",), **meta):
        """Sample a vectorised callable ``f(*coords)`` on the grid."""
        tmp = cls(np.zeros(tuple(np.atleast_1d(count)), dtype=complex), origin, spacing, axes)
        return tmp.with_values(f(*tmp.mesh()), **meta)

    @classmethod
    def symmetric(cls, half_width, count, values=None, axes=("x",)):
        """Grid on [-L, L) per axis with `count` points (periodic convention)."""
        half_width = np.broadcast_to(np.asarray(half_width, dtype=float), (len(axes),))
        count = np.broadcast_to(np.asarray(count, dtype=int), (len(axes),))
        spacing = 2 * half_width / count
        if values is None:
            values = np.zeros(tuple(count), dtype=complex)
        return cls(values, tuple(-half_width), tuple(spacing), axes)

    @property
    def shape(self):
        return self.values.shape

    @property
    def ndim(self):
        return self.values.ndim

    @property
    def cell(self):
        return float(np.prod(self.spacing))

    def coords(self, axis=0):
        return self.origin[axis] + self.spacing[axis] * np.arange(self.shape[axis])

    def mesh(self):
        return np.meshgrid(*(self.coords(a) for a in range(self.ndim)), indexing="ij")

    def with_values(self, values, **meta):
        values = np.asarray(values, dtype=complex)
        if values.shape != self.shape:
            raise ValueError(f"shape mismatch {values.shape} vs {self.shape}")
        return type(self)(values, self.origin, self.spacing, self.axes, {**self.meta, **meta})

    def same_grid(self, other, rtol=1e-12):
        return (
            self.shape == other.shape
            and self.axes == other.axes
            and np.allclose(self.origin, other.origin, rtol=rtol, atol=1e-14)
            and np.allclose(self.spacing, other.spacing, rtol=rtol, atol=0)
        )

    def inner(self, other):
        """(self, other) = sum self * conj(other) * cell."""
        if not self.same_grid(other):
            raise ValueError("fields live on different grids")
        return complex(np.vdot(other.values, self.values) * self.cell)

    def norm(self):
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.cell))

    def __add__(self, other):
        if isinstance(other, GridField):
            if not self.same_grid(other):
                raise ValueError("fields live on different grids")
            other = other.values
        return self.with_values(self.values + other)

    def __sub__(self, other):
        if isinstance(other, GridField):
            if not self.same_grid(other):
                raise ValueError("fields live on different grids")
            other = other.values
        return self.with_values(self.values - other)

    def __mul__(self, c):
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    def interpolate(self, *points):
        """
        Cubic-spline interpolation of the samples at arbitrary points (1D only).

        Outside the grid the field is taken to vanish.
        """
        from scipy.interpolate import make_interp_spline

        if self.ndim != 1:
            raise NotImplementedError("interpolation is only provided for 1D fields")
        x = self.coords(0)
        pts = np.asarray(points[0], dtype=float)
        re = make_interp_spline(x, self.values.real, k=3)(pts)
        im = make_interp_spline(x, self.values.imag, k=3)(pts)
        out = re + 1j * im
        outside = (pts < x[0]) | (pts > x[-1])
        out[outside] = 0.0
        return out

    def edge_mass(self, fraction=1 / 16):
        """Fraction of |values|^2 held in the outer `fraction` of each axis."""
        w = np.abs(self.values) ** 2
        total = w.sum()
        if total == 0:
            return 0.0
        mask = np.zeros(self.shape, dtype=bool)
        for a, n in enumerate(self.shape):
            k = max(1, int(round(n * fraction)))
            idx = [slice(None)] * self.ndim
            idx[a] = slice(0, k)
            mask[tuple(idx)] = True
            idx[a] = slice(n - k, n)
            mask[tuple(idx)] = True
        return float(w[mask].sum() / total)

    # serialisation

    def header(self):
        def join(vals):
            return ",".join(repr(float(v)) for v in vals)

        return (
            f"# axis={','.join(self.axes)} origin={join(self.origin)} "
            f"spacing={join(self.spacing)} count={','.join(str(c) for c in self.shape)}"
        )

    def dumps(self):
        lines = [self.header()]
        for idx in np.ndindex(*self.shape):
            v = self.values[idx]
            lines.append(" ".join(str(i) for i in idx) + f" {float(v.real)!r} {float(v.imag)!r}")
        return "\n".join(lines) + "\n"

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text):
        lines = text.splitlines()
        if not lines or not lines[0].startswith("#"):
            raise ValueError("missing GridField header line")
        head = dict(tok.split("=", 1) for tok in lines[0][1:].split())
        axes = tuple(head["axis"].split(","))
        origin = tuple(float(v) for v in head["origin"].split(","))
        spacing = tuple(float(v) for v in head["spacing"].split(","))
        count = tuple(int(v) for v in head["count"].split(","))
        values = np.zeros(count, dtype=complex)
        nd = len(count)
        for line in lines[1:]:
            if not line.strip() or line.startswith("#"):
                continue
            tok = line.split()
            idx = tuple(int(t) for t in tok[:nd])
            values[idx] = float(tok[nd]) + 1j * float(tok[nd + 1])
        return cls(values, origin, spacing, axes)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.loads(fh.read())


def position_grid(center, half_width, count):
    """1D grid [c - L, c + L) with `count` points."""
    spacing = 2.0 * half_width / count
    return GridField(np.zeros(count, dtype=complex), (center - half_width,), (spacing,), ("x",))
