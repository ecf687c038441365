"""Finite-volume lattice operators.

Sites of a ``d``-dimensional box ``L_1 x ... x L_d`` carry a fiber ``C^F``.
Basis vectors ``|n, l>`` are enumerated row-major over the coordinates
(``n_1`` slowest, ``n_d`` fastest) with the fiber index fastest of all::

    index(n, l) = ((n_1 * L_2 + n_2) * ... ) * F + l

Axes are labelled ``1..d`` throughout; label ``0`` is reserved for time.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from pathlib import Path

import numpy as np

from .errors import DomainError, UnsupportedGeometryError

TORUS = "torus"
CYLINDER = "cylinder"
WINDOWS = ("lower", "upper")


def minimal_image(k, length):
    """Signed displacement of ``k`` modulo ``length``, taken in ``(-L/2, L/2]``."""
    h = (length + 1) // 2 - 1
    return np.mod(np.asarray(k) + h, length) - h


@dataclass(frozen=True)
class LatticeGeometry:
    extents: tuple[int, ...]
    fiber_dim: int = 1
    boundary: str = TORUS
    open_axis: int | None = None
    magnetic_field: tuple[tuple[float, ...], ...] | None = field(default=None)

    def __post_init__(self):
        ext = tuple(int(x) for x in self.extents)
        object.__setattr__(self, "extents", ext)
        d = len(ext)
        if d not in (1, 2):
            raise DomainError(f"dimension must be 1 or 2, got {d}")
        if any(x < 2 for x in ext):
            raise DomainError(f"all extents must be >= 2, got {ext}")
        if self.fiber_dim < 1:
            raise DomainError(f"fiber_dim must be >= 1, got {self.fiber_dim}")
        if self.boundary == TORUS:
            if self.open_axis is not None:
                raise DomainError("a torus has no open axis")
        elif self.boundary == CYLINDER:
            if self.open_axis is None:
                object.__setattr__(self, "open_axis", d)
            if not 1 <= self.open_axis <= d:
                raise DomainError(f"open axis {self.open_axis} out of range 1..{d}")
        else:
            raise DomainError(f"unknown boundary type {self.boundary!r}")

        B = np.zeros((d, d)) if self.magnetic_field is None else np.asarray(self.magnetic_field, float)
        if B.shape != (d, d) or not np.allclose(B, -B.T, atol=0, rtol=0):
            raise DomainError("magnetic field must be a real antisymmetric d x d matrix")
        if np.any(B != 0):
            if self.boundary != TORUS:
                raise UnsupportedGeometryError("magnetic fields are supported on the torus only")
            flux = B[0, 1] * ext[0] * ext[1] / (2 * np.pi)
            if abs(flux - round(flux)) > 1e-12:
                raise DomainError(
                    f"flux quantization violated: B_12 L_1 L_2 / 2pi = {flux!r} is not an integer")
        object.__setattr__(self, "magnetic_field", tuple(tuple(float(b) for b in row) for row in B))

    @classmethod
    def torus(cls, extents, fiber_dim=1, magnetic_field=None):
        return cls(tuple(extents), fiber_dim, TORUS, None, magnetic_field)

    @classmethod
    def cylinder(cls, extents, fiber_dim=1, open_axis=None):
        return cls(tuple(extents), fiber_dim, CYLINDER, open_axis)

    @property
    def dimension(self):
        return len(self.extents)

    @property
    def n_sites(self):
        return int(np.prod(self.extents))

    @property
    def dim(self):
        return self.n_sites * self.fiber_dim

    @property
    def is_torus(self):
        return self.boundary == TORUS

    @property
    def B(self):
        return np.array(self.magnetic_field)

    def periodic_axes(self):
        return [j for j in range(1, self.dimension + 1) if j != self.open_axis]

    def check_axis(self, j):
        if not 1 <= j <= self.dimension:
            raise DomainError(f"spatial axis must be in 1..{self.dimension}, got {j}")

    def to_cylinder(self, open_axis=None):
        return LatticeGeometry.cylinder(self.extents, self.fiber_dim, open_axis)

    @cached_property
    def coords(self):
        """``(n_sites, d)`` integer array of site coordinates in basis order."""
        return np.array(list(product(*(range(L) for L in self.extents))), dtype=np.int64)

    def positions(self, j):
        """Coordinate ``n_j`` of every basis vector (length ``dim``)."""
        self.check_axis(j)
        return np.repeat(self.coords[:, j - 1], self.fiber_dim)

    def displacement(self, j):
        """Matrix of signed displacements ``delta_j(m_j - n_j)``.

        Periodic axes use the minimal image; the open axis of a cylinder uses
        the plain difference.
        """
        return self._displacements[j - 1]

    @cached_property
    def _displacements(self):
        out = []
        for j in range(1, self.dimension + 1):
            x = self.positions(j)
            diff = x[:, None] - x[None, :]
            if j != self.open_axis:
                diff = minimal_image(diff, self.extents[j - 1])
            out.append(diff.astype(float))
        return tuple(out)

    def window_mask(self, window):
        """Basis vectors whose open-axis coordinate lies in the requested half."""
        if self.boundary != CYLINDER:
            raise UnsupportedGeometryError("edge windows need a cylinder geometry")
        if window not in WINDOWS:
            raise DomainError(f"window must be one of {WINDOWS}, got {window!r}")
        x = self.positions(self.open_axis)
        half = self.extents[self.open_axis - 1] // 2
        return x < half if window == "lower" else x >= half

    def header(self):
        return {
            "d": self.dimension,
            "L": list(self.extents),
            "fiber": self.fiber_dim,
            "boundary": self.boundary,
            "open_axis": self.open_axis,
            "B": [list(r) for r in self.magnetic_field],
        }

    @classmethod
    def from_header(cls, h):
        return cls(tuple(h["L"]), int(h["fiber"]), h["boundary"], h.get("open_axis"),
                   h.get("B"))


class LatticeOperator:
    """Dense complex matrix tied to a geometry. Read-only after construction."""

    __slots__ = ("geometry", "matrix")

    def __init__(self, geometry: LatticeGeometry, matrix, copy=True):
        m = np.array(matrix, dtype=np.complex128, copy=copy or None)
        if m.shape != (geometry.dim, geometry.dim):
            raise DomainError(f"matrix shape {m.shape} does not match Hilbert-space dimension {geometry.dim}")
        m.flags.writeable = False
        self.geometry = geometry
        self.matrix = m

    @classmethod
    def wrap(cls, geometry, matrix):
        """Take ownership of a freshly computed array without copying."""
        return cls(geometry, matrix, copy=False)

    @classmethod
    def identity(cls, geometry):
        return cls.wrap(geometry, np.eye(geometry.dim, dtype=np.complex128))

    @classmethod
    def zeros(cls, geometry):
        return cls.wrap(geometry, np.zeros((geometry.dim, geometry.dim), dtype=np.complex128))

    @classmethod
    def diagonal(cls, geometry, values):
        return cls.wrap(geometry, np.diag(np.asarray(values, dtype=np.complex128)))

    def __repr__(self):
        g = self.geometry
        return f"LatticeOperator({g.boundary} {g.extents} x C^{g.fiber_dim})"

    def _other(self, other):
        if isinstance(other, LatticeOperator):
            if other.geometry != self.geometry:
                raise DomainError("operators live on different geometries")
            return other.matrix
        return other

    @property
    def dag(self):
        return LatticeOperator.wrap(self.geometry, self.matrix.conj().T.copy())

    def __matmul__(self, other):
        return LatticeOperator.wrap(self.geometry, self.matrix @ self._other(other))

    def __add__(self, other):
        return LatticeOperator.wrap(self.geometry, self.matrix + self._other(other))

    def __sub__(self, other):
        return LatticeOperator.wrap(self.geometry, self.matrix - self._other(other))

    def __neg__(self):
        return LatticeOperator.wrap(self.geometry, -self.matrix)

    def __mul__(self, scalar):
        return LatticeOperator.wrap(self.geometry, self.matrix * scalar)

    __rmul__ = __mul__

    def hermiticity_defect(self):
        return float(np.abs(self.matrix - self.matrix.conj().T).max())

    def unitarity_defect(self):
        m = self.matrix
        return float(np.abs(m.conj().T @ m - np.eye(m.shape[0])).max())

    def is_diagonal(self):
        m = self.matrix
        return not np.any(m[~np.eye(m.shape[0], dtype=bool)])


def build_translation(g: LatticeGeometry, j: int) -> LatticeOperator:
    """Magnetic translation ``V_j = exp(i <X|B_+|e_j>) S_j`` on the torus.

    ``S_j |n> = |n + e_j>`` with periodic wrap; ``B_+`` is the strictly lower
    triangular part of ``B``. In two dimensions ``V_1`` carries the Landau
    phase ``exp(i B_21 n_2)`` and ``V_2`` the compensating twist at its wrap,
    so that ``V_1 V_2 = exp(i B_21) V_2 V_1`` holds on the whole torus.
    """
    if not g.is_torus:
        raise UnsupportedGeometryError("translations are only provided on the torus")
    g.check_axis(j)
    coords = g.coords
    target = coords.copy()
    target[:, j - 1] = (target[:, j - 1] + 1) % g.extents[j - 1]
    strides = np.cumprod((1,) + g.extents[:0:-1])[::-1]
    dest = target @ strides
    phase = np.zeros(g.n_sites)
    B = g.B
    if g.dimension == 2 and B[1, 0] != 0:
        if j == 1:
            phase = B[1, 0] * coords[:, 1]
        else:
            wrap = coords[:, 1] == g.extents[1] - 1
            phase = np.where(wrap, -B[1, 0] * g.extents[1] * coords[:, 0], 0.0)
    F = g.fiber_dim
    m = np.zeros((g.dim, g.dim), dtype=np.complex128)
    rows = (dest[:, None] * F + np.arange(F)).ravel()
    cols = (np.arange(g.n_sites)[:, None] * F + np.arange(F)).ravel()
    m[rows, cols] = np.repeat(np.exp(1j * phase), F)
    return LatticeOperator.wrap(g, m)


def nc_derivative(A: LatticeOperator, j: int) -> LatticeOperator:
    """Non-commutative derivative ``(grad_j A)_{mn} = i delta_j(m_j - n_j) A_{mn}``."""
    if j == 0:
        raise DomainError("axis 0 is time; use the evolution module for time derivatives")
    A.geometry.check_axis(j)
    return LatticeOperator.wrap(A.geometry, derivative_array(A.matrix, A.geometry, j))


def derivative_array(m, geometry, j):
    return (1j * geometry.displacement(j)) * m


def trace_per_volume(A: LatticeOperator) -> complex:
    g = A.geometry
    if not g.is_torus:
        raise UnsupportedGeometryError("the trace per unit volume needs a torus")
    return complex(np.trace(A.matrix) / g.n_sites)


def boundary_trace(A: LatticeOperator, window="lower") -> complex:
    """Trace over one half of a cylinder, normalized per unit boundary length."""
    g = A.geometry
    mask = g.window_mask(window)
    length = np.prod([g.extents[j - 1] for j in g.periodic_axes()])
    return complex(np.diagonal(A.matrix)[mask].sum() / length)


def save_operator(path, A: LatticeOperator):
    """Textual dump: magic line, JSON header, then ``re im`` per entry, column-major."""
    m = A.matrix
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# floquet-bbc operator v1\n")
        fh.write(json.dumps(A.geometry.header()) + "\n")
        for z in m.ravel(order="F"):
            fh.write(f"{float(z.real)!r} {float(z.imag)!r}\n")


def load_operator(path) -> LatticeOperator:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "# floquet-bbc operator v1":
        raise DomainError(f"{path}: not a floquet-bbc operator dump")
    g = LatticeGeometry.from_header(json.loads(lines[1]))
    vals = np.array([[float(x) for x in ln.split()] for ln in lines[2:]])
    if vals.shape != (g.dim * g.dim, 2):
        raise DomainError(f"{path}: expected {g.dim * g.dim} entries, found {len(vals)}")
    m = (vals[:, 0] + 1j * vals[:, 1]).reshape((g.dim, g.dim), order="F")
    return LatticeOperator.wrap(g, m)


@dataclass(frozen=True)
class IndexSet:
    """Strictly increasing axis labels drawn from ``{0, 1, ..., d}``; 0 is time."""

    entries: tuple[int, ...]

    def __post_init__(self):
        e = tuple(int(x) for x in self.entries)
        if any(x < 0 for x in e):
            raise DomainError(f"index labels must be non-negative, got {e}")
        if any(b <= a for a, b in zip(e, e[1:])):
            raise DomainError(f"index set must be strictly increasing, got {e}")
        object.__setattr__(self, "entries", e)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def has_time(self):
        return 0 in self.entries

    def check_even(self, d):
        if len(self) % 2 or self.has_time or any(x > d for x in self.entries):
            raise DomainError(f"{self.entries} is not an even spatial index set for d={d}")

    def check_odd_time(self, d):
        if len(self) % 2 == 0 or not self.has_time or any(x > d for x in self.entries):
            raise DomainError(f"{self.entries} is not an odd index set containing 0 for d={d}")

    def __str__(self):
        return "{" + ",".join(map(str, self.entries)) + "}"
