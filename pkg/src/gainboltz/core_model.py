"""Shared domain types: velocity grids, sphere quadratures, fields and kernels.

Velocities and momenta are plain ``numpy`` arrays of shape ``(3,)`` (or
``(N, 3)`` for batches).  Everything here is immutable once built.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Union

import numpy as np


class ConfigurationError(ValueError):
    """Invalid construction parameters (grid sizes, quadrature orders, kernels)."""


class DomainError(ValueError):
    """Argument outside the domain where an operation is defined."""


def as_vec3(x) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector components must be finite")
    return v


def energy(p) -> float:
    """Relativistic particle energy sqrt(1 + |p|^2) with m = c = 1."""
    p = np.asarray(p, dtype=np.float64)
    return np.sqrt(1.0 + np.sum(p * p, axis=-1))


@dataclass(frozen=True)
class FourMomentum:
    """Unit-mass four-momentum; the energy is derived, never stored."""

    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", as_vec3(self.p))

    @property
    def p0(self) -> float:
        return float(energy(self.p))

    def as_array(self) -> np.ndarray:
        return np.concatenate([[self.p0], self.p])

    def minkowski_norm2(self) -> float:
        return self.p0 ** 2 - float(self.p @ self.p)


# ---------------------------------------------------------------------------
# velocity grid


@dataclass(frozen=True, eq=False)
class VelocityGrid:
    """Cell-centred Cartesian grid clipped to the closed ball |v| <= R.

    Cell centres are ``h * (i - (n - 1) / 2)`` for ``i = 0..n-1`` so that the
    node set is exactly symmetric under coordinate sign flips and swaps.
    """

    R: float
    n: int
    index: np.ndarray = field(repr=False)
    points: np.ndarray = field(repr=False)

    @property
    def h(self) -> float:
        return 2.0 * self.R / self.n

    @property
    def cell_volume(self) -> float:
        return self.h ** 3

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.size, self.cell_volume)

    @property
    def total_weight(self) -> float:
        return self.size * self.cell_volume

    @property
    def lower_center(self) -> float:
        """Coordinate of the first cell centre along each axis."""
        return -0.5 * (self.n - 1) * self.h

    @cached_property
    def support_radius(self) -> float:
        """Radius beyond which any trilinear interpolant on this grid vanishes."""
        return float(np.max(np.linalg.norm(self.points, axis=1))) + np.sqrt(3.0) * self.h

    def nodes(self):
        """Iterate over ``(index, center, weight)`` triples."""
        w = self.cell_volume
        for idx, c in zip(self.index, self.points):
            yield tuple(int(i) for i in idx), c, w

    def to_dense(self, values: np.ndarray, pad: int = 1) -> np.ndarray:
        """Scatter node values into an ``(n + 2 pad)^3`` array, zero elsewhere."""
        dense = np.zeros((self.n + 2 * pad,) * 3)
        i, j, k = (self.index + pad).T
        dense[i, j, k] = values
        return dense

    def from_dense(self, dense: np.ndarray, pad: int = 1) -> np.ndarray:
        i, j, k = (self.index + pad).T
        return dense[i, j, k].copy()

    def ball_mask(self, radius: float) -> np.ndarray:
        """Exact node mask of the closed ball |v| <= radius."""
        r2 = np.einsum("ij,ij->i", self.points, self.points)
        return r2 <= radius * radius

    def __eq__(self, other):
        return (
            isinstance(other, VelocityGrid)
            and self.R == other.R
            and self.n == other.n
        )

    def __hash__(self):
        return hash((self.R, self.n))


def lattice_points(h: float, n: int, radius: float) -> np.ndarray:
    """Cell centres of the spacing-``h`` lattice (offset as in a grid of n cells)
    lying in the closed ball of the given radius.

    For ``radius == R`` and ``h == 2R/n`` this reproduces the grid nodes; larger
    radii extend the same lattice beyond the grid.
    """
    half = 0.5 * (n - 1)
    # lattice offsets are half-integers when n is even
    kmax = int(np.ceil(radius / h + half)) + 1
    k = np.arange(-kmax, kmax + 1) + (half - np.floor(half))
    coords = h * k
    coords = coords[np.abs(coords) <= radius]
    X, Y, Z = np.meshgrid(coords, coords, coords, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    r2 = np.einsum("ij,ij->i", pts, pts)
    return pts[r2 <= radius * radius]


def make_velocity_grid(R: float, n: int) -> VelocityGrid:
    if not (np.isfinite(R) and R > 0):
        raise ConfigurationError(f"grid radius must be positive, got {R!r}")
    if int(n) != n or n < 4 or n % 2:
        raise ConfigurationError(f"cells per axis must be an even integer >= 4, got {n!r}")
    n = int(n)
    R = float(R)
    h = 2.0 * R / n
    offsets = np.arange(n) - 0.5 * (n - 1)
    coords = h * offsets
    I, J, K = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    index = np.stack([I.ravel(), J.ravel(), K.ravel()], axis=1)
    points = coords[index]
    r2 = np.einsum("ij,ij->i", points, points)
    keep = r2 <= R * R
    index = index[keep]
    points = points[keep]
    index.setflags(write=False)
    points.setflags(write=False)
    return VelocityGrid(R=R, n=n, index=index, points=points)


# ---------------------------------------------------------------------------
# sphere quadrature


@dataclass(frozen=True, eq=False)
class SphereQuadrature:
    """Product Gauss-Legendre (in cos theta) x uniform azimuth rule on S^2."""

    m: int
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def dihedral_symmetric(self) -> bool:
        """True when the node set is closed under axis sign flips and x<->y."""
        return self.m % 4 == 0

    def integrate(self, func: Callable[[np.ndarray], np.ndarray]) -> float:
        return float(np.sum(self.weights * func(self.nodes)))

    def hemisphere(self):
        """``(nodes, weights)`` for integrands even under n -> -n.

        For even m the node set is antipodal, so the z > 0 nodes with doubled
        weight reproduce the full rule exactly. Odd m rules are not antipodal
        and are returned unchanged.
        """
        if self.m % 2:
            return np.ascontiguousarray(self.nodes), np.ascontiguousarray(self.weights)
        upper = self.nodes[:, 2] > 0.0
        return (
            np.ascontiguousarray(self.nodes[upper]),
            np.ascontiguousarray(2.0 * self.weights[upper]),
        )

    def __eq__(self, other):
        return isinstance(other, SphereQuadrature) and self.m == other.m

    def __hash__(self):
        return hash(("sq", self.m))


def _symmetric_leggauss(m: int):
    x, w = np.polynomial.legendre.leggauss(m)
    half = m // 2
    x[m - half:] = -x[:half][::-1]
    w[m - half:] = w[:half][::-1]
    if m % 2:
        x[half] = 0.0
    return x, w


def _symmetric_azimuths(m: int):
    phi = 2.0 * np.pi * (np.arange(m) + 0.5) / m
    c, s = np.cos(phi), np.sin(phi)
    if m % 4:
        return c, s
    q = m // 4
    c1, s1 = c[:q].copy(), s[:q].copy()
    # reflect phi -> pi/2 - phi inside the first quadrant
    for j in range(q):
        jj = q - 1 - j
        if j > jj:
            c1[j], s1[j] = s1[jj], c1[jj]
        elif j == jj:
            c1[j] = s1[j] = np.sqrt(0.5)
    c = np.concatenate([c1, -s1, -c1, s1])
    s = np.concatenate([s1, c1, -s1, -c1])
    return c, s


def make_sphere_quadrature(m: int) -> SphereQuadrature:
    if int(m) != m or m < 2:
        raise ConfigurationError(f"sphere quadrature order must be an integer >= 2, got {m!r}")
    m = int(m)
    x, wx = _symmetric_leggauss(m)
    c, s = _symmetric_azimuths(m)
    sin_t = np.sqrt(1.0 - x * x)
    nodes = np.empty((m, m, 3))
    nodes[:, :, 0] = sin_t[:, None] * c[None, :]
    nodes[:, :, 1] = sin_t[:, None] * s[None, :]
    nodes[:, :, 2] = x[:, None]
    weights = np.repeat(wx * (2.0 * np.pi / m), m)
    nodes = nodes.reshape(-1, 3)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return SphereQuadrature(m=m, nodes=nodes, weights=weights)


# ---------------------------------------------------------------------------
# distribution fields


@dataclass(frozen=True, eq=False)
class DistributionField:
    """Nonnegative node values on a velocity grid."""

    grid: VelocityGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.shape != (self.grid.size,):
            raise ValueError(
                f"field needs {self.grid.size} node values, got shape {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        if np.any(vals < 0):
            raise ValueError("field values must be nonnegative")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def indicator(cls, grid: VelocityGrid, radius: float, height: float = 1.0):
        """``height * chi_{B_radius}`` as an exact node mask."""
        return cls(grid, height * grid.ball_mask(radius).astype(np.float64))

    @classmethod
    def from_function(cls, grid: VelocityGrid, func):
        return cls(grid, np.asarray(func(grid.points), dtype=np.float64))

    def __mul__(self, c: float) -> DistributionField:
        return DistributionField(self.grid, self.values * c)

    __rmul__ = __mul__

    @property
    def sup_norm(self) -> float:
        return float(np.max(self.values)) if self.values.size else 0.0

    def dense(self) -> np.ndarray:
        """Zero-padded dense array used by the interpolating kernels."""
        return self.grid.to_dense(self.values, pad=1)

    def __call__(self, points) -> np.ndarray:
        return trilinear(self.grid, self.dense(), np.asarray(points, dtype=np.float64))


def trilinear(grid: VelocityGrid, dense: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of padded node data with zero extension."""
    pts = np.atleast_2d(points)
    s = (pts - grid.lower_center) / grid.h + 1.0
    limit = grid.n + 1
    inside = np.all((s >= 0.0) & (s < limit), axis=1)
    out = np.zeros(len(pts))
    if not np.any(inside):
        return out.reshape(np.shape(points)[:-1])
    s = s[inside]
    i0 = np.floor(s).astype(np.int64)
    fr = s - i0
    acc = np.zeros(len(s))
    for dx in (0, 1):
        wx = fr[:, 0] if dx else 1.0 - fr[:, 0]
        for dy in (0, 1):
            wy = fr[:, 1] if dy else 1.0 - fr[:, 1]
            for dz in (0, 1):
                wz = fr[:, 2] if dz else 1.0 - fr[:, 2]
                acc += wx * wy * wz * dense[i0[:, 0] + dx, i0[:, 1] + dy, i0[:, 2] + dz]
    out[inside] = acc
    return out.reshape(np.shape(points)[:-1])


# ---------------------------------------------------------------------------
# collision kernels


@dataclass(frozen=True)
class ClassicalHardSphere:
    """B = n . (v - w) restricted to the hemisphere where it is nonnegative."""

    regime = "classical"


@dataclass(frozen=True)
class RelativisticConstantSigma:
    """Relativistic hard spheres: constant scattering cross section."""

    sigma0: float = 1.0
    regime = "relativistic"

    def __post_init__(self):
        if not (np.isfinite(self.sigma0) and self.sigma0 > 0):
            raise ConfigurationError(f"sigma0 must be positive, got {self.sigma0!r}")

    def sigma(self, g, theta):
        return np.full(np.broadcast(g, theta).shape, self.sigma0)[()]


@dataclass(frozen=True, eq=False)
class RelativisticMaxwellian:
    """sigma = g^-1 (1 + g^2)^{1/2} F(theta) with F tabulated on [0, pi]."""

    theta: np.ndarray
    F: np.ndarray
    regime = "relativistic"

    def __post_init__(self):
        th = np.array(self.theta, dtype=np.float64)
        F = np.array(self.F, dtype=np.float64)
        if th.ndim != 1 or th.shape != F.shape or th.size < 2:
            raise ConfigurationError("F must be tabulated on a 1-D theta grid of matching length")
        if abs(th[0]) > 1e-12 or abs(th[-1] - np.pi) > 1e-12 or np.any(np.diff(th) <= 0):
            raise ConfigurationError("theta table must increase strictly from 0 to pi")
        if np.any(F < 0) or not np.all(np.isfinite(F)):
            raise ConfigurationError("tabulated F must be finite and nonnegative")
        th.setflags(write=False)
        F.setflags(write=False)
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "F", F)

    @classmethod
    def from_function(cls, F, points: int = 181):
        th = np.linspace(0.0, np.pi, points)
        return cls(th, np.asarray(F(th), dtype=np.float64) * np.ones_like(th))

    def angular(self, theta):
        return np.interp(theta, self.theta, self.F)

    def sigma(self, g, theta):
        g = np.asarray(g, dtype=np.float64)
        return np.sqrt(1.0 + g * g) / g * self.angular(theta)

    def __eq__(self, other):
        return (
            isinstance(other, RelativisticMaxwellian)
            and np.array_equal(self.theta, other.theta)
            and np.array_equal(self.F, other.F)
        )

    def __hash__(self):
        return hash(("maxwellian", self.theta.tobytes(), self.F.tobytes()))


KernelSpec = Union[ClassicalHardSphere, RelativisticConstantSigma, RelativisticMaxwellian]


def regime_of(kernel) -> str:
    try:
        return kernel.regime
    except AttributeError:
        raise ConfigurationError(f"not a kernel specification: {kernel!r}") from None
