"""Discretized (1+d)-dimensional Minkowski lattice: open time grid times a spatial torus.

Site ordering is row-major in (t, x_1, ..., x_d), so the flat index of a site is
``t * n_x**d + x``. Measure weights live in pairings, never in field values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

REAL_TOL = 1e-12


@dataclass(frozen=True)
class LatticeSpec:
    n_t: int
    dt: float
    d: int
    n_x: int
    dx: float

    def __post_init__(self):
        if int(self.n_t) < 3:
            raise ValueError(f"n_t must be >= 3, got {self.n_t}")
        if int(self.n_x) < 2:
            raise ValueError(f"n_x must be >= 2, got {self.n_x}")
        if not 1 <= int(self.d) <= 3:
            raise ValueError(f"spatial dimension must be 1..3, got {self.d}")
        if not (self.dt > 0 and self.dx > 0):
            raise ValueError("lattice spacings must be positive")

    @property
    def n_space(self) -> int:
        return self.n_x ** self.d

    @property
    def n_sites(self) -> int:
        return self.n_t * self.n_space

    @property
    def measure(self) -> float:
        return self.dt * self.dx ** self.d

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_t) * self.dt

    @property
    def spatial_shape(self) -> tuple:
        return (self.n_x,) * self.d

    def site_times(self) -> np.ndarray:
        """Time coordinate of every site, flat order."""
        return np.repeat(self.times, self.n_space)

    def time_index(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_t), self.n_space)

    def spatial_coords(self) -> np.ndarray:
        """Integer spatial coordinates, shape (n_space, d)."""
        grids = np.meshgrid(*[np.arange(self.n_x)] * self.d, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def momenta(self) -> np.ndarray:
        """Torus momenta k (shape (n_space, d)) in the same order as the FFT output."""
        k1 = 2 * np.pi * np.fft.fftfreq(self.n_x, d=self.dx)
        grids = np.meshgrid(*[k1] * self.d, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def lattice_k2(self) -> np.ndarray:
        """Eigenvalues of the nearest-neighbour spatial Laplacian, -Δ_x e_k = k̂² e_k."""
        k = self.momenta()
        return np.sum((2.0 / self.dx * np.sin(k * self.dx / 2)) ** 2, axis=-1)

    def plane_waves(self) -> np.ndarray:
        """Orthonormal plane waves e_k(x), shape (n_space modes, n_space sites)."""
        k = self.momenta()
        x = self.spatial_coords() * self.dx
        return np.exp(1j * k @ x.T) / np.sqrt(self.n_space)

    def to_dict(self) -> dict:
        return {"n_t": self.n_t, "dt": self.dt, "d": self.d, "n_x": self.n_x, "dx": self.dx}


def build_lattice(n_t: int, dt: float, d: int, n_x: int, dx: float) -> LatticeSpec:
    return LatticeSpec(int(n_t), float(dt), int(d), int(n_x), float(dx))


@dataclass(frozen=True)
class Field:
    values: np.ndarray
    lattice: LatticeSpec = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex).ravel()
        if vals.size != self.lattice.n_sites:
            raise ValueError(f"field has {vals.size} values, lattice has {self.lattice.n_sites} sites")
        object.__setattr__(self, "values", vals)

    def is_real(self, tol: float = REAL_TOL) -> bool:
        return bool(np.max(np.abs(self.values.imag), initial=0.0) <= tol)

    def grid(self) -> np.ndarray:
        return self.values.reshape((self.lattice.n_t,) + self.lattice.spatial_shape)


@dataclass(frozen=True)
class DensityFunction:
    """Real profile over lattice sites (cutoffs, mass profiles, sources)."""

    values: np.ndarray
    lattice: LatticeSpec = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).ravel()
        if vals.size != self.lattice.n_sites:
            raise ValueError("density size does not match lattice")
        object.__setattr__(self, "values", vals)

    def support(self, tol: float = 0.0) -> np.ndarray:
        return np.flatnonzero(np.abs(self.values) > tol)

    def time_support(self) -> np.ndarray:
        return np.unique(self.lattice.time_index()[self.support()])

    @classmethod
    def from_time_profile(cls, lattice: LatticeSpec, profile) -> "DensityFunction":
        return cls(np.repeat(np.asarray(profile, dtype=float), lattice.n_space), lattice)


def _check_same(a: LatticeSpec, b: LatticeSpec):
    if a != b:
        raise ValueError("lattice mismatch")


def pairing(f: Field, g: Field) -> complex:
    """Bilinear pairing Σ f g μ, no conjugation."""
    _check_same(f.lattice, g.lattice)
    return complex(np.sum(f.values * g.values) * f.lattice.measure)


def hermitian_pairing(f: Field, g: Field) -> complex:
    _check_same(f.lattice, g.lattice)
    return complex(np.sum(np.conj(f.values) * g.values) * f.lattice.measure)


def spatial_fourier(f: Field) -> np.ndarray:
    """Unitary DFT over the spatial torus per time slice; returns shape (n_t, n_space)."""
    lat = f.lattice
    axes = tuple(range(1, lat.d + 1))
    out = np.fft.fftn(f.grid(), axes=axes, norm="ortho")
    return out.reshape(lat.n_t, lat.n_space)


def inverse_spatial_fourier(modes: np.ndarray, lattice: LatticeSpec) -> Field:
    grid = np.asarray(modes).reshape((lattice.n_t,) + lattice.spatial_shape)
    axes = tuple(range(1, lattice.d + 1))
    return Field(np.fft.ifftn(grid, axes=axes, norm="ortho").ravel(), lattice)


def time_translate(f: Field, steps: int) -> Field:
    """φ_s(t, x) = φ(t - s, x); slices shifted out of range are dropped, new ones zero."""
    lat = f.lattice
    steps = int(steps)
    if abs(steps) >= lat.n_t:
        raise ValueError("shift exceeds lattice time extent")
    g = f.grid()
    out = np.zeros_like(g)
    if steps >= 0:
        out[steps:] = g[: lat.n_t - steps]
    else:
        out[:steps] = g[-steps:]
    return Field(out.ravel(), lat)


def time_translation_matrix(lattice: LatticeSpec, steps: int) -> np.ndarray:
    """Matrix T with (Tφ) = time_translate(φ, steps)."""
    n = lattice.n_sites
    eye = np.eye(n)
    return np.stack([time_translate(Field(eye[:, j], lattice), steps).values.real for j in range(n)], axis=1)
