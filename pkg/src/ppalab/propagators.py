"""Discrete Klein-Gordon operator and its propagator family.

Conventions
-----------
* ``P = ∂_t² - Δ_x + M`` with the central second difference in time (Dirichlet
  closure at both ends of the open time grid) and the nearest-neighbour
  Laplacian on the spatial torus. ``P`` acts on field values; its matrix is
  symmetric.
* Kernels are stored as integral kernels: an operator K acts as
  ``(K f)(y) = Σ_z μ K(y, z) f(z)``, so the identity kernel is δ/μ.
* The retarded kernel is built by forward substitution, so ``P Δ^R = δ/μ`` holds
  exactly on every time row whose stencil stays inside the grid (all but the
  last slice) and ``Δ^R(t, s) = 0`` for ``t <= s``.
* ``Δ⁺(x, y) = Σ_k a_k e^{iω̃_k (t_x - t_y)} e_k(x) ē_k(y)`` so that the
  antisymmetric part of Δ⁺ is ``(i/2) Δ`` with ``Δ = Δ^R - Δ^A``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .lattice import DensityFunction, LatticeSpec

ZERO_MODE_TOL = 1e-12


@dataclass(frozen=True)
class KleinGordonOp:
    lattice: LatticeSpec
    mass_sq: np.ndarray  # per-site M(x), includes the constant m²
    matrix: np.ndarray = field(repr=False)

    @property
    def homogeneous(self) -> bool:
        return bool(np.ptp(self.mass_sq) == 0.0)

    @property
    def time_only(self) -> bool:
        m = self.mass_sq.reshape(self.lattice.n_t, -1)
        return bool(np.all(np.ptp(m, axis=1) == 0.0))

    def with_extra_mass(self, M) -> "KleinGordonOp":
        return build_operator(self.lattice, self.mass_sq + _as_profile(self.lattice, M))

    def interior_rows(self) -> np.ndarray:
        """Rows of P whose time stencil stays on the grid (excludes the last slice)."""
        return np.flatnonzero(self.lattice.time_index() < self.lattice.n_t - 1)


def _as_profile(lattice: LatticeSpec, mass_profile) -> np.ndarray:
    if isinstance(mass_profile, DensityFunction):
        vals = mass_profile.values
    else:
        vals = np.broadcast_to(np.asarray(mass_profile, dtype=float), (lattice.n_sites,))
    vals = np.array(vals, dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("mass profile must be finite and real")
    return vals


def time_stencil(lattice: LatticeSpec) -> np.ndarray:
    n, dt = lattice.n_t, lattice.dt
    D = (np.diag(np.full(n - 1, 1.0), 1) + np.diag(np.full(n - 1, 1.0), -1) - 2 * np.eye(n)) / dt**2
    return D


def spatial_laplacian(lattice: LatticeSpec) -> np.ndarray:
    """Matrix of -Δ_x on the torus (positive semidefinite)."""
    n, d, dx = lattice.n_x, lattice.d, lattice.dx
    ring = 2 * np.eye(n) - np.roll(np.eye(n), 1, axis=1) - np.roll(np.eye(n), -1, axis=1)
    ring /= dx**2
    L = np.zeros((n**d, n**d))
    for axis in range(d):
        mats = [np.eye(n)] * d
        mats[axis] = ring
        term = mats[0]
        for m in mats[1:]:
            term = np.kron(term, m)
        L += term
    return L


def build_operator(lattice: LatticeSpec, mass_profile=0.0) -> KleinGordonOp:
    M = _as_profile(lattice, mass_profile)
    P = np.kron(time_stencil(lattice), np.eye(lattice.n_space))
    P += np.kron(np.eye(lattice.n_t), spatial_laplacian(lattice))
    P += np.diag(M)
    return KleinGordonOp(lattice, M, P)


@dataclass(frozen=True)
class ModeBasis:
    """Discrete positive-frequency data per spatial torus mode."""

    k2: np.ndarray  # lattice momentum squared k̂²
    omega: np.ndarray  # sqrt(k̂² + m²)
    omega_tilde: np.ndarray  # discrete frequency (2/dt) asin(ω dt/2)
    amplitude: np.ndarray  # a_k, Δ⁺_k(τ) = a_k e^{iω̃τ}
    active: np.ndarray  # False for the excluded massless zero mode
    waves: np.ndarray = field(repr=False)  # e_k(x), shape (modes, sites)
    dt: float | None = None
    cell: float = 1.0  # dx^d

    def n_beta(self, beta: float) -> np.ndarray:
        if not beta > 0:
            raise ValueError("beta must be positive")
        out = np.zeros_like(self.omega_tilde)
        act = self.active
        x = beta * self.omega_tilde[act]
        out[act] = np.where(x < 700, 1.0 / np.expm1(np.minimum(x, 700)), 0.0)
        return out

    def mode_function(self, times: np.ndarray) -> np.ndarray:
        """u_k(t) = sqrt(a_k) e^{-iω̃_k t}, shape (modes, len(times))."""
        return np.sqrt(self.amplitude)[:, None] * np.exp(-1j * np.outer(self.omega_tilde, times))

    def wronskian(self, t: float = 0.0) -> np.ndarray:
        """Discrete Wronskian (ū(t+dt) u(t) - ū(t) u(t+dt))/dt scaled by the cell volume; equals i."""
        h = self.dt if self.dt is not None else 1e-6
        u0 = self.mode_function(np.array([t]))[:, 0]
        u1 = self.mode_function(np.array([t + h]))[:, 0]
        return (np.conj(u1) * u0 - np.conj(u0) * u1) / h * self.cell

    def records(self, beta: float | None = None) -> list:
        nb = self.n_beta(beta) if beta is not None else np.zeros_like(self.omega)
        return [
            {"k": float(np.sqrt(k2)), "omega_tilde": float(w), "n_beta": float(n)}
            for k2, w, n, a in zip(self.k2, self.omega_tilde, nb, self.active)
            if a
        ]


def mode_parameters(k2, m2: float, dt: float | None, cell: float):
    """(ω, ω̃, a) for the discrete-time stencil, or the continuous-time limit if dt is None."""
    k2 = np.asarray(k2, dtype=float)
    if m2 < 0:
        raise ValueError("tachyonic mass not supported")
    omega = np.sqrt(k2 + m2)
    if dt is None:
        wt = omega.copy()
        with np.errstate(divide="ignore"):
            amp = np.where(omega > ZERO_MODE_TOL, 1.0 / (2 * cell * np.where(omega > 0, omega, 1.0)), 0.0)
        return omega, wt, amp
    x = omega * dt / 2
    if np.any(x >= 1.0):
        raise ValueError(f"stability bound violated: max ω·dt = {2 * x.max():.3f} >= 2")
    theta = 2 * np.arcsin(x)
    wt = theta / dt
    s = np.sin(theta)
    amp = np.where(s > ZERO_MODE_TOL, dt / (2 * cell * np.where(s > 0, s, 1.0)), 0.0)
    return omega, wt, amp


def mode_basis(lattice: LatticeSpec, m2: float, continuous_time: bool = False) -> ModeBasis:
    k2 = lattice.lattice_k2()
    dt = None if continuous_time else lattice.dt
    cell = lattice.dx ** lattice.d
    omega, wt, amp = mode_parameters(k2, m2, dt, cell)
    active = omega > ZERO_MODE_TOL
    return ModeBasis(k2, omega, wt, amp, active, lattice.plane_waves(), dt, cell)


@dataclass(frozen=True)
class BiKernel:
    kind: str
    matrix: np.ndarray = field(repr=False)
    lattice: LatticeSpec = field(repr=False)
    modes: ModeBasis | None = field(default=None, repr=False)
    beta: float | None = None
    shift: float = 0.0  # imaginary-time continuation already applied

    @property
    def T(self) -> np.ndarray:
        return self.matrix.T

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)


def retarded_solve(op: KleinGordonOp, sources: np.ndarray) -> np.ndarray:
    """Retarded solution φ of Pφ = f (columns of ``sources``), zero before the source."""
    lat = op.lattice
    S = lat.n_space
    dt2 = lat.dt**2
    f = np.asarray(sources).reshape(lat.n_t, S, -1)
    Lx = spatial_laplacian(lat)
    M = op.mass_sq.reshape(lat.n_t, S)
    phi = np.zeros(f.shape, dtype=np.result_type(f.dtype, float))
    for t in range(lat.n_t - 1):
        B = Lx + np.diag(M[t]) - 2.0 / dt2 * np.eye(S)
        prev = phi[t - 1] if t > 0 else 0.0
        phi[t + 1] = dt2 * f[t] - prev - dt2 * (B @ phi[t])
    return phi.reshape(lat.n_sites, -1)


def retarded(op: KleinGordonOp) -> BiKernel:
    lat = op.lattice
    G = retarded_solve(op, np.eye(lat.n_sites)) / lat.measure
    return BiKernel("retarded", G, lat)


def advanced(op: KleinGordonOp) -> BiKernel:
    return BiKernel("advanced", retarded(op).matrix.T.copy(), op.lattice)


def causal(op: KleinGordonOp) -> BiKernel:
    G = retarded(op).matrix
    return BiKernel("causal", G - G.T, op.lattice)


def _require_homogeneous(op: KleinGordonOp) -> float:
    if not op.homogeneous:
        raise ValueError("mode construction needs a constant mass")
    return float(op.mass_sq[0])


def _assemble(lat: LatticeSpec, modes: ModeBasis, coeff: np.ndarray) -> np.ndarray:
    """Σ_k coeff[k, t, s] e_k(x) ē_k(y) as an N×N matrix."""
    E = modes.waves[modes.active]
    c = coeff[modes.active]
    out = np.einsum("kts,kx,ky->txsy", c, E, np.conj(E), optimize=True)
    return out.reshape(lat.n_sites, lat.n_sites)


def thermal_mode_factor(modes: ModeBasis, tau: np.ndarray, beta: float | None) -> np.ndarray:
    """Per-mode Δ⁺_β(τ) for (complex) time separations τ; beta None is the vacuum."""
    tau = np.asarray(tau)
    wt = modes.omega_tilde.reshape((-1,) + (1,) * tau.ndim)
    a = modes.amplitude.reshape(wt.shape)
    pos = np.exp(1j * wt * tau)
    if beta is None:
        return a * pos
    n = modes.n_beta(beta).reshape(wt.shape)
    return a * ((1 + n) * pos + n * np.exp(-1j * wt * tau))


def vacuum_two_point(op: KleinGordonOp) -> tuple:
    m2 = _require_homogeneous(op)
    lat = op.lattice
    modes = mode_basis(lat, m2)
    t = lat.times
    tau = t[:, None] - t[None, :]
    K = _assemble(lat, modes, thermal_mode_factor(modes, tau, None))
    return BiKernel("hadamard", K, lat, modes, None), modes


def kms_two_point(op: KleinGordonOp, beta: float) -> BiKernel:
    if not beta > 0:
        raise ValueError("beta must be positive")
    m2 = _require_homogeneous(op)
    lat = op.lattice
    modes = mode_basis(lat, m2)
    t = lat.times
    tau = t[:, None] - t[None, :]
    K = _assemble(lat, modes, thermal_mode_factor(modes, tau, beta))
    return BiKernel("thermal", K, lat, modes, float(beta))


def continue_imaginary(kernel: BiKernel, u: float) -> BiKernel:
    """Replace τ by τ + iu in every mode term of a thermal (or vacuum) kernel."""
    if kernel.modes is None:
        raise ValueError("kernel is not mode-analytic")
    beta = kernel.beta
    total = kernel.shift + float(u)
    if beta is not None and not (-1e-15 <= total <= beta + 1e-15):
        raise ValueError("continuation parameter outside [0, beta]")
    lat = kernel.lattice
    t = lat.times
    tau = t[:, None] - t[None, :] + 1j * total
    K = _assemble(lat, kernel.modes, thermal_mode_factor(kernel.modes, tau, beta))
    return replace(kernel, matrix=K, shift=total)


def feynman(op: KleinGordonOp, hadamard: BiKernel) -> BiKernel:
    A = advanced(op).matrix
    return BiKernel("feynman", hadamard.matrix + 1j * A, op.lattice, hadamard.modes, hadamard.beta)


def project_active_modes(lat: LatticeSpec, modes: ModeBasis, K: np.ndarray) -> np.ndarray:
    """Restrict a kernel to the span of the active spatial modes (drops the massless zero mode)."""
    E = modes.waves[modes.active]
    Pspace = E.T @ np.conj(E)  # projector on spatial sites
    Pfull = np.kron(np.eye(lat.n_t), Pspace)
    return Pfull @ K @ Pfull.T


def equal_time_profile(kernel: BiKernel, t_index: int = 0) -> np.ndarray:
    """Δ(t, 0; t, r) along the first spatial axis, r = 0..n_x-1."""
    lat = kernel.lattice
    S = lat.n_space
    row = kernel.matrix[t_index * S, t_index * S:(t_index + 1) * S]
    return row.reshape(lat.spatial_shape)[(slice(None),) + (0,) * (lat.d - 1)]


def kernel_to_csv(kernel: BiKernel, path) -> None:
    M = np.asarray(kernel.matrix)
    with open(path, "w") as fh:
        fh.write("row,col,re,im\n")
        for i, j in zip(*np.nonzero(np.abs(M) > 0)):
            fh.write(f"{i},{j},{M[i, j].real:.17g},{M[i, j].imag:.17g}\n")
