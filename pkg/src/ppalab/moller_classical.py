"""Classical Møller map for a quadratic perturbation Q = ½∫(Mφ² − 2jφ)dμ.

As plain matrices on field values, with X = μ Δ^R₁ diag(M):
    R = 𝕀 − μ Δ^R₂ diag(M),   R⁻¹ = 𝕀 + X,   r = −X,   R = Σ rⁿ.
The source j enters R as the affine shift μ Δ^R₂ j.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np

from . import functionals as fn
from .lattice import LatticeSpec
from .propagators import BiKernel, KleinGordonOp, _as_profile, retarded
from .series import FormalSeries, Orders


@dataclass(frozen=True)
class QuadraticPerturbation:
    lattice: LatticeSpec = field(repr=False)
    M: np.ndarray = field(repr=False)
    j: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_profile(cls, lattice: LatticeSpec, M, j=None) -> "QuadraticPerturbation":
        Mv = _as_profile(lattice, M)
        jv = None if j is None else _as_profile(lattice, j)
        return cls(lattice, Mv, jv)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.M) and (self.j is None or not np.any(self.j))

    def support(self) -> np.ndarray:
        mask = self.M != 0
        if self.j is not None:
            mask |= self.j != 0
        return np.flatnonzero(mask)

    def functional(self, orders: Orders, lam: int = 1) -> fn.PolyFunctional:
        """Q as a PolyFunctional carrying λ^lam."""
        lat = self.lattice
        w = np.full(lat.n_sites, lat.measure)
        c = FormalSeries.monomial(orders, 0, lam, 1.0)
        F = fn.PolyFunctional.local(orders, w, 0.5 * self.M, 2, c)
        if self.j is not None:
            F = F + fn.PolyFunctional.local(orders, w, -self.j, 1, c)
        return F

    def first_derivative_matrix(self) -> np.ndarray:
        return np.diag(self.M)

    def __add__(self, other: "QuadraticPerturbation"):
        j = None
        if self.j is not None or other.j is not None:
            j = (0 if self.j is None else self.j) + (0 if other.j is None else other.j)
        return QuadraticPerturbation(self.lattice, self.M + other.M, j)

    def __sub__(self, other: "QuadraticPerturbation"):
        j = None
        if self.j is not None or other.j is not None:
            j = (0 if self.j is None else self.j) - (0 if other.j is None else other.j)
        return QuadraticPerturbation(self.lattice, self.M - other.M, j)


@dataclass(frozen=True)
class MollerOperator:
    op1: KleinGordonOp = field(repr=False)
    op2: KleinGordonOp = field(repr=False)
    Q: QuadraticPerturbation = field(repr=False)
    forward: np.ndarray = field(repr=False)
    inverse: np.ndarray = field(repr=False)
    shift: np.ndarray | None = field(default=None, repr=False)
    term_norms: tuple = ()

    @property
    def adjoint(self) -> np.ndarray:
        """R† w.r.t. the measure-weighted pairing (constant weights: the transpose)."""
        return self.forward.conj().T

    def apply(self, phi: np.ndarray) -> np.ndarray:
        out = self.forward @ phi
        return out if self.shift is None else out + self.shift

    def inverse_residual(self) -> float:
        I = np.eye(self.forward.shape[0])
        return float(max(np.abs(self.forward @ self.inverse - I).max(), np.abs(self.inverse @ self.forward - I).max()))

    def x_matrix(self) -> np.ndarray:
        """X = R⁻¹ − 𝕀 = μ Δ^R₁ diag(M)."""
        return self.inverse - np.eye(self.inverse.shape[0])

    def forward_series(self, l_max: int) -> list:
        """R as a λ-series when Q carries λ: Σ λⁿ (−X)ⁿ."""
        X = self.x_matrix()
        out = [(0, None)]
        P = np.eye(X.shape[0])
        for n in range(1, l_max + 1):
            P = P @ (-X)
            out.append((n, P.copy()))
        return out

    def inverse_series(self) -> list:
        return [(0, None), (1, self.x_matrix())]


def _x_matrix(op1: KleinGordonOp, Q: QuadraticPerturbation) -> np.ndarray:
    lat = op1.lattice
    return lat.measure * retarded(op1).matrix * Q.M[None, :]


def classical_moller_exact(op1: KleinGordonOp, Q: QuadraticPerturbation) -> MollerOperator:
    lat = op1.lattice
    op2 = op1.with_extra_mass(Q.M)
    G2 = retarded(op2).matrix
    I = np.eye(lat.n_sites)
    R = I - lat.measure * G2 * Q.M[None, :]
    Rinv = I + _x_matrix(op1, Q)
    shift = None if Q.j is None else lat.measure * G2 @ Q.j
    return MollerOperator(op1, op2, Q, R, Rinv, shift)


def neumann_bound(lattice: LatticeSpec, Q: QuadraticPerturbation, n: int) -> float:
    """T^{2n} ‖M‖ⁿ / n! with T the lattice time span."""
    T = lattice.n_t * lattice.dt
    return T ** (2 * n) * float(np.abs(Q.M).max(initial=0.0)) ** n / factorial(n)


def block_norm(A: np.ndarray, lattice: LatticeSpec) -> float:
    """max_t Σ_s ‖A(t, s)‖₂ over spatial blocks; bounds A in sup-in-time, ℓ²-in-space."""
    S, n = lattice.n_space, lattice.n_t
    B = A.reshape(n, S, n, S).transpose(0, 2, 1, 3)
    norms = np.linalg.norm(B, ord=2, axis=(2, 3))
    return float(norms.sum(axis=1).max())


def classical_moller_neumann(op1: KleinGordonOp, Q: QuadraticPerturbation, n_terms: int) -> MollerOperator:
    """Partial sum Σ_{n≤n_terms} rⁿ with r = −μ Δ^R₁ diag(M); records (n, ‖rⁿ‖, bound)."""
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    lat = op1.lattice
    r = -_x_matrix(op1, Q)
    I = np.eye(lat.n_sites)
    term = I.copy()
    total = I.copy()
    norms = []
    for n in range(1, n_terms + 1):
        term = term @ r
        total += term
        norms.append((n, block_norm(term, lat), neumann_bound(lat, Q, n)))
    op2 = op1.with_extra_mass(Q.M)
    return MollerOperator(op1, op2, Q, total, I - r, None, tuple(norms))


def pushforward_propagators(R: MollerOperator, kernels: dict) -> dict:
    """Transport kernels of theory 1: Δ^R₂ = RΔ^R₁, Δ^A₂ = Δ^A₁R†, Δ₂ = RΔ₁R†, Δ⁺₂ = RΔ⁺₁R†."""
    F, Ft = R.forward, R.forward.T
    out = {}
    for kind, K in kernels.items():
        M = K.matrix if isinstance(K, BiKernel) else np.asarray(K)
        if kind == "retarded":
            out[kind] = F @ M
        elif kind == "advanced":
            out[kind] = M @ Ft
        else:
            out[kind] = F @ M @ Ft
    return out


def pullback(R: MollerOperator, F: fn.PolyFunctional) -> fn.PolyFunctional:
    """ℛ(F) = F ∘ R."""
    return fn.pullback(F, R.forward, R.shift)


def pullback_inverse(R: MollerOperator, F: fn.PolyFunctional) -> fn.PolyFunctional:
    """ℛ⁻¹(F) = F ∘ R⁻¹ (including the affine part for a source)."""
    if R.shift is None:
        return fn.pullback(F, R.inverse)
    return fn.pullback(F, R.inverse, -R.inverse @ R.shift)


def causal_future_mask(lattice: LatticeSpec, sites) -> np.ndarray:
    """Sites in the lattice dependence cone J⁺ of the given sites (one spatial step per time step)."""
    sites = np.asarray(sites, dtype=int)
    t = lattice.time_index()
    x = lattice.spatial_coords()
    xs = np.tile(x, (lattice.n_t, 1))
    mask = np.zeros(lattice.n_sites, dtype=bool)
    n = lattice.n_x
    for s in sites:
        diff = np.abs(xs - xs[s])
        dist = np.minimum(diff, n - diff).sum(axis=1)
        mask |= (t >= t[s]) & (dist <= t - t[s])
    return mask


def intertwining_residual(R: MollerOperator) -> float:
    """P₂ R = P₁ on the rows whose stencil stays on the grid."""
    rows = R.op1.interior_rows()
    return float(np.abs((R.op2.matrix @ R.forward - R.op1.matrix)[rows]).max() / np.abs(R.op1.matrix).max())


def support_residual(R: MollerOperator) -> float:
    """max |R − 𝕀| on rows outside J⁺(supp Q)."""
    outside = ~causal_future_mask(R.op1.lattice, R.Q.support())
    D = R.forward - np.eye(R.forward.shape[0])
    return float(np.abs(D[outside]).max(initial=0.0))


def neumann_csv(R: MollerOperator, path) -> None:
    with open(path, "w") as fh:
        fh.write("n,norm,bound\n")
        for n, norm, bound in R.term_norms:
            fh.write(f"{n},{norm:.17g},{bound:.17g}\n")
