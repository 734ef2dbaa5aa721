"""S-matrices, quantum Møller maps, the β-map and the (generalised) perturbative agreement.

Every interaction carries at least one power of λ. A :class:`Theory` holds the
⋆ kernel Δ⁺, the Feynman kernel Δ^F and the retarded kernel Δ^R as λ-series of
matrices, so a theory deformed by a λ-weighted quadratic Q (theory "2") is
represented exactly up to the truncation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import functionals as fn
from .lattice import LatticeSpec
from .moller_classical import QuadraticPerturbation
from .propagators import KleinGordonOp, feynman, retarded, vacuum_two_point
from .series import Orders

# ---------------------------------------------------------------------------
# λ-series of matrices: lists [(order, matrix)] with None allowed for 𝕀 at order 0


def _dense(M, n):
    return np.eye(n) if M is None else M


def mseries_mul(A: list, B: list, l_max: int, n: int) -> list:
    out = []
    for ka, Ma in A:
        for kb, Mb in B:
            if ka + kb > l_max:
                continue
            if Ma is None:
                P = Mb
            elif Mb is None:
                P = Ma
            else:
                P = Ma @ Mb
            out.append((ka + kb, P))
    return _collect(out, n)


def mseries_add(*series) -> list:
    out: dict = {}
    for S in series:
        for k, M in S:
            out[k] = out[k] + M if k in out else M
    return sorted(out.items(), key=lambda t: t[0])


def mseries_scale(S: list, c) -> list:
    return [(k, c * M) for k, M in S]


def mseries_T(S: list) -> list:
    return [(k, None if M is None else M.T) for k, M in S]


def mseries_at(S: list, lam: float = 1.0, n: int | None = None) -> np.ndarray:
    out = None
    for k, M in S:
        M = _dense(M, n) if M is None else M
        out = lam**k * M if out is None else out + lam**k * M
    return out


# ---------------------------------------------------------------------------
# theories


@dataclass(frozen=True)
class Theory:
    lattice: LatticeSpec = field(repr=False)
    orders: Orders
    hadamard: list = field(repr=False)  # Δ⁺
    feynman: list = field(repr=False)  # Δ^F
    retarded: list = field(repr=False)  # Δ^R
    renorm_b: float = 0.0

    @property
    def n_sites(self) -> int:
        return self.lattice.n_sites

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.lattice.n_sites, self.lattice.measure)

    @property
    def advanced(self) -> list:
        return mseries_T(self.retarded)

    def star(self, F, G):
        return fn.contraction_product(F, G, self.hadamard)

    def tprod(self, F, G):
        return fn.contraction_product(F, G, self.feynman)

    def x_series(self, Q: QuadraticPerturbation) -> list:
        """X = λ μ Δ^R diag(M): the map R⁻¹ − 𝕀 for Q carrying λ."""
        lm = self.orders.l_max
        return [(k + 1, self.lattice.measure * G * Q.M[None, :]) for k, G in self.retarded if k + 1 <= lm]

    def moller_inverse_map(self, Q) -> list:
        return [(0, None)] + self.x_series(Q)

    def moller_map(self, Q) -> list:
        """R = (𝕀 + X)⁻¹ = Σ (−X)ⁿ."""
        n, lm = self.n_sites, self.orders.l_max
        mX = mseries_scale(self.x_series(Q), -1.0)
        out = [(0, None)]
        term = [(0, None)]
        for _ in range(lm):
            term = mseries_mul(term, mX, lm, n)
            if not term:
                break
            out = out + term
        return _collect(out, n)

    def deformed(self, Q: QuadraticPerturbation) -> "Theory":
        """Theory 2 for P₂ = P + λM with the transported state Δ⁺₂ = RΔ⁺R†."""
        n, lm = self.n_sites, self.orders.l_max
        R = self.moller_map(Q)
        Rt = mseries_T(R)
        GR = _collect(mseries_mul(R, self.retarded, lm, n), n)
        GA = _collect(mseries_mul(self.advanced, Rt, lm, n), n)
        Hp = _collect(mseries_mul(mseries_mul(R, self.hadamard, lm, n), Rt, lm, n), n)
        HF = _collect(mseries_add(Hp, mseries_scale(GA, 1j)), n)
        return Theory(self.lattice, self.orders, Hp, HF, GR, self.renorm_b)

    def functional_zero(self):
        return fn.PolyFunctional.zero(self.orders, self.n_sites)

    def one(self):
        return fn.PolyFunctional.constant(self.orders, self.n_sites, 1.0)


def _collect(S: list, n: int) -> list:
    out: dict = {}
    for k, M in S:
        out[k] = _dense(out[k], n) + _dense(M, n) if k in out else M
    return sorted(out.items(), key=lambda t: t[0])


def free_theory(op: KleinGordonOp, orders: Orders, renorm_b: float = 0.0) -> Theory:
    Dp, _ = vacuum_two_point(op)
    DF = feynman(op, Dp)
    GR = retarded(op)
    return Theory(op.lattice, orders, [(0, Dp.matrix)], [(0, DF.matrix)], [(0, GR.matrix)], renorm_b)


def d_series(th1: Theory, Q: QuadraticPerturbation) -> list:
    """d = Δ^F₂ − Δ^F₁ as a λ-series (no λ⁰ part)."""
    th2 = th1.deformed(Q)
    diff = _collect(mseries_add(th2.feynman, mseries_scale(th1.feynman, -1.0)), th1.n_sites)
    return [(k, M) for k, M in diff if k > 0]


def interacting_hadamard(th1: Theory, Q: QuadraticPerturbation) -> list:
    """Δ⁺_{1,Q} = Δ^F₁ − iΔ^A₂."""
    th2 = th1.deformed(Q)
    return _collect(mseries_add(th1.feynman, mseries_scale(th2.advanced, -1j)), th1.n_sites)


# ---------------------------------------------------------------------------
# S-matrices and Møller maps


def _require_interaction(V: fn.PolyFunctional):
    lo = V.min_lambda()
    if lo is not None and lo < 1:
        raise ValueError("interaction must be at least first order in λ")


def smatrix(th: Theory, V: fn.PolyFunctional) -> fn.PolyFunctional:
    """exp_T(iV/ħ) truncated at L_max powers of the interaction."""
    _require_interaction(V)
    S = th.one()
    term = th.one()
    # fold i/ħ into V first: shifting after the product would truncate the ħ^(n+k) layers it needs
    iV = V.shift(-1, 0).scale(1j)
    for n in range(1, th.orders.l_max + 1):
        term = th.tprod(term, iV).scale(1.0 / n)
        if term.is_zero():
            break
        S = S + term
    return S


def smatrix_star_inverse(th: Theory, S: fn.PolyFunctional) -> fn.PolyFunctional:
    """⋆-inverse by the geometric series in S − 1 (nilpotent under truncation)."""
    X = S - th.one()
    _require_interaction(X)
    out = th.one()
    term = th.one()
    for _ in range(th.orders.l_max):
        term = th.star(term, -X)
        if term.is_zero():
            break
        out = out + term
    return out


def quantum_moller(th: Theory, V: fn.PolyFunctional, F: fn.PolyFunctional) -> fn.PolyFunctional:
    """rħ_V(F) = S⁻¹ ⋆ (S ·_T F)."""
    S = smatrix(th, V)
    return th.star(smatrix_star_inverse(th, S), th.tprod(S, F))


def quantum_moller_inverse(th: Theory, V: fn.PolyFunctional, F: fn.PolyFunctional) -> fn.PolyFunctional:
    """(rħ_V)⁻¹(F) = S_{−V} ·_T (S_V ⋆ F)."""
    return th.tprod(smatrix(th, -V), th.star(smatrix(th, V), F))


def quantum_moller_recursive(th: Theory, V: fn.PolyFunctional, F: fn.PolyFunctional) -> fn.PolyFunctional:
    """rħ_V(F) = F + S⁻¹ ⋆ (S ·_T F − S ⋆ F); the bracket only keeps contractions through Δ^F − Δ⁺."""
    S = smatrix(th, V)
    Sinv = smatrix_star_inverse(th, S)
    return F + th.star(Sinv, th.tprod(S, F) - th.star(S, F))


def time_ordering_map(th: Theory, F: fn.PolyFunctional) -> fn.PolyFunctional:
    """T₁ on local functionals: identity up to the constant b in T(φ²) = φ² + ħb."""
    if th.renorm_b == 0.0:
        return F
    return fn.alpha(F, th.renorm_b * np.eye(th.n_sites) / th.lattice.measure)


# ---------------------------------------------------------------------------
# β-map and checks


def beta_map(th1: Theory, Q: QuadraticPerturbation, F: fn.PolyFunctional) -> fn.PolyFunctional:
    """β_{1,Q} = ℛ⁻¹ ∘ rħ_Q (Bogoliubov route); Q carries λ."""
    Qf = Q.functional(th1.orders)
    return fn.pullback(quantum_moller(th1, Qf, F), th1.moller_inverse_map(Q))


def beta_inverse(th1: Theory, Q: QuadraticPerturbation, F: fn.PolyFunctional) -> fn.PolyFunctional:
    Qf = Q.functional(th1.orders)
    return quantum_moller_inverse(th1, Qf, fn.pullback(F, th1.moller_map(Q)))


def beta_structural(th1: Theory, Q: QuadraticPerturbation, F: fn.PolyFunctional) -> fn.PolyFunctional:
    """α_d with d = Δ^F₂ − Δ^F₁."""
    return fn.alpha(F, d_series(th1, Q))


def deformation_check(th1: Theory, Q: QuadraticPerturbation, F: fn.PolyFunctional, probes=None) -> float:
    return fn.layer_residual(beta_map(th1, Q, F), beta_structural(th1, Q, F), probes)


def interacting_star(th1: Theory, Q: QuadraticPerturbation, F, G) -> fn.PolyFunctional:
    """F ⋆_{1,Q} G with the kernel Δ⁺_{1,Q}."""
    return fn.contraction_product(F, G, interacting_hadamard(th1, Q))


def interacting_star_conjugated(th1: Theory, Q: QuadraticPerturbation, F, G) -> fn.PolyFunctional:
    """(rħ)⁻¹(rħ(F) ⋆₁ rħ(G))."""
    Qf = Q.functional(th1.orders)
    return quantum_moller_inverse(th1, Qf, th1.star(quantum_moller(th1, Qf, F), quantum_moller(th1, Qf, G)))


def cocycle_check(th1: Theory, Q2: QuadraticPerturbation, Q3: QuadraticPerturbation, F, probes=None) -> float:
    """β_{1,Q₃} = β_{2,δQ} ∘ β_{1,Q₂} with δQ = Q₃ − Q₂ built over theory 2."""
    lhs = beta_map(th1, Q3, F)
    th2 = th1.deformed(Q2)
    rhs = beta_map(th2, Q3 - Q2, beta_map(th1, Q2, F))
    return fn.layer_residual(lhs, rhs, probes)


def gppa_sides(th1: Theory, Q: QuadraticPerturbation, V: fn.PolyFunctional, F: fn.PolyFunctional) -> tuple:
    """(rħ_{1,Q+T₁V}(F), ℛ_{1,Q} ∘ rħ_{2,T₂V} ∘ β_{1,Q}(F)) with T₂ = β_{1,Q} ∘ T₁."""
    TV = time_ordering_map(th1, V)
    lhs = quantum_moller(th1, Q.functional(th1.orders) + TV, F)
    th2 = th1.deformed(Q)
    V2 = beta_map(th1, Q, TV)
    inner = quantum_moller(th2, V2, beta_map(th1, Q, F))
    rhs = fn.pullback(inner, th1.moller_map(Q))
    return lhs, rhs


def gppa_check(th1: Theory, Q: QuadraticPerturbation, V: fn.PolyFunctional, F: fn.PolyFunctional, probes=None) -> float:
    lhs, rhs = gppa_sides(th1, Q, V, F)
    return fn.layer_residual(lhs, rhs, probes)


def factorisation_check(th: Theory, F, G, V, probes=None) -> float:
    """S_{F+G+V} = S_{F+V} ⋆ S_V⁻¹ ⋆ S_{V+G} for supp F later than supp G."""
    lhs = smatrix(th, F + G + V)
    SV = smatrix(th, V)
    rhs = th.star(th.star(smatrix(th, F + V), smatrix_star_inverse(th, SV)), smatrix(th, V + G))
    return fn.layer_residual(lhs, rhs, probes)


def time_ordered_intertwining_check(th: Theory, V, F, G, probes=None) -> float:
    """rħ_V(F ·_T G) = rħ_V(F) ⋆ rħ_V(G) for F ≳ G."""
    lhs = quantum_moller(th, V, th.tprod(F, G))
    rhs = th.star(quantum_moller(th, V, F), quantum_moller(th, V, G))
    return fn.layer_residual(lhs, rhs, probes)
