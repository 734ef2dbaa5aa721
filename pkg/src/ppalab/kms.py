"""Thermal Wick calculus and interacting KMS expectations.

The site set is a set of time nodes (Gauss-Legendre nodes on the pieces of a
piecewise-linear temporal cutoff plus the sharp times of the observable) times
the spatial torus. Kernels come from the mode formulas evaluated at arbitrary
complex time separations, so imaginary-time translations α_{iu} are exact.

Conventions
-----------
* Local functionals are Wick ordered w.r.t. a reference two-point function
  (``ref="vacuum"`` or ``"thermal"``); ⋆ and ·_T use the reference kernels.
* The thermal state adds the intra-entry pairing d_ref = Δ⁺_β − Δ⁺_ref; pairs
  between entries a < b carry Δ⁺_β(τ + i(u_b − u_a)).
* α_t(F)(φ) = F(φ(· − t e₀)); the cocycle generator is K = rħ_V(V(χ̇⁻)) with
  dU/dt|₀ = iK/ħ, hence U(iβ) = Σ (−1/ħ)ⁿ ∫_{βSₙ} α_{iu₁}K ⋆ … ⋆ α_{iuₙ}K.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy import integrate, optimize

from . import functionals as fn
from . import moller_quantum as mq
from .lattice import LatticeSpec, build_lattice
from .propagators import mode_parameters, ZERO_MODE_TOL
from .series import FormalSeries, Orders

# ---------------------------------------------------------------------------
# spatial torus and site grids


@dataclass(frozen=True)
class Torus:
    n_x: int
    dx: float
    d: int = 1

    @cached_property
    def _lat(self) -> LatticeSpec:
        return build_lattice(3, 1.0, self.d, self.n_x, self.dx)

    @property
    def n_space(self) -> int:
        return self.n_x**self.d

    @property
    def cell(self) -> float:
        return self.dx**self.d

    @property
    def length(self) -> float:
        return self.n_x * self.dx

    def k2(self) -> np.ndarray:
        return self._lat.lattice_k2()

    def waves(self) -> np.ndarray:
        return self._lat.plane_waves()


@dataclass(frozen=True)
class SiteGrid:
    """Time nodes with quadrature weights times the spatial torus; flat index t * n_space + x."""

    times: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    torus: Torus

    @property
    def n_times(self) -> int:
        return self.times.size

    @property
    def n_sites(self) -> int:
        return self.n_times * self.torus.n_space

    def site_weights(self) -> np.ndarray:
        return np.repeat(self.weights, self.torus.n_space) * self.torus.cell

    def time_index(self, t: float) -> int:
        hits = np.flatnonzero(np.isclose(self.times, t, rtol=0, atol=1e-12))
        if hits.size == 0:
            raise ValueError(f"time {t} is not a grid node")
        return int(hits[0])

    def sharp_density(self, t: float, profile) -> np.ndarray:
        """Density of ∫ h(x) (…)(t, x) dx^d at a single time."""
        out = np.zeros((self.n_times, self.torus.n_space), dtype=complex)
        out[self.time_index(t)] = np.broadcast_to(np.asarray(profile, dtype=complex), (self.torus.n_space,))
        return out.ravel() * self.torus.cell

    def smeared_density(self, chi_values, profile) -> np.ndarray:
        """Density of ∫ χ(t) h(x) (…) dt dx^d with the node weights."""
        prof = np.broadcast_to(np.asarray(profile, dtype=complex), (self.torus.n_space,))
        return (np.asarray(chi_values)[:, None] * self.weights[:, None] * prof[None, :]).ravel() * self.torus.cell

    def probe_fields(self, n: int = 3, seed: int = 0) -> np.ndarray:
        """Smooth real random fields sampled on the sites."""
        rng = np.random.default_rng(seed)
        S = self.torus.n_space
        out = np.zeros((n, self.n_times, S))
        for p in range(n):
            for _ in range(4):
                w = rng.uniform(0.3, 2.0)
                ph = rng.uniform(0, 2 * np.pi)
                out[p] += np.cos(w * self.times + ph)[:, None] * rng.standard_normal(S)[None, :]
        return out.reshape(n, -1)


# ---------------------------------------------------------------------------
# temporal cutoffs


@dataclass(frozen=True)
class TemporalCutoff:
    """χ = 0 for t ≤ −a, linear up to 1 at −b, 1 on [−b, b_f], linear down to 0 at a_f."""

    a: float
    b: float
    b_f: float | None = None
    a_f: float | None = None

    def __post_init__(self):
        bf = self.b if self.b_f is None else self.b_f
        af = self.a if self.a_f is None else self.a_f
        if not (0 < self.b < self.a and 0 < bf < af):
            raise ValueError("cutoff needs 0 < b < a on both sides")

    @property
    def future(self) -> tuple:
        return (self.b if self.b_f is None else self.b_f, self.a if self.a_f is None else self.a_f)

    def breakpoints(self) -> list:
        bf, af = self.future
        return [-self.a, -self.b, bf, af]

    def in_class(self, eps: float) -> bool:
        """χ ∈ ℐ_ε: supp χ ⊂ (−2ε, 2ε) and χ = 1 on (−ε, ε)."""
        bf, af = self.future
        return self.a < 2 * eps and af < 2 * eps and self.b >= eps and bf >= eps

    def value(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        bf, af = self.future
        up = np.clip((t + self.a) / (self.a - self.b), 0, 1)
        down = np.clip((af - t) / (af - bf), 0, 1)
        return np.minimum(up, down)

    def past_derivative(self, t) -> np.ndarray:
        """χ̇⁻(t) = χ̇(t) Θ(−t): the slope on the open past ramp."""
        t = np.asarray(t, dtype=float)
        return np.where((t > -self.a) & (t < -self.b), 1.0 / (self.a - self.b), 0.0)


def gauss_legendre(a: float, b: float, n: int) -> tuple:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def build_grid(torus: Torus, chi: TemporalCutoff, sharp_times=(), nodes: int = 16) -> SiteGrid:
    """Gauss-Legendre nodes on each linear piece of χ, pieces split at the sharp times."""
    cuts = sorted(set(chi.breakpoints()) | {float(t) for t in sharp_times if chi.breakpoints()[0] < t < chi.breakpoints()[-1]})
    ts, ws = [], []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        x, w = gauss_legendre(lo, hi, nodes)
        ts.append(x)
        ws.append(w)
    for t in sharp_times:
        ts.append(np.array([float(t)]))
        ws.append(np.array([0.0]))
    times = np.concatenate(ts)
    weights = np.concatenate(ws)
    order = np.argsort(times, kind="stable")
    return SiteGrid(times[order], weights[order], torus)


# ---------------------------------------------------------------------------
# thermal state


def _mode_terms(omega, amp, tau, beta):
    """Per-mode Δ⁺_β(τ) and its ω-derivative; beta None is the vacuum."""
    e_p = np.exp(1j * omega * tau)
    e_m = np.exp(-1j * omega * tau)
    if beta is None:
        f = amp * e_p
        df = -f / omega + amp * 1j * tau * e_p
        return f, df
    n = 1.0 / np.expm1(beta * omega)
    dn = -beta * n * (1 + n)
    f = amp * ((1 + n) * e_p + n * e_m)
    df = -f / omega + amp * (dn * (e_p + e_m) + 1j * tau * ((1 + n) * e_p - n * e_m))
    return f, df


def _causal_terms(omega, cell, tau):
    """Per-mode causal propagator sin(ωτ)/(cell ω) and its ω-derivative."""
    s = np.sin(omega * tau)
    f = s / (cell * omega)
    df = (tau * np.cos(omega * tau) / omega - s / omega**2) / cell
    return f, df


@dataclass(frozen=True)
class ThermalState:
    """Free β-KMS state of the Klein-Gordon field on the torus in continuous time.

    ``mass_shift`` adds λ·mass_shift to m²; kernels then become first-order
    λ-series [(0, K), (1, mass_shift ∂K/∂m²)].
    """

    beta: float
    m2: float
    torus: Torus
    ref: str = "vacuum"
    mass_shift: float = 0.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.m2 < 0:
            raise ValueError("tachyonic mass not supported")
        if self.ref not in ("vacuum", "thermal"):
            raise ValueError("ref must be 'vacuum' or 'thermal'")

    @cached_property
    def _modes(self):
        k2 = self.torus.k2()
        omega, _, amp = mode_parameters(k2, self.m2, None, self.torus.cell)
        active = omega > ZERO_MODE_TOL
        return omega, amp, active

    def n_beta(self) -> np.ndarray:
        omega, _, active = self._modes
        out = np.zeros_like(omega)
        out[active] = 1.0 / np.expm1(self.beta * omega[active])
        return out

    def _assemble(self, coeff: np.ndarray, n_a: int, n_b: int) -> np.ndarray:
        E = self.torus.waves()
        _, _, active = self._modes
        out = np.einsum("kij,kx,ky->ixjy", coeff[active], E[active], np.conj(E[active]), optimize=True)
        return out.reshape(n_a * self.torus.n_space, n_b * self.torus.n_space)

    def _series(self, fun, times_a, times_b, shift, beta):
        omega, amp, active = self._modes
        tau = np.asarray(times_a)[:, None] - np.asarray(times_b)[None, :] + 1j * shift
        w = np.where(active, omega, 1.0)[:, None, None]
        a = np.where(active, amp, 0.0)[:, None, None]
        if fun == "two_point":
            f, df = _mode_terms(w, a, tau[None], beta)
        else:
            f, df = _causal_terms(w, self.torus.cell, tau[None].real)
        na, nb = len(times_a), len(times_b)
        out = [(0, self._assemble(f, na, nb))]
        if self.mass_shift:
            dm2 = df / (2 * w)  # ∂ω/∂m² = 1/(2ω)
            out.append((1, self.mass_shift * self._assemble(dm2, na, nb)))
        return out

    # kernels on a grid --------------------------------------------------------
    def thermal(self, grid: SiteGrid, shift: float = 0.0, grid_b: SiteGrid | None = None) -> list:
        gb = grid if grid_b is None else grid_b
        if not -1e-12 <= shift <= self.beta + 1e-12:
            raise ValueError("continuation parameter outside [0, beta]")
        return self._series("two_point", grid.times, gb.times, shift, self.beta)

    def vacuum(self, grid: SiteGrid) -> list:
        return self._series("two_point", grid.times, grid.times, 0.0, None)

    def causal(self, grid: SiteGrid) -> list:
        return self._series("causal", grid.times, grid.times, 0.0, None)

    def advanced(self, grid: SiteGrid) -> list:
        """Δ^A(x, y) = −Δ(x, y) for t_x < t_y, else 0."""
        mask = (grid.times[:, None] < grid.times[None, :]).astype(float)
        M = np.kron(mask, np.ones((self.torus.n_space, self.torus.n_space)))
        return [(k, -K * M) for k, K in self.causal(grid)]

    def reference(self, grid: SiteGrid) -> list:
        return self.vacuum(grid) if self.ref == "vacuum" else self.thermal(grid)

    def d_ref(self, grid: SiteGrid) -> list:
        if self.ref == "thermal":
            return []
        return _sub(self.thermal(grid), self.vacuum(grid))

    def reference_theory(self, grid: SiteGrid, orders: Orders) -> mq.Theory:
        """⋆ and ·_T of the reference algebra on the grid."""
        H = self.reference(grid)
        A = self.advanced(grid)
        F = _add(H, [(k, 1j * M) for k, M in A])
        return mq.Theory(grid, orders, H, F, [(k, M.T) for k, M in A])

    def thermal_feynman(self, grid: SiteGrid) -> list:
        return _add(self.thermal(grid), [(k, 1j * M) for k, M in self.advanced(grid)])


def _add(A: list, B: list) -> list:
    out: dict = {}
    for k, M in list(A) + list(B):
        out[k] = out[k] + M if k in out else M
    return sorted(out.items(), key=lambda t: t[0])


def _sub(A: list, B: list) -> list:
    return _add(A, [(k, -M) for k, M in B])


# ---------------------------------------------------------------------------
# expectations


def gaussian_expectation(state: ThermalState, grid: SiteGrid, F: fn.PolyFunctional) -> FormalSeries:
    """ω^β(F): perfect pairings with d_ref = Δ⁺_β − Δ⁺_ref."""
    d = state.d_ref(grid)
    return fn.multi_entry_expectation([F], lambda a, b: [], d if d else None)


def _cross(state: ThermalState, grid: SiteGrid, offsets):
    cache: dict = {}

    def cross(a, b):
        s = float(offsets[b] - offsets[a])
        if s not in cache:
            cache[s] = state.thermal(grid, s)
        return cache[s]

    return cross


def check_offsets(offsets, beta: float):
    u = np.asarray(offsets, dtype=float)
    if np.any(u < -1e-12) or np.any(u > beta + 1e-12) or np.any(np.diff(u) < -1e-12):
        raise ValueError("offsets must satisfy 0 <= u_1 <= ... <= u_n <= beta")


def connected_correlator(state: ThermalState, grid: SiteGrid, entries, offsets, connected: bool = True) -> FormalSeries:
    """ω^β_c(α_{iu₁}F₁ ⋆ … ⋆ α_{iuₙ}Fₙ) (or the full expectation with connected=False)."""
    check_offsets(offsets, state.beta)
    d = state.d_ref(grid)
    return fn.multi_entry_expectation(list(entries), _cross(state, grid, offsets), d if d else None, connected)


def simplex_rule(n: int, beta: float, nodes: int = 16) -> tuple:
    """Gauss-Legendre product rule mapped onto βSₙ = {0 ≤ u₁ ≤ … ≤ uₙ ≤ β}."""
    if nodes < 2:
        raise ValueError("quadrature order must be >= 2")
    if n == 0:
        return np.zeros((1, 0)), np.ones(1)
    x, w = gauss_legendre(0.0, 1.0, nodes)
    pts, wts = [], []
    for idx in np.ndindex(*(nodes,) * n):
        s = x[list(idx)]
        ws = np.prod(w[list(idx)])
        u = np.empty(n)
        u[n - 1] = beta * s[n - 1]
        for k in range(n - 2, -1, -1):
            u[k] = u[k + 1] * s[k]
        jac = beta**n * np.prod([s[j] ** j for j in range(1, n)])
        pts.append(u)
        wts.append(ws * jac)
    return np.array(pts), np.array(wts)


@dataclass
class KMSProblem:
    """An interacting KMS expectation E = ω^β_{V(χ)}(rħ_{V(χ)}(F)) set up on its grid."""

    state: ThermalState
    chi: TemporalCutoff
    coupling: float  # V = λ g ∫ χ φ^power
    observable: object  # callable(grid) -> PolyFunctional
    sharp_times: tuple = (0.0,)
    orders: Orders = field(default_factory=lambda: Orders(2, 1))
    power: int = 4
    nodes: int = 16
    extra: object = None  # callable(grid, chi_values) -> PolyFunctional added to V (λ¹)
    dress: object = None  # callable(grid, F) -> F applied to V, χ̇⁻-source and observable

    @cached_property
    def grid(self) -> SiteGrid:
        return build_grid(self.state.torus, self.chi, self.sharp_times, self.nodes)

    @cached_property
    def theory(self) -> mq.Theory:
        return self.state.reference_theory(self.grid, self.orders)

    def interaction(self, chi_values) -> fn.PolyFunctional:
        g = self.grid
        c = FormalSeries.monomial(self.orders, 0, 1, self.coupling)
        dens = g.smeared_density(chi_values, 1.0)
        V = fn.PolyFunctional([(fn.Diagram((fn.Vertex(dens, ((None, self.power),)),)), c)], self.orders, g.n_sites)
        if self.extra is not None:
            V = V + self.extra(g, chi_values)
        return V if self.dress is None else self.dress(g, V)

    @cached_property
    def V(self) -> fn.PolyFunctional:
        return self.interaction(self.chi.value(self.grid.times))

    @cached_property
    def K(self) -> fn.PolyFunctional:
        """Cocycle generator rħ_{V(χ)}(V(χ̇⁻))."""
        return mq.quantum_moller(self.theory, self.V, self.interaction(self.chi.past_derivative(self.grid.times)))

    @cached_property
    def F(self) -> fn.PolyFunctional:
        F = self.observable(self.grid)
        return F if self.dress is None else self.dress(self.grid, F)

    @cached_property
    def F_int(self) -> fn.PolyFunctional:
        return mq.quantum_moller(self.theory, self.V, self.F)

    @cached_property
    def K_scaled(self) -> fn.PolyFunctional:
        """−K/ħ: the prefactor is folded in before contracting so no layer leaves the kept grades."""
        return self.K.scale(FormalSeries.monomial(self.orders, -1, 0, -1.0))

    def simplex_terms(self, n_max: int | None = None) -> list:
        """[(n, FormalSeries)] of (−1/ħ)ⁿ ∫_{βSₙ} ω_c(F ⋆ α_{iu₁}K ⋆ …) dU."""
        n_max = self.orders.l_max if n_max is None else n_max
        out = []
        for n in range(n_max + 1):
            pts, wts = simplex_rule(n, self.state.beta, self.nodes)
            acc = FormalSeries(self.orders)
            for u, w in zip(pts, wts):
                offs = np.concatenate([[0.0], u])
                acc = acc + connected_correlator(self.state, self.grid, [self.F_int] + [self.K_scaled] * n, offs) * w
            out.append((n, acc))
        return out

    def simplex_form(self, n_max: int | None = None) -> FormalSeries:
        total = FormalSeries(self.orders)
        for _, s in self.simplex_terms(n_max):
            total = total + s
        return total

    def ratio_form(self, n_max: int | None = None) -> FormalSeries:
        """ω(F ⋆ U(iβ)) / ω(U(iβ)) with full (not truncated) expectations."""
        n_max = self.orders.l_max if n_max is None else n_max
        num = FormalSeries(self.orders)
        den = FormalSeries(self.orders)
        for n in range(n_max + 1):
            pts, wts = simplex_rule(n, self.state.beta, self.nodes)
            a = FormalSeries(self.orders)
            b = FormalSeries(self.orders)
            for u, w in zip(pts, wts):
                offs = np.concatenate([[0.0], u])
                a = a + connected_correlator(self.state, self.grid, [self.F_int] + [self.K_scaled] * n, offs, False) * w
                if n:
                    b = b + connected_correlator(self.state, self.grid, [self.K_scaled] * n, u, False) * w
                else:
                    b = FormalSeries.one(self.orders)
            num = num + a
            den = den + b
        return num / den


def interacting_kms_expectation(problem: KMSProblem, n_max: int | None = None, form: str = "simplex") -> FormalSeries:
    if form == "simplex":
        return problem.simplex_form(n_max)
    if form == "ratio":
        return problem.ratio_form(n_max)
    raise ValueError("form must be 'simplex' or 'ratio'")


def chi_independence_check(problem: KMSProblem, chi_other: TemporalCutoff, eps: float | None = None) -> float:
    """Relative change of E at every kept order when χ is replaced by χ′."""
    if eps is not None and not (problem.chi.in_class(eps) or chi_other.in_class(eps)):
        raise ValueError("cutoffs violate the ε class")
    other = replace(problem, chi=chi_other)
    a, b = problem.simplex_terms(), other.simplex_terms()
    ea = sum((s for _, s in a), FormalSeries(problem.orders))
    eb = sum((s for _, s in b), FormalSeries(problem.orders))
    scale = sum((np.abs(s.coeffs) for _, s in a + b), np.zeros(problem.orders.shape))
    return fn.series_residual(ea, eb, scale)


def massless_problem(beta: float, torus: Torus, chi: TemporalCutoff, coupling: float, observable,
                     m_q: float, orders: Orders, **kw) -> KMSProblem:
    """Massless KMS expectation through an auxiliary mass m_Q carried by λ.

    Theory 2 is the free field with m² = λ m_Q² (kernels to first order in λ),
    the interaction is W = α_D(V(χ) − Q(χ)) with Q = ½ λ m_Q² ∫χφ² and
    D = Δ^F₂ − Δ^F₁, and observables enter as α_D(F).
    """
    if orders.l_max != 1:
        raise ValueError("the mass expansion is first order: use l_max = 1")
    state = ThermalState(beta, 0.0, torus, "vacuum", m_q**2)

    def extra(grid, chi_values):
        dens = grid.smeared_density(chi_values, 1.0)
        c = FormalSeries.monomial(orders, 0, 1, -0.5 * m_q**2)
        return fn.PolyFunctional([(fn.Diagram((fn.Vertex(dens, ((None, 2),)),)), c)], orders, grid.n_sites)

    def dress(grid, F):
        D = [(k, M) for k, M in _add(state.vacuum(grid), [(k, 1j * A) for k, A in state.advanced(grid)]) if k > 0]
        return fn.alpha(F, D) if (m_q and D) else F

    return KMSProblem(state, chi, coupling, observable, orders=orders,
                      extra=extra if m_q else None, dress=dress, **kw)


# ---------------------------------------------------------------------------
# observables on grids


def sharp_local(t: float, profile, power: int, coeff: float = 1.0):
    def build(grid: SiteGrid, orders: Orders):
        dens = grid.sharp_density(t, profile)
        c = FormalSeries.monomial(orders, 0, 0, coeff)
        groups = ((None, power),) if power else ()
        return fn.PolyFunctional([(fn.Diagram((fn.Vertex(dens, groups),)), c)], orders, grid.n_sites)

    return build


# ---------------------------------------------------------------------------
# cocycle unitaries in real time (first order)


@dataclass
class CocycleUnitary:
    """U(t) = 1 + (i/ħ) ∫₀ᵗ α_s K ds at λ¹, stored as offset-smeared copies of K.

    Each entry is (weight, s) meaning weight · α_s(K); α_s moves every node time
    of K's grid to t − s.
    """

    problem: KMSProblem
    entries: list

    def evaluate(self, probe) -> FormalSeries:
        """U evaluated on a probe field given as a callable φ(times) -> (len(times), n_space)."""
        p = self.problem
        out = FormalSeries.one(p.orders)
        c = FormalSeries.monomial(p.orders, -1, 0, 1j)
        for w, s in self.entries:
            vals = probe(p.grid.times - s).reshape(1, -1)
            out = out + c * complex(w) * FormalSeries(p.orders, p.K.evaluate(vals)[0])
        return out


def cocycle_unitary(problem: KMSProblem, t: float, nodes: int = 16) -> CocycleUnitary:
    span = problem.grid.times.max() - problem.grid.times.min()
    if abs(t) > span:
        raise ValueError("t beyond the grid span")
    if t == 0:
        return CocycleUnitary(problem, [])
    s, w = gauss_legendre(0.0, t, nodes)
    return CocycleUnitary(problem, list(zip(w, s)))


def translate_unitary(U: CocycleUnitary, t: float) -> CocycleUnitary:
    """α_t(U)."""
    return CocycleUnitary(U.problem, [(w, s + t) for w, s in U.entries])


def compose_first_order(U: CocycleUnitary, W: CocycleUnitary) -> CocycleUnitary:
    """U ⋆ W at λ¹ (cross terms are O(λ²))."""
    return CocycleUnitary(U.problem, U.entries + W.entries)


def smooth_probe(torus: Torus, seed: int = 0):
    rng = np.random.default_rng(seed)
    S = torus.n_space
    freqs = rng.uniform(0.3, 2.0, 4)
    phases = rng.uniform(0, 2 * np.pi, 4)
    amps = rng.standard_normal((4, S))

    def probe(times):
        t = np.asarray(times)[:, None, None]
        return np.sum(np.cos(freqs[None, :, None] * t + phases[None, :, None]) * amps[None], axis=1)

    return probe


# ---------------------------------------------------------------------------
# thermal mass and clustering


def continuum_coincidence(beta: float, m: float = 0.0) -> float:
    """d(x, x) = ∫ d³k/(2π)³ n_β(ω)/ω for the continuum field in 3+1 dimensions."""
    if not beta > 0:
        raise ValueError("beta must be positive")

    def integrand(k):
        w = np.sqrt(k * k + m * m)
        if w == 0:
            return 1.0 / beta if k == 0 else 0.0
        if beta * w > 700:
            return 0.0
        return k * k / w / np.expm1(beta * w)

    val, _ = integrate.quad(integrand, 0.0, np.inf, epsabs=0, epsrel=1e-12, limit=200)
    return val / (2 * np.pi**2)


def lattice_coincidence(state: ThermalState) -> float:
    """d(x, x) = Σ_k 2 a_k n_k on the torus (translation invariant)."""
    omega, amp, active = state._modes
    n = state.n_beta()
    return float(np.sum(2 * amp[active] * n[active]) / state.torus.n_space)


@dataclass(frozen=True)
class ThermalMass:
    d_coincidence: np.ndarray
    m2: FormalSeries
    decomposition: dict


def thermal_mass(orders: Orders, d_values, coupling: float = 1.0, weights=None) -> ThermalMass:
    """Split α_d(λ g∫φ⁴) = V + Q + C and read m²_β off Q = ½∫ m²_β φ².

    d_values are the coincidence values d(x, x) (diagonal kernel entries).
    """
    d_values = np.atleast_1d(np.asarray(d_values, dtype=float))
    n = d_values.size
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    V = fn.PolyFunctional.local(orders, w, np.full(n, coupling), 4, FormalSeries.monomial(orders, 0, 1, 1.0))
    out = fn.alpha(V, np.diag(d_values))
    parts: dict = {0: [], 2: [], 4: []}
    for D, c in out.terms:
        parts[D.degree].append((D, c))
    (D2, c2), = parts[2]
    dens = D2.vertices[0].density.real / w  # ½ m² per unit ħλ, up to the coefficient
    lead = c2[1, 1]
    m2_site = 2 * dens * lead.real
    m2 = FormalSeries.monomial(orders, 1, 1, float(np.mean(m2_site)))
    return ThermalMass(d_values, m2, {"V": parts[4], "Q": parts[2], "C": parts[0], "m2_site": m2_site})


def thermal_mass_scan(betas, coupling: float = 1.0, orders: Orders | None = None) -> list:
    """Rows (β, d(x,x), m²_β at ħλ, m²_β β²) from the continuum massless quadrature."""
    orders = Orders(1, 1) if orders is None else orders
    rows = []
    for b in betas:
        d = continuum_coincidence(b)
        tm = thermal_mass(orders, [d], coupling)
        m2 = tm.m2[1, 1].real
        rows.append((float(b), d, m2, m2 * b * b))
    return rows


@dataclass(frozen=True)
class ClusterFit:
    fitted_rate: float
    naive_rate: float
    expected: float
    r: np.ndarray = field(repr=False)
    profile: np.ndarray = field(repr=False)


def equal_time_profile(state: ThermalState) -> tuple:
    """|Δ⁺_β(0, r)| along the first torus axis."""
    g = SiteGrid(np.array([0.0]), np.array([1.0]), state.torus)
    K = state.thermal(g)[0][1]
    row = K[0].reshape(state.torus._lat.spatial_shape)
    prof = np.abs(row[(slice(None),) + (0,) * (state.torus.d - 1)])
    r = np.arange(state.torus.n_x) * state.torus.dx
    return r, prof


def cluster_decay_fit(state: ThermalState) -> ClusterFit:
    """Decay rate of the equal-time thermal kernel over r ∈ [2/m, L/2].

    The torus sums periodic images, so the profile is fitted as
    A cosh(κ (L/2 − r)); the plain log-linear slope is reported alongside.
    """
    if state.m2 <= 0:
        raise ValueError("clustering fit needs m > 0")
    m = np.sqrt(state.m2)
    L = state.torus.length
    if L < 8 / m:
        raise ValueError("torus too small: need n_x dx >= 8/m")
    r, prof = equal_time_profile(state)
    sel = (r >= 2 / m - 1e-12) & (r <= L / 2 + 1e-12)
    rs, ys = r[sel], prof[sel]
    if np.log10(ys.max() / ys.min()) < 2:
        raise ValueError("dynamic range below two decades")
    naive = -np.polyfit(rs, np.log(ys), 1)[0]

    def resid(kappa):
        basis = np.log(np.cosh(kappa * (L / 2 - rs)))
        A = np.mean(np.log(ys) - basis)
        return np.sum((np.log(ys) - A - basis) ** 2)

    res = optimize.minimize_scalar(resid, bounds=(0.1 * naive, 10 * naive), method="bounded", options={"xatol": 1e-12})
    return ClusterFit(float(res.x), float(naive), float(m), r, prof)
