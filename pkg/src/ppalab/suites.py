"""Acceptance checks grouped into suites; each check returns a residual compared against a tolerance."""

from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import functionals as fn
from . import kms
from . import modes as md
from . import moller_classical as mc
from . import moller_quantum as mq
from .lattice import build_lattice
from .propagators import (build_operator, causal, continue_imaginary, feynman, kms_two_point,
                          retarded, vacuum_two_point)
from .series import FormalSeries, Orders

SUITES = ("propagators", "moller", "ppa", "gppa", "kms", "thermal-mass", "modes")

DEFAULT_CONFIG = {
    "lattice": {"n_t": 8, "dt": 0.1, "d": 1, "n_x": 8, "dx": 0.2},
    "orders": {"h_max": 2, "l_max": 2},
    "mass": 1.0,
    "beta": 2.0,
    "seed": 0,
    "kms": {
        "n_x": 8, "dx": 0.5, "d": 1, "mass": 1.0, "coupling": 1.0, "nodes": 16,
        "chi": {"a": 1.6, "b": 1.0}, "chi_alt": {"a": 1.9, "b": 1.2, "a_f": 1.7, "b_f": 1.1},
        "eps": 1.0, "eps_alt": 1.5, "chi_eps_alt": {"a": 2.8, "b": 1.6},
        "m_q": [0.5, 1.0],
    },
    "thermal_mass": {"betas": [1.0, 2.0, 4.0, 8.0]},
    "cluster": {"masses": [0.5, 1.0, 2.0], "n_x": 128, "width": 16.0},
    "modes": {
        "m1_sq": 1.0, "m2_sq": 2.0, "mu_list": [4.0, 8.0, 16.0, 32.0], "k_list": [1.0, 2.0],
        "r_mu": 10.0, "r_k": 1.0, "r_terms": 3, "kernel_mu": 32.0, "kernel_r": [0.5, 1.0, 2.0],
    },
    "tolerances": {
        "propagators": 1e-12, "moller": 1e-10, "neumann_error": 1e-8, "ppa": 1e-9, "ppa_strict": 1e-10,
        "gppa": 1e-9, "degenerate": 1e-14, "factorisation": 1e-10, "kms_boundary": 1e-10,
        "kms_forms": 1e-8, "kms_chi": 1e-6, "kms_norm": 0.0, "cocycle_law": 1e-9, "generator": 1e-5,
        "coincidence": 1e-3, "mass_scan": 1e-2, "m_q": 1e-6, "wronskian": 1e-8, "monotone": 1e-9,
        "ir_bound": 1e-9, "slope": 0.15, "r_lambda": 1e-6, "adiabatic": 1e-8, "kernel": 1e-3,
        "cluster": 0.1, "sudden": 2e-3, "exact": 1e-10,
    },
}


class ConfigError(ValueError):
    pass


def merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = v
    return out


def validate(cfg: dict) -> dict:
    if not cfg["beta"] > 0:
        raise ConfigError("beta must be positive")
    for b in cfg["thermal_mass"]["betas"]:
        if not b > 0:
            raise ConfigError("beta must be positive")
    L = cfg["lattice"]
    if L["n_t"] < 3 or L["n_x"] < 1 or L["dt"] <= 0 or L["dx"] <= 0 or L["d"] < 1:
        raise ConfigError("invalid lattice parameters")
    o = cfg["orders"]
    if o["h_max"] < 0 or o["l_max"] < 0:
        raise ConfigError("orders must be non-negative")
    if cfg["mass"] < 0 or cfg["kms"]["mass"] < 0:
        raise ConfigError("tachyonic masses are not supported")
    if any(m <= 0 for m in cfg["kms"]["m_q"]):
        raise ConfigError("virtual masses must be positive")
    m = cfg["modes"]
    if m["m1_sq"] < 0 or m["m2_sq"] < 0 or any(mu <= 0 for mu in m["mu_list"]):
        raise ConfigError("invalid mode profile parameters")
    return cfg


@dataclass
class Check:
    check_id: str
    paper_anchor: str
    residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.residual) and self.residual <= self.tolerance)

    def row(self) -> dict:
        return {"check_id": self.check_id, "paper_anchor": self.paper_anchor,
                "residual": float(self.residual), "tolerance": float(self.tolerance), "pass": self.passed}


class Context:
    """Shared lattice objects for one run; tables collect CSV side outputs."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        L = cfg["lattice"]
        self.lat = build_lattice(L["n_t"], L["dt"], L["d"], L["n_x"], L["dx"])
        self.op = build_operator(self.lat, cfg["mass"] ** 2)
        self.orders = Orders(cfg["orders"]["h_max"], cfg["orders"]["l_max"])
        self.tol = cfg["tolerances"]
        self.tables: dict = {}
        self._theory = None

    def rng(self, salt: int) -> np.random.Generator:
        return np.random.default_rng([self.cfg["seed"], salt])

    @property
    def theory(self) -> mq.Theory:
        if self._theory is None:
            self._theory = mq.free_theory(self.op, self.orders)
        return self._theory

    def slab(self, rng, rows, scale=1.0) -> np.ndarray:
        h = np.zeros((self.lat.n_t, self.lat.n_space))
        h[rows] = scale * rng.standard_normal(h[rows].shape)
        return h.ravel()

    def mass_perturbation(self, rng, rows=slice(2, 4), amp=3.0) -> mc.QuadraticPerturbation:
        M = np.zeros((self.lat.n_t, self.lat.n_space))
        M[rows] = rng.uniform(-amp, amp, M[rows].shape)
        return mc.QuadraticPerturbation.from_profile(self.lat, M.ravel())


def _rel(a, b) -> float:
    return float(np.abs(np.asarray(a) - np.asarray(b)).max() / max(np.abs(np.asarray(b)).max(), 1e-300))


# ---------------------------------------------------------------------------
# suites


def suite_propagators(ctx: Context) -> list:
    lat, op, t = ctx.lat, ctx.op, ctx.tol["propagators"]
    G = retarded(op).matrix
    rows = op.interior_rows()
    P = (op.matrix @ G)[rows] * lat.measure - np.eye(lat.n_sites)[rows]
    D = causal(op).matrix
    Dp, _ = vacuum_two_point(op)
    H = Dp.matrix
    herm = 0.5 * (H + H.conj().T)
    ev = np.linalg.eigvalsh(herm)
    F = feynman(op, Dp).matrix
    Kb = kms_two_point(op, ctx.cfg["beta"])
    Kc = continue_imaginary(Kb, ctx.cfg["beta"])
    Hb = 0.5 * (Kb.matrix + Kb.matrix.conj().T)
    return [
        Check("propagators.retarded_inverse", "P∘Δ^R = 1 (retarded fundamental solution)", float(np.abs(P).max()), t),
        Check("propagators.causal_antisymmetric", "Δ = Δ^R − Δ^A antisymmetric", _rel(D, -D.T), t),
        Check("propagators.hadamard_imaginary_part", "Im Δ⁺ = Δ/2", _rel(H.imag, D / 2), t),
        Check("propagators.hadamard_hermitian", "Δ⁺ hermitian", _rel(H, H.conj().T), t),
        Check("propagators.hadamard_positive", "Δ⁺ positive", max(0.0, -ev.min()) / ev.max(), t),
        Check("propagators.feynman_symmetric", "Δ^F = Δ⁺ + iΔ^A symmetric", _rel(F, F.T), t),
        Check("propagators.kms_boundary", "β-KMS two-point function: Δ⁺_β(τ + iβ) = Δ⁺_β(−τ)", _rel(Kc.matrix, Kb.matrix.T), ctx.tol["kms_boundary"]),
        Check("propagators.kms_imaginary_part", "Im Δ⁺_β = Δ/2", _rel(Kb.matrix.imag, D / 2), t),
        Check("propagators.kms_positive", "Δ⁺_β positive", max(0.0, -np.linalg.eigvalsh(Hb).min()) / np.linalg.eigvalsh(Hb).max(), t),
    ]


def suite_moller(ctx: Context) -> list:
    lat, op, t = ctx.lat, ctx.op, ctx.tol["moller"]
    rng = ctx.rng(2)
    Q = ctx.mass_perturbation(rng)
    R = mc.classical_moller_exact(op, Q)
    G1 = retarded(op).matrix
    G2 = retarded(R.op2).matrix
    Dp, _ = vacuum_two_point(op)
    tr = mc.pushforward_propagators(R, {"retarded": G1, "advanced": G1.T, "causal": G1 - G1.T, "hadamard": Dp})
    H2 = tr["hadamard"]
    T = lat.n_t * lat.dt
    Qn = mc.QuadraticPerturbation.from_profile(lat, np.full(lat.n_sites, 0.9 / T**2))
    Rn = mc.classical_moller_neumann(op, Qn, 8)
    Re = mc.classical_moller_exact(op, Qn)
    ctx.tables["neumann-decay"] = (["n", "norm", "bound"], [list(r) for r in Rn.term_norms])
    ratio = max(norm / bound for _, norm, bound in Rn.term_norms if bound > 0)
    o, w = ctx.orders, np.full(lat.n_sites, lat.measure)
    A = fn.PolyFunctional.local(o, w, rng.standard_normal(lat.n_sites), 2)
    B = fn.PolyFunctional.separable(o, w, rng.standard_normal((2, lat.n_sites)))
    hom = fn.layer_residual(mc.pullback(R, fn.star_product(A, B, H2)),
                            fn.star_product(mc.pullback(R, A), mc.pullback(R, B), Dp))
    th = ctx.theory
    loc = lambda rows, p, lam: fn.PolyFunctional.local(o, w, ctx.slab(rng, rows), p, FormalSeries.monomial(o, 0, lam, 1.0))
    Fl, Vm, Ge = loc(6, 2, 1), loc(4, 2, 1), loc(1, 2, 1)
    Fa, Ga = loc(6, 2, 0), loc(1, 2, 0)
    return [
        Check("moller.inverse", "R ∘ (𝕀 + Δ^R₁ Q⁽¹⁾) = 𝕀", R.inverse_residual(), t),
        Check("moller.intertwining", "P₂ ∘ R = P₁", mc.intertwining_residual(R), t),
        Check("moller.support", "R = 𝕀 outside J⁺(supp Q)", mc.support_residual(R), t),
        Check("moller.transport_retarded", "Δ^R₂ = R Δ^R₁", _rel(tr["retarded"], G2), t),
        Check("moller.transport_advanced", "Δ^A₂ = Δ^A₁ R†", _rel(tr["advanced"], G2.T), t),
        Check("moller.transport_causal", "Δ₂ = R Δ₁ R†", _rel(tr["causal"], G2 - G2.T), t),
        Check("moller.transport_hadamard", "Im(R Δ⁺₁ R†) = Δ₂/2", _rel(H2.imag, (G2 - G2.T) / 2), t),
        Check("moller.classical_homomorphism", "ℛ(F ⋆₂ G) = ℛF ⋆₁ ℛG", hom, t),
        Check("moller.neumann_bound", "‖rⁿ‖ ≤ T^{2n}‖M‖ⁿ/n! (norm/bound ratio)", ratio, 1.0),
        Check("moller.neumann_convergence", "Neumann series Σ rⁿ converges to R (n = 8)", float(np.abs(Rn.forward - Re.forward).max()), ctx.tol["neumann_error"]),
        Check("moller.smatrix_factorisation", "S(F + G + V) = S(F + V) ⋆ S(V)⁻¹ ⋆ S(V + G) for F ≳ G", mq.factorisation_check(th, Fl, Ge, Vm), ctx.tol["factorisation"]),
        Check("moller.time_ordered_intertwining", "rħ_V(F ·_T G) = rħ_V(F) ⋆ rħ_V(G) for F ≳ G", mq.time_ordered_intertwining_check(th, Vm, Fa, Ga), ctx.tol["factorisation"]),
    ]


def suite_ppa(ctx: Context) -> list:
    lat, th, o = ctx.lat, ctx.theory, ctx.orders
    rng = ctx.rng(3)
    N, w = lat.n_sites, th.weights
    Q = ctx.mass_perturbation(rng)
    Ff = fn.PolyFunctional.linear(o, w, rng.standard_normal(N))
    A = fn.PolyFunctional.separable(o, w, rng.standard_normal((2, N)))
    A2 = fn.PolyFunctional.separable(o, w, rng.standard_normal((2, N)))
    F4 = fn.PolyFunctional.local(o, w, ctx.slab(rng, slice(5, 7)), 4)
    th2 = th.deformed(Q)
    lhs = mq.interacting_hadamard(th, Q)
    rhs = mq.mseries_add(th2.hadamard, th.feynman, mq.mseries_scale(th2.feynman, -1.0))
    struct = max(_rel(mq.mseries_at(lhs, n=k), mq.mseries_at(rhs, n=k)) if np.any(mq.mseries_at(rhs, n=k)) else
                 float(np.abs(mq.mseries_at(lhs, n=k)).max()) for k in range(o.l_max + 1))
    betaT = fn.layer_residual(mq.beta_map(th, Q, th.tprod(mq.beta_inverse(th, Q, A), mq.beta_inverse(th, Q, A2))), th2.tprod(A, A2))
    psi = rng.standard_normal(N)
    phi_ind = fn.layer_residual(fn.derivative(mq.beta_map(th, Q, F4), psi), mq.beta_map(th, Q, fn.derivative(F4, psi)))
    istar = fn.layer_residual(mq.interacting_star(th, Q, A, A2), mq.interacting_star_conjugated(th, Q, A, A2))
    tp, ts = ctx.tol["ppa"], ctx.tol["ppa_strict"]
    return [
        Check("ppa.beta_linear", "β_{1,Q}(F_f) = F_f on linear fields", fn.layer_residual(mq.beta_map(th, Q, Ff), Ff), ts),
        Check("ppa.deformation_quadratic", "β_{1,Q} = α_d with d = Δ^F₂ − Δ^F₁ (quadratic)", mq.deformation_check(th, Q, A), tp),
        Check("ppa.deformation_quartic", "β_{1,Q} = α_d with d = Δ^F₂ − Δ^F₁ (quartic)", mq.deformation_check(th, Q, F4), tp),
        Check("ppa.structure_identity", "Δ⁺_{1,Q} = Δ^F₁ − iΔ^A₂ = Δ⁺₂ + Δ^F₁ − Δ^F₂", struct, ts),
        Check("ppa.interacting_star", "F ⋆_{1,Q} G = (rħ)⁻¹(rħF ⋆₁ rħG)", istar, tp),
        Check("ppa.beta_time_ordered", "β intertwines ·_{T₁} and ·_{T₂}", betaT, ts),
        Check("ppa.phi_independence", "β_{1,Q} is φ-independent: β(F)⁽¹⁾ = β(F⁽¹⁾)", phi_ind, ts),
    ]


def suite_gppa(ctx: Context) -> list:
    lat, th, o = ctx.lat, ctx.theory, ctx.orders
    rng = ctx.rng(4)
    w = th.weights
    Q = ctx.mass_perturbation(rng)
    M2 = np.zeros((lat.n_t, lat.n_space))
    M2[1] = rng.uniform(-2, 2, lat.n_space)
    M3 = M2.copy()
    M3[4] = rng.uniform(-2, 2, lat.n_space)
    Q2 = mc.QuadraticPerturbation.from_profile(lat, M2.ravel())
    Q3 = mc.QuadraticPerturbation.from_profile(lat, M3.ravel())
    F4 = fn.PolyFunctional.local(o, w, ctx.slab(rng, 6), 4)
    V = fn.PolyFunctional.local(o, w, ctx.slab(rng, slice(2, 5), 0.5), 4, FormalSeries.monomial(o, 0, 1, 1.0))
    Ff = fn.PolyFunctional.linear(o, w, rng.standard_normal(lat.n_sites))
    Q0 = mc.QuadraticPerturbation.from_profile(lat, np.zeros(lat.n_sites))
    V0 = fn.PolyFunctional.zero(o, lat.n_sites)
    tg = ctx.tol["gppa"]
    return [
        Check("gppa.cocycle", "β_{1,Q₃} = β_{2,Q₃−Q₂} ∘ β_{1,Q₂}", mq.cocycle_check(th, Q2, Q3, F4), tg),
        Check("gppa.quartic_interaction", "rħ_{1,Q+T₁V} = ℛ_{1,Q} ∘ rħ_{2,T₂V} ∘ β_{1,Q}", mq.gppa_check(th, Q, V, F4), tg),
        Check("gppa.linear_observable", "rħ_{1,Q+T₁V} = ℛ_{1,Q} ∘ rħ_{2,T₂V} ∘ β_{1,Q} (linear F)", mq.gppa_check(th, Q, V, Ff), tg),
        Check("gppa.degenerate_q0", "gPPA with Q = 0", mq.gppa_check(th, Q0, V, F4), ctx.tol["degenerate"]),
        Check("gppa.degenerate_v0", "gPPA with V = 0", mq.gppa_check(th, Q, V0, F4), ctx.tol["degenerate"]),
    ]


def _kms_setup(ctx: Context):
    K = ctx.cfg["kms"]
    torus = kms.Torus(K["n_x"], K["dx"], K["d"])
    state = kms.ThermalState(ctx.cfg["beta"], K["mass"] ** 2, torus)
    orders = Orders(ctx.orders.h_max, 1)
    prof = 1.5 + np.cos(2 * np.pi * np.arange(torus.n_space) / torus.n_space)
    obs = lambda g: kms.sharp_local(0.0, prof, 2)(g, orders)
    chi = kms.TemporalCutoff(**K["chi"])
    return K, torus, state, orders, obs, chi


def suite_kms(ctx: Context) -> list:
    K, torus, state, orders, obs, chi = _kms_setup(ctx)
    P = kms.KMSProblem(state, chi, K["coupling"], obs, orders=orders, nodes=K["nodes"])
    simplex = P.simplex_form()
    ratio = P.ratio_form()
    chi_alt = kms.TemporalCutoff(**K["chi_alt"])
    chi_eps = kms.TemporalCutoff(**K["chi_eps_alt"])
    if not (chi.in_class(K["eps"]) and chi_alt.in_class(K["eps"]) and chi_eps.in_class(K["eps_alt"])):
        raise ConfigError("cutoffs are not in their ε classes")
    one = kms.KMSProblem(state, chi, K["coupling"], lambda g: fn.PolyFunctional.constant(orders, g.n_sites, 1.0),
                         orders=orders, nodes=K["nodes"]).simplex_form()
    # free boundary condition per mode on the continuous-time grid
    g = kms.SiteGrid(np.array([0.0, 0.3]), np.ones(2), torus)
    A = state.thermal(g, state.beta)[0][1]
    B = state.thermal(g)[0][1].T
    # cocycle in real time
    probe = kms.smooth_probe(torus, ctx.cfg["seed"])
    t1, t2 = 0.3, 0.2
    lhs = kms.cocycle_unitary(P, t1 + t2).evaluate(probe)
    rhs = kms.compose_first_order(kms.cocycle_unitary(P, t1), kms.translate_unitary(kms.cocycle_unitary(P, t2), t1)).evaluate(probe)
    h = 1e-4
    dU = (kms.cocycle_unitary(P, h).evaluate(probe).coeffs - kms.cocycle_unitary(P, -h).evaluate(probe).coeffs) / (2 * h)
    gen = FormalSeries(orders, P.K.evaluate(probe(P.grid.times).reshape(1, -1))[0]).shift(-1, 0) * 1j
    checks = [
        Check("kms.free_boundary", "ω(A α_{iβ}(B)) = ω(B A): Δ⁺_β(τ + iβ) = Δ⁺_β(−τ)", _rel(A, B), ctx.tol["kms_boundary"]),
        Check("kms.normalisation", "ω^β_{V(χ)}(1) = 1", float(np.abs(one.coeffs - FormalSeries.one(orders).coeffs).max()), ctx.tol["kms_norm"]),
        Check("kms.ratio_vs_simplex", "ω(F ⋆ U(iβ))/ω(U(iβ)) = Σ (−1)ⁿ ∫_{βSₙ} ω_c(F ⋆ α_{iu₁}K ⋆ …)", fn.series_residual(ratio, simplex), ctx.tol["kms_forms"]),
        Check("kms.chi_independence", "ω^β_{V(χh)} = ω^β_{V(χ′h)} for χ, χ′ ∈ ℐ_ε", kms.chi_independence_check(P, chi_alt, K["eps"]), ctx.tol["kms_chi"]),
        Check("kms.eps_independence", "independence of the time slab Σ_ε", kms.chi_independence_check(P, chi_eps), ctx.tol["kms_chi"]),
        Check("kms.cocycle_law", "U(t + s) = U(t) ⋆ α_t(U(s))", fn.series_residual(lhs, rhs), ctx.tol["cocycle_law"]),
        Check("kms.cocycle_generator", "dU/dt|₀ = iK/ħ with K = rħ_{V(χ)}(V(χ̇⁻))", float(np.abs(dU - gen.coeffs).max() / max(np.abs(gen.coeffs).max(), 1e-300)), ctx.tol["generator"]),
    ]
    C = ctx.cfg["cluster"]
    rows = []
    for m in C["masses"]:
        st = kms.ThermalState(ctx.cfg["beta"], m * m, kms.Torus(C["n_x"], C["width"] / (m * C["n_x"]), 1))
        fit = kms.cluster_decay_fit(st)
        rows.append([m, fit.fitted_rate, fit.naive_rate])
        checks.append(Check(f"kms.cluster_decay_m{m:g}", "exponential spatial clustering of Δ⁺_β at rate m", abs(fit.fitted_rate / m - 1), ctx.tol["cluster"]))
    ctx.tables["cluster-decay"] = (["m", "fitted_rate", "naive_loglinear_rate"], rows)
    return checks


def suite_thermal_mass(ctx: Context) -> list:
    betas = ctx.cfg["thermal_mass"]["betas"]
    rows = kms.thermal_mass_scan(betas)
    ctx.tables["thermal-mass-vs-beta"] = (["beta", "d_coincidence", "m2_beta", "m2_beta_times_beta2"], [list(r) for r in rows])
    quad = max(abs(d * 12 * b * b - 1) for b, d, _, _ in rows)
    prods = np.array([r[3] for r in rows])
    K, torus, state, orders, obs, chi = _kms_setup(ctx)
    tm = kms.thermal_mass(Orders(1, 1), np.full(torus.n_space, kms.lattice_coincidence(state)), 1.0, np.full(torus.n_space, torus.cell))
    site = float(np.abs(tm.decomposition["m2_site"] / (12 * kms.lattice_coincidence(state)) - 1).max())
    Es = []
    for mq_ in [0.0] + list(K["m_q"]):
        P = kms.massless_problem(state.beta, torus, chi, K["coupling"], obs, mq_, orders, nodes=K["nodes"])
        terms = P.simplex_terms()
        Es.append((sum((s for _, s in terms), FormalSeries(orders)), sum((np.abs(s.coeffs) for _, s in terms), np.zeros(orders.shape))))
    scale = sum(m for _, m in Es)
    mq_res = max(fn.series_residual(Es[0][0], E, scale) for E, _ in Es[1:])
    modes_vs_kms = max(abs(md.thermal_coincidence_modes(b, 0.0) / kms.continuum_coincidence(b) - 1) for b in betas)
    return [
        Check("thermal_mass.coincidence_quadrature", "d(x, x) = ∫ n_β/ω d³k/(2π)³ = 1/(12β²)", quad, ctx.tol["coincidence"]),
        Check("thermal_mass.beta_scaling", "m²_β ∝ β⁻² (spread of m²_β β²)", float((prods.max() - prods.min()) / prods.mean()), ctx.tol["mass_scan"]),
        Check("thermal_mass.alpha_split", "α_d(V) = V + Q + C with m²_β = 12 ħλ d(x, x)", site, ctx.tol["exact"]),
        Check("thermal_mass.virtual_mass_independence", "massless KMS state independent of m_Q", mq_res, ctx.tol["m_q"]),
        Check("thermal_mass.modes_vs_quadrature", "mode-sum d(x, x) agrees with continuum quadrature", modes_vs_kms, ctx.tol["coincidence"]),
    ]


def suite_modes(ctx: Context) -> list:
    M = ctx.cfg["modes"]
    tol = ctx.tol
    p = md.FrequencyProfile(M["r_k"], M["m1_sq"], M["m2_sq"], M["r_mu"])
    tr = md.integrate_mode(p, drift_tol=np.inf)
    Ta = md.adiabatic_mode(p, tr.t)
    sums = md.r_lambda_iterate(p, Ta, M["r_terms"])
    fine = md.time_grid(p, steps_per_period=4 * md.steps_for_drift(p, 2 * p.mu + 2))
    ares = md.adiabatic_residual(p, md.adiabatic_mode(p, fine))
    mono = md.energy_monotonicity(p, tr)
    p0 = md.FrequencyProfile(0.3, 0.0, M["m2_sq"], M["mu_list"][0])
    ir = md.energy_monotonicity(p0, md.integrate_mode(p0))
    pc = md.FrequencyProfile(M["r_k"], M["m1_sq"], M["m1_sq"], M["r_mu"])
    tc = md.integrate_mode(pc, md.time_grid(pc, steps_per_period=4 * md.steps_for_drift(pc, 2 * pc.mu + 2)))
    exact = float(np.abs(tc.T - md.vacuum_mode(pc.omega1, tc.t)[0]).max())
    ps = md.FrequencyProfile(M["r_k"], M["m1_sq"], M["m2_sq"], 0.005)
    ts = md.integrate_mode(ps)
    _, b = md.bogoliubov(ps.omega2, ts.t[-1], ts.T[-1], ts.Tdot[-1])
    sudden = abs(abs(b) - md.sudden_bogoliubov(ps.omega1, ps.omega2)[1])
    scan = md.adiabatic_convergence_scan(M["m1_sq"], M["m2_sq"], M["mu_list"], M["k_list"])
    ctx.tables["mu-convergence"] = (["mu", "sup_error"], [list(r) for r in scan["rows"]], f"fitted slope {scan['slope']:.6f}")
    rs = M["kernel_r"]
    kern = md.pushforward_two_point_modes(M["m1_sq"], M["m2_sq"], M["kernel_mu"], M["kernel_mu"] + 8.0, rs)
    ref = np.array([md.vacuum_equal_time(np.sqrt(M["m2_sq"]), r) for r in rs])
    t = np.linspace(0.0, 4.0, 401)
    prof = lambda s: np.where((s >= 1) & (s <= 2), 0.8 * np.sin(np.pi * (s - 1)) ** 2, 0.0)
    om = np.sqrt(0.5 * np.arange(1, 5) ** 2 + 1.0)
    rows = md.neumann_bound_scan(prof, np.cos(np.outer(om, t)), om, t, 8)
    ctx.tables["neumann-modes"] = (["n", "norm", "bound"], [list(r) for r in rows])
    return [
        Check("modes.wronskian", "conj(Ṫ)T − conj(T)Ṫ = i", tr.wronskian_drift(), tol["wronskian"]),
        Check("modes.static_exact", "f ≡ 0 gives the m₁ vacuum mode", exact, tol["exact"]),
        Check("modes.adiabatic_equation", "(∂² + ω² + λ) T_a = 0, λ = ½ω̈/ω − ¾(ω̇/ω)²", ares, tol["adiabatic"]),
        Check("modes.r_lambda_series", "T_k = Σ R_λⁿ(T_{a,k}) (three terms)", float(np.abs(sums[M["r_terms"]] - tr.T).max()), tol["r_lambda"]),
        Check("modes.r_lambda_bound", "|T_a − T| ≤ (2ω)^{-1/2}|exp ∫|λ|/ω − 1| (ratio)", float(np.abs(Ta.T - tr.T).max() / md.exponential_estimate(p, tr.t)), 1.0),
        Check("modes.energy_monotone", "d/dt(E_k/ω²) ≤ 0 for monotone f", mono["max_increment"], tol["monotone"]),
        Check("modes.infrared_bound", "|T_k|² ≤ 1/k for massless start (excess)", max(ir["ir_excess"], 0.0), tol["ir_bound"]),
        Check("modes.sudden_limit", "μ → 0 reproduces the sudden Bogoliubov coefficient", sudden, tol["sudden"]),
        Check("modes.mu_convergence_slope", "|T_k − T_{2,k}| = O(1/μ) (|slope + 1|)", abs(scan["slope"] + 1), tol["slope"]),
        Check("modes.pushforward_kernel", "R Δ⁺₁ R† → Δ⁺₂ in the adiabatic limit", _rel(kern, ref), tol["kernel"]),
        Check("modes.neumann_bound", "‖r̂ⁿφ‖ ≤ (t₁ − t₀)^{2n}‖M‖ⁿ/n! ‖χφ‖ (ratio)", max(r[1] / r[2] for r in rows), 1.0),
    ]


RUNNERS = {
    "propagators": suite_propagators,
    "moller": suite_moller,
    "ppa": suite_ppa,
    "gppa": suite_gppa,
    "kms": suite_kms,
    "thermal-mass": suite_thermal_mass,
    "modes": suite_modes,
}


def run_suite(cfg: dict, suite: str) -> tuple:
    """(checks, tables) for one suite or 'all'."""
    if suite != "all" and suite not in RUNNERS:
        raise ConfigError(f"unknown suite {suite!r}")
    ctx = Context(cfg)
    names = SUITES if suite == "all" else (suite,)
    checks = []
    for name in names:
        fn.clear_cache()
        checks.extend(RUNNERS[name](ctx))
    return checks, ctx.tables


def write_table(path: Path, table) -> None:
    header, rows = table[0], table[1]
    with open(path, "w") as fh:
        if len(table) > 2:
            fh.write(f"# {table[2]}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
