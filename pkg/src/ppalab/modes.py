"""Temporal modes of a field whose mass is switched adiabatically.

Each spatial momentum k evolves independently:
    (∂²_t + ω²(t)) T_k = 0,   ω²(t) = k² + m₁² + (m₂² − m₁²) f(t),
    f(t) = ∫_{−∞}^t χ_μ,   χ_μ(t) = χ(t/μ)/μ,
with m₁-vacuum data in the past and Wronskian conj(Ṫ)T − conj(T)Ṫ = i.
The switch χ is the compact bump (35/32)(1 − s²)³ on [−1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np
from scipy import integrate, special


# ---------------------------------------------------------------------------
# switching profile


def bump(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    return np.where(np.abs(s) < 1, 35.0 / 32.0 * (1 - s * s) ** 3, 0.0)


def bump_derivative(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    return np.where(np.abs(s) < 1, -35.0 / 32.0 * 6 * s * (1 - s * s) ** 2, 0.0)


def bump_primitive(s) -> np.ndarray:
    """∫_{−1}^s bump, rising from 0 to 1."""
    s = np.clip(np.asarray(s, dtype=float), -1, 1)
    P = s - s**3 + 0.6 * s**5 - s**7 / 7.0
    return 35.0 / 32.0 * (P + 16.0 / 35.0)


@dataclass(frozen=True)
class FrequencyProfile:
    k: float
    m1_sq: float
    m2_sq: float
    mu: float

    def __post_init__(self):
        if self.m1_sq < 0 or self.m2_sq < 0:
            raise ValueError("tachyonic profiles are not supported")
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.k <= 0 and min(self.m1_sq, self.m2_sq) == 0:
            raise ValueError("omega^2 vanishes: need k > 0 for a massless end")

    @property
    def delta(self) -> float:
        return self.m2_sq - self.m1_sq

    @property
    def omega1(self) -> float:
        return float(np.sqrt(self.k**2 + self.m1_sq))

    @property
    def omega2(self) -> float:
        return float(np.sqrt(self.k**2 + self.m2_sq))

    @property
    def omega_max(self) -> float:
        return max(self.omega1, self.omega2)

    @property
    def support(self) -> tuple:
        return (-self.mu, self.mu)

    def f(self, t):
        return bump_primitive(np.asarray(t) / self.mu)

    def chi(self, t):
        return bump(np.asarray(t) / self.mu) / self.mu

    def omega_sq(self, t):
        return self.k**2 + self.m1_sq + self.delta * self.f(t)

    def omega_sq_dot(self, t):
        return self.delta * self.chi(t)

    def omega_sq_ddot(self, t):
        return self.delta * bump_derivative(np.asarray(t) / self.mu) / self.mu**2

    def lam(self, t):
        """λ = ¼ (ω²)¨/ω² − 5/16 ((ω²)˙/ω²)²."""
        w2 = self.omega_sq(t)
        return 0.25 * self.omega_sq_ddot(t) / w2 - 5.0 / 16.0 * (self.omega_sq_dot(t) / w2) ** 2


def default_window(p: FrequencyProfile, margin: float = 1.0) -> tuple:
    return (-p.mu - margin, p.mu + margin)


def steps_for_drift(p: FrequencyProfile, length: float, drift: float = 1e-9) -> int:
    """RK4 loses |amplitude|² ≈ (ωh)⁶/72 per step; pick ωh so the whole run stays below ``drift``."""
    x = (72 * drift / max(length * p.omega_max, 1e-300)) ** 0.2
    return max(40, int(np.ceil(2 * np.pi / x)))


def step_size(p: FrequencyProfile, steps_per_period: int) -> float:
    return min(2 * np.pi / (steps_per_period * p.omega_max), p.mu / 200.0)


def time_grid(p: FrequencyProfile, window=None, steps_per_period: int | None = None) -> np.ndarray:
    t0, t1 = default_window(p) if window is None else window
    if steps_per_period is None:
        steps_per_period = steps_for_drift(p, t1 - t0)
    if steps_per_period < 40:
        raise ValueError("resolution too coarse: need >= 40 steps per period")
    h = step_size(p, steps_per_period)
    n = int(np.ceil((t1 - t0) / h))
    return np.linspace(t0, t1, n + 1)


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True)
class ModeTrajectory:
    t: np.ndarray = field(repr=False)
    T: np.ndarray = field(repr=False)
    Tdot: np.ndarray = field(repr=False)

    @property
    def wronskian(self) -> np.ndarray:
        return np.conj(self.Tdot) * self.T - np.conj(self.T) * self.Tdot

    def wronskian_drift(self) -> float:
        return float(np.abs(self.wronskian - 1j).max())

    def to_csv(self, path) -> None:
        W = self.wronskian
        with open(path, "w") as fh:
            fh.write("t,ReT,ImT,ImW\n")
            for row in zip(self.t, self.T.real, self.T.imag, W.imag):
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def vacuum_mode(omega: float, t) -> tuple:
    t = np.asarray(t, dtype=float)
    T = np.exp(-1j * omega * t) / np.sqrt(2 * omega)
    return T, -1j * omega * T


def _rk4(t, w2_full, w2_half, x, v):
    """RK4 for ẍ = −ω²x; ω² sampled at nodes and midpoints, trailing axes batch over modes."""
    h = np.diff(t)
    X = np.empty((t.size,) + np.shape(x), dtype=complex)
    V = np.empty_like(X)
    X[0], V[0] = x, v
    for i in range(t.size - 1):
        hi, a0, am, a1 = h[i], w2_full[i], w2_half[i], w2_full[i + 1]
        k1x, k1v = v, -a0 * x
        k2x, k2v = v + 0.5 * hi * k1v, -am * (x + 0.5 * hi * k1x)
        k3x, k3v = v + 0.5 * hi * k2v, -am * (x + 0.5 * hi * k2x)
        k4x, k4v = v + hi * k3v, -a1 * (x + hi * k3x)
        x = x + hi / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + hi / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        X[i + 1], V[i + 1] = x, v
    return X, V


def _check_grid(t, omega_max):
    if np.diff(t).max() > 2 * np.pi / (40 * omega_max) + 1e-15:
        raise ValueError("resolution too coarse: need >= 40 steps per period")


def integrate_mode(p: FrequencyProfile, grid=None, drift_tol: float = 1e-8) -> ModeTrajectory:
    """Classical RK4 on a fixed grid from m₁-vacuum data."""
    t = time_grid(p) if grid is None else np.asarray(grid, dtype=float)
    _check_grid(t, p.omega_max)
    w2_full = p.omega_sq(t)
    w2_half = p.omega_sq(t[:-1] + 0.5 * np.diff(t))
    if np.any(w2_full <= 0) or np.any(w2_half <= 0):
        raise ValueError("omega^2 <= 0 encountered")
    T, V = _rk4(t, w2_full, w2_half, *vacuum_mode(p.omega1, t[0]))
    traj = ModeTrajectory(t, T, V)
    if traj.wronskian_drift() > drift_tol:
        raise ValueError(f"Wronskian drift {traj.wronskian_drift():.2e} exceeds {drift_tol:.0e}: refine the grid")
    return traj


def integrate_modes(ks, m1_sq: float, m2_sq: float, mu: float, window, drift_tol: float = 1e-8) -> tuple:
    """Batched RK4 over momenta on one grid resolving the largest ω; returns (t, T[t, k], Ṫ[t, k])."""
    ks = np.asarray(ks, dtype=float)
    p = FrequencyProfile(float(ks.max()), m1_sq, m2_sq, mu)
    t = time_grid(p, window)
    _check_grid(t, p.omega_max)
    f_full = p.f(t)[:, None]
    f_half = p.f(t[:-1] + 0.5 * np.diff(t))[:, None]
    base = ks[None, :] ** 2 + m1_sq
    w1 = np.sqrt(ks**2 + m1_sq)
    T, V = _rk4(t, base + p.delta * f_full, base + p.delta * f_half, *vacuum_mode(w1, t[0]))
    W = np.conj(V) * T - np.conj(T) * V
    drift = float(np.abs(W - 1j).max())
    if drift > drift_tol:
        raise ValueError(f"Wronskian drift {drift:.2e} exceeds {drift_tol:.0e}: refine the grid")
    return t, T, V


def phase_integral(p: FrequencyProfile, t) -> np.ndarray:
    """Φ(t) = ∫_{t₀}^t ω with t₀ = t[0], by cumulative Simpson on the grid."""
    t = np.asarray(t, dtype=float)
    return integrate.cumulative_simpson(np.sqrt(p.omega_sq(t)), x=t, initial=0.0)


def adiabatic_mode(p: FrequencyProfile, grid=None) -> ModeTrajectory:
    """T_a = e^{−iω₁t₀} e^{−iΦ(t)}/√(2ω(t)), phase-matched to the m₁ vacuum mode at t₀."""
    t = time_grid(p) if grid is None else np.asarray(grid, dtype=float)
    w = np.sqrt(p.omega_sq(t))
    wdot = p.omega_sq_dot(t) / (2 * w)
    T = np.exp(-1j * (p.omega1 * t[0] + phase_integral(p, t))) / np.sqrt(2 * w)
    return ModeTrajectory(t, T, (-wdot / (2 * w) - 1j * w) * T)


def adiabatic_residual(p: FrequencyProfile, traj: ModeTrajectory) -> float:
    """max |(∂² + ω² + λ) T_a| with a five-point second difference (interior nodes)."""
    t, T = traj.t, traj.T
    h = t[1] - t[0]
    d2 = (-T[4:] + 16 * T[3:-1] - 30 * T[2:-2] + 16 * T[1:-3] - T[:-4]) / (12 * h * h)
    tc = t[2:-2]
    return float(np.abs(d2 + (p.omega_sq(tc) + p.lam(tc)) * T[2:-2]).max())


def r_lambda(p: FrequencyProfile, t, h) -> np.ndarray:
    """R_λ(h)(t) = ∫_{t₀}^t sin(Φ(t) − Φ(τ)) / √(ω(t)ω(τ)) λ(τ) h(τ) dτ.

    The coincident endpoint carries weight ½ (θ(0) = ½) through the trapezoid rule.
    """
    t = np.asarray(t, dtype=float)
    w = np.sqrt(p.omega_sq(t))
    Phi = phase_integral(p, t)
    g = p.lam(t) * h / np.sqrt(w)
    C = integrate.cumulative_trapezoid(np.cos(Phi) * g, t, initial=0.0)
    S = integrate.cumulative_trapezoid(np.sin(Phi) * g, t, initial=0.0)
    return (np.sin(Phi) * C - np.cos(Phi) * S) / np.sqrt(w)


def r_lambda_iterate(p: FrequencyProfile, Ta: ModeTrajectory, n_terms: int) -> list:
    """Partial sums Σ_{n≤N} R_λⁿ(T_a) for N = 0 … n_terms."""
    if n_terms < 0:
        raise ValueError("n_terms must be >= 0")
    term = Ta.T.copy()
    total = term.copy()
    sums = [total.copy()]
    for _ in range(n_terms):
        term = r_lambda(p, Ta.t, term)
        total = total + term
        sums.append(total.copy())
    return sums


def exponential_estimate(p: FrequencyProfile, t) -> float:
    """(1/√(2ω)) |exp ∫|λ|/ω − 1| at the end of the window."""
    t = np.asarray(t, dtype=float)
    w = np.sqrt(p.omega_sq(t))
    I = integrate.trapezoid(np.abs(p.lam(t)) / w, t)
    return float(np.expm1(I) / np.sqrt(2 * w.min()))


# ---------------------------------------------------------------------------
# energy bound and convergence


def energy_ratio(p: FrequencyProfile, traj: ModeTrajectory) -> np.ndarray:
    w2 = p.omega_sq(traj.t)
    return (np.abs(traj.Tdot) ** 2 + w2 * np.abs(traj.T) ** 2) / w2


def energy_monotonicity(p: FrequencyProfile, traj: ModeTrajectory) -> dict:
    """Largest increment of E/ω² and the infrared bound |T|² ≤ 1/k for massless starts."""
    if p.delta < 0:
        raise ValueError("energy monotonicity needs a non-decreasing omega^2")
    r = energy_ratio(p, traj)
    out = {"max_increment": float(np.max(np.diff(r), initial=0.0))}
    if p.m1_sq == 0:
        out["ir_excess"] = float(np.max(np.abs(traj.T) ** 2 - 1.0 / p.k))
    return out


def bogoliubov(omega: float, t: float, T: complex, Tdot: complex) -> tuple:
    """(α, β) with T = α T_ω + β conj(T_ω) for the static mode T_ω."""
    a = np.sqrt(omega / 2) * (T + 1j * Tdot / omega) * np.exp(1j * omega * t)
    b = np.sqrt(omega / 2) * (T - 1j * Tdot / omega) * np.exp(-1j * omega * t)
    return complex(a), complex(b)


def sudden_bogoliubov(omega1: float, omega2: float) -> tuple:
    s = 2 * np.sqrt(omega1 * omega2)
    return (omega2 + omega1) / s, (omega2 - omega1) / s


def adiabatic_error(p: FrequencyProfile, steps_per_period: int | None = None) -> float:
    """|T_k − T_{a,k}| at the end of the window, where T_a is the phase-matched m₂ vacuum mode."""
    t = time_grid(p, steps_per_period=steps_per_period)
    traj = integrate_mode(p, t)
    Ta = adiabatic_mode(p, t)
    return float(abs(traj.T[-1] - Ta.T[-1]))


def adiabatic_convergence_scan(m1_sq: float, m2_sq: float, mus, ks) -> dict:
    mus = np.asarray(mus, dtype=float)
    if mus.max() / mus.min() < 2:
        raise ValueError("mu list must span a wide range")
    rows = []
    for mu in mus:
        errs = [adiabatic_error(FrequencyProfile(k, m1_sq, m2_sq, mu)) for k in ks]
        rows.append((float(mu), float(max(errs))))
    errs = np.array([e for _, e in rows])
    slope = float(np.polyfit(np.log(mus), np.log(errs), 1)[0]) if np.all(errs > 0) else 0.0
    return {"rows": rows, "slope": slope}


# ---------------------------------------------------------------------------
# two-point kernels from modes


def vacuum_equal_time(m: float, r: float) -> float:
    """Continuum vacuum Δ⁺(t, x; t, y) at |x − y| = r > 0 in 3+1 dimensions."""
    if m == 0:
        return 1.0 / (4 * np.pi**2 * r * r)
    return float(m * special.k1(m * r) / (4 * np.pi**2 * r))


def pushforward_two_point_modes(m1_sq: float, m2_sq: float, mu: float, t: float, rs,
                                k_max: float | None = None, k_min: float = 1e-3, nodes: int = 48,
                                eps=(0.02, 0.01)) -> np.ndarray:
    """Equal-time kernel of R Δ⁺₁ R† at time t and separations rs.

    Δ⁺(r) = Δ⁺₂(r) + (2π²)⁻¹ ∫ k² j₀(kr) (|T_k(t)|² − 1/(2ω₂)) e^{−εk} dk; the
    subtracted integral is regularised with two ε values and extrapolated
    linearly to ε = 0; the static m₂ kernel is the closed form.
    """
    rs = np.atleast_1d(np.asarray(rs, dtype=float))
    if np.any(rs <= 0):
        raise ValueError("separations must be positive")
    scale = max(np.sqrt(m1_sq), np.sqrt(m2_sq), 1.0)
    k_max = 10 * scale if k_max is None else k_max
    x, w = np.polynomial.legendre.leggauss(nodes)
    # nodes on [log k_min, log k_max] resolve the infrared
    lo, hi = np.log(k_min), np.log(k_max)
    lk = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    ks = np.exp(lk)
    wk = 0.5 * (hi - lo) * w * ks
    w2 = np.sqrt(ks**2 + m2_sq)
    if m1_sq == m2_sq:
        diff = np.zeros(ks.size)
    else:
        t0 = min(-mu - 1.0, t - 1.0)
        _, T, _ = integrate_modes(ks, m1_sq, m2_sq, mu, (t0, t))
        diff = np.abs(T[-1]) ** 2 - 1 / (2 * w2)
    vals = []
    for e in eps:
        j0 = np.sinc(np.outer(rs, ks) / np.pi)
        vals.append((j0 * (ks**2 * diff * np.exp(-e * ks))[None, :]) @ wk / (2 * np.pi**2))
    e1, e2 = eps
    extrap = vals[1] + (vals[1] - vals[0]) * e2 / (e1 - e2)
    base = np.array([vacuum_equal_time(np.sqrt(m2_sq), r) for r in rs])
    return base + extrap


def thermal_coincidence_modes(beta: float, m: float, nodes: int = 200) -> float:
    """d(x, x) = (2π²)⁻¹ ∫ k² 2 n_β(ω) |T_k|² dk from static modes, Gauss-Legendre on [0, K]."""
    k_max = 40 * max(m, 1.0 / beta)
    x, w = np.polynomial.legendre.leggauss(nodes)
    ks = 0.5 * k_max * (x + 1)
    wk = 0.5 * k_max * w
    om = np.sqrt(ks**2 + m * m)
    T2 = 1 / (2 * om)
    n = 1 / np.expm1(beta * om)
    return float(np.sum(wk * ks**2 * 2 * n * T2) / (2 * np.pi**2))


# ---------------------------------------------------------------------------
# Neumann bound in mode space


def neumann_bound_scan(M_profile, phi_modes, omegas, t, n_max: int = 8) -> list:
    """Rows (n, ‖r̂ⁿφ‖, bound) for a spatially homogeneous mass perturbation M(t).

    r̂φ_k(t) = −∫ θ(t − s) sin(ω_k (t − s))/ω_k M(s) φ_k(s) ds on the grid t;
    ‖ψ‖ = sup_t Σ_k |ψ_k(t)|; bound = (t₁ − t₀)^{2n} ‖M‖ⁿ_∞ / n! ‖χφ‖ with
    [t₀, t₁] the support of M.
    """
    t = np.asarray(t, dtype=float)
    M = np.asarray(M_profile(t), dtype=float)
    phi = np.asarray(phi_modes, dtype=complex)  # (n_k, n_t)
    omegas = np.asarray(omegas, dtype=float)
    supp = np.flatnonzero(M != 0)
    wq = np.full(t.size, t[1] - t[0])
    wq[0] = wq[-1] = 0.5 * (t[1] - t[0])
    tau = t[:, None] - t[None, :]
    ops = []
    for om in omegas:
        K = np.where(tau >= 0, np.sin(om * tau) / om, 0.0)
        ops.append(-K * (wq * M)[None, :])
    norm = lambda psi: float(np.abs(psi).sum(axis=0).max())
    if supp.size == 0:
        return [(n, 0.0, 0.0) for n in range(1, n_max + 1)]
    span = t[supp[-1]] - t[supp[0]]
    chi = np.zeros(t.size)
    chi[supp[0]: supp[-1] + 1] = 1.0
    base = norm(phi * chi[None, :])
    Mn = float(np.abs(M).max())
    rows = []
    psi = phi.copy()
    for n in range(1, n_max + 1):
        psi = np.stack([A @ v for A, v in zip(ops, psi)])
        rows.append((n, norm(psi), span ** (2 * n) * Mn**n / factorial(n) * base))
    return rows


def factorial_envelope_fit(rows) -> float:
    """Fit ‖r̂ⁿ⁺¹φ‖/‖r̂ⁿφ‖ ≈ C/n; returns C."""
    norms = np.array([r[1] for r in rows])
    n = np.array([r[0] for r in rows], dtype=float)
    ratios = norms[1:] / norms[:-1]
    return float(np.mean(ratios * n[:-1]))


def scan_csv(rows, header: str, path) -> None:
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in row) + "\n")
