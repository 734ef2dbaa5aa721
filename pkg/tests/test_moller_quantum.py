import numpy as np
import pytest

from ppalab import functionals as fn
from ppalab import moller_classical as mc
from ppalab import moller_quantum as mq
from ppalab.propagators import kms_two_point, vacuum_two_point
from ppalab.series import FormalSeries

from conftest import mass_bump, slab


def _w(lat):
    return np.full(lat.n_sites, lat.measure)


def _loc(lat, orders, rng, rows, power, lam):
    return fn.PolyFunctional.local(orders, _w(lat), slab(lat, rng, rows), power, FormalSeries.monomial(orders, 0, lam, 1.0))


def test_smatrix_star_inverse(theory, lat, orders, rng):
    V = _loc(lat, orders, rng, slice(2, 5), 2, 1)
    S = mq.smatrix(theory, V)
    assert S.value_at_zero()[0, 0] == 1
    prod = theory.star(S, mq.smatrix_star_inverse(theory, S))
    assert fn.layer_residual(prod, theory.one()) < 1e-12
    # exponential law survives truncation: needs ħ⁻²λ² times four contractions
    V4 = _loc(lat, orders, rng, slice(2, 5), 4, 1)
    assert fn.layer_residual(theory.tprod(mq.smatrix(theory, V4), mq.smatrix(theory, -V4)), theory.one()) < 1e-12
    with pytest.raises(ValueError):
        mq.smatrix(theory, fn.PolyFunctional.local(orders, _w(lat), np.ones(lat.n_sites), 2))


def test_moller_inverse_and_recursive_form(theory, lat, orders, rng):
    V = _loc(lat, orders, rng, slice(2, 5), 4, 1)
    F = _loc(lat, orders, rng, 6, 2, 0)
    r = mq.quantum_moller(theory, V, F)
    assert fn.layer_residual(mq.quantum_moller_inverse(theory, V, r), F) < 1e-10
    assert fn.layer_residual(mq.quantum_moller_recursive(theory, V, F), r) < 1e-10


def test_moller_is_trivial_before_the_interaction(theory, lat, orders, rng):
    V = _loc(lat, orders, rng, slice(4, 6), 2, 1)
    F = _loc(lat, orders, rng, 1, 2, 0)
    assert fn.layer_residual(mq.quantum_moller(theory, V, F), F) < 1e-12


def test_deformation_is_alpha_d(theory, lat, orders, rng):
    Q = mass_bump(lat, rng)
    F4 = _loc(lat, orders, rng, slice(5, 7), 4, 0)
    assert mq.deformation_check(theory, Q, F4) < 1e-9
    # negative control: the opposite deformation
    flipped = fn.alpha(F4, [(k, -M) for k, M in mq.d_series(theory, Q)])
    assert fn.layer_residual(mq.beta_map(theory, Q, F4), flipped) > 1e-3


def test_beta_roundtrip_and_linear_fields(theory, lat, orders, rng):
    Q = mass_bump(lat, rng)
    Ff = fn.PolyFunctional.linear(orders, _w(lat), rng.standard_normal(lat.n_sites))
    assert fn.layer_residual(mq.beta_map(theory, Q, Ff), Ff) < 1e-10
    F = fn.PolyFunctional.separable(orders, _w(lat), rng.standard_normal((2, lat.n_sites)))
    assert fn.layer_residual(mq.beta_inverse(theory, Q, mq.beta_map(theory, Q, F)), F) < 1e-10


def test_cocycle_and_gppa(theory, lat, orders, rng):
    M2 = np.zeros((lat.n_t, lat.n_space))
    M2[1] = rng.uniform(-2, 2, lat.n_space)
    M3 = M2.copy()
    M3[4] = rng.uniform(-2, 2, lat.n_space)
    Q2 = mc.QuadraticPerturbation.from_profile(lat, M2.ravel())
    Q3 = mc.QuadraticPerturbation.from_profile(lat, M3.ravel())
    F4 = _loc(lat, orders, rng, 6, 4, 0)
    assert mq.cocycle_check(theory, Q2, Q3, F4) < 1e-9
    V = fn.PolyFunctional.local(orders, _w(lat), slab(lat, rng, slice(2, 5), 0.5), 4, FormalSeries.monomial(orders, 0, 1, 1.0))
    assert mq.gppa_check(theory, Q2, V, F4) < 1e-9
    assert mq.gppa_check(theory, mc.QuadraticPerturbation.from_profile(lat, np.zeros(lat.n_sites)), V, F4) < 1e-14


def test_gppa_negative_control(theory, lat, orders, rng):
    """Dropping the β-map on the interaction breaks the identity."""
    Q = mass_bump(lat, rng)
    V = fn.PolyFunctional.local(orders, _w(lat), slab(lat, rng, slice(2, 5), 0.5), 4, FormalSeries.monomial(orders, 0, 1, 1.0))
    F = _loc(lat, orders, rng, 6, 4, 0)
    lhs, _ = mq.gppa_sides(theory, Q, V, F)
    th2 = theory.deformed(Q)
    wrong = fn.pullback(mq.quantum_moller(th2, V, mq.beta_map(theory, Q, F)), theory.moller_map(Q))
    assert fn.layer_residual(lhs, wrong) > 1e-4


def test_causal_factorisation(theory, lat, orders, rng):
    F = _loc(lat, orders, rng, 6, 2, 1)
    G = _loc(lat, orders, rng, 1, 2, 1)
    V = _loc(lat, orders, rng, 4, 2, 1)
    assert mq.factorisation_check(theory, F, G, V) < 1e-10
    # swapped supports do not factorise
    assert mq.factorisation_check(theory, G, F, V) > 1e-4
    A, B = _loc(lat, orders, rng, 6, 2, 0), _loc(lat, orders, rng, 1, 2, 0)
    assert mq.time_ordered_intertwining_check(theory, V, A, B) < 1e-10


def test_renormalisation_constant_shifts_phi_squared(op, lat, orders, rng):
    th = mq.free_theory(op, orders, renorm_b=0.3)
    h = rng.standard_normal(lat.n_sites)
    F = fn.PolyFunctional.local(orders, _w(lat), h, 2)
    c = mq.time_ordering_map(th, F).value_at_zero()
    assert c[1, 0] == pytest.approx(0.3 * h.sum())


def test_deformation_insensitive_to_symmetric_part(op, theory, lat, orders, rng):
    """Shifting Δ^S by a smooth real bisolution leaves β = α_d intact."""
    w = (kms_two_point(op, 1.0).matrix - vacuum_two_point(op)[0].matrix).real
    shifted = mq.Theory(lat, orders, [(0, theory.hadamard[0][1] + w)], [(0, theory.feynman[0][1] + w)], theory.retarded)
    F4 = _loc(lat, orders, rng, slice(5, 7), 4, 0)
    assert mq.deformation_check(shifted, mass_bump(lat, rng), F4) < 1e-9
