import numpy as np
import pytest

from ppalab import functionals as fn
from ppalab.propagators import feynman, vacuum_two_point
from ppalab.series import FormalSeries

from conftest import slab


@pytest.fixture(scope="module")
def kernels(op):
    H, _ = vacuum_two_point(op)
    return H.matrix, feynman(op, H).matrix


def _w(lat):
    return np.full(lat.n_sites, lat.measure)


def _hbar_layer(s: FormalSeries, a: int, n: int = 0):
    return s[a, n]


def test_constant_and_linear(lat, orders, rng):
    w = _w(lat)
    phi = rng.standard_normal(lat.n_sites)
    assert fn.PolyFunctional.constant(orders, lat.n_sites, 2.5)(phi)[0, 0] == 2.5
    f = rng.standard_normal(lat.n_sites)
    assert fn.PolyFunctional.linear(orders, w, f)(phi)[0, 0] == pytest.approx(np.dot(f, phi) * lat.measure)


def test_local_quadratic_vs_direct_sum(lat, orders, rng):
    h = rng.standard_normal(lat.n_sites)
    phi = rng.standard_normal(lat.n_sites)
    direct = 0.0
    for i in range(lat.n_sites):
        direct += h[i] * phi[i] * phi[i] * lat.measure
    assert fn.PolyFunctional.local(orders, _w(lat), h, 2)(phi)[0, 0] == pytest.approx(direct)


def test_derivative_vs_finite_difference(lat, orders, rng):
    F = fn.PolyFunctional.local(orders, _w(lat), rng.standard_normal(lat.n_sites), 4)
    phi, psi = rng.standard_normal((2, lat.n_sites))
    e = 1e-4
    fd = (F(phi + e * psi)[0, 0] - F(phi - e * psi)[0, 0]) / (2 * e)
    assert abs(fn.derivative(F, psi)(phi)[0, 0] - fd) < 1e-6 * max(1.0, abs(fd))
    f = rng.standard_normal(lat.n_sites)
    lin = fn.derivative(fn.PolyFunctional.linear(orders, _w(lat), f), psi)
    assert lin(phi)[0, 0] == pytest.approx(np.dot(f, psi) * lat.measure)


def test_star_of_linear_fields(lat, orders, rng, kernels):
    H, _ = kernels
    w = _w(lat)
    f, g, phi = rng.standard_normal((3, lat.n_sites))
    Ff, Fg = fn.PolyFunctional.linear(orders, w, f), fn.PolyFunctional.linear(orders, w, g)
    s = fn.star_product(Ff, Fg, H)(phi)
    assert s[0, 0] == pytest.approx(Ff(phi)[0, 0] * Fg(phi)[0, 0])
    assert s[1, 0] == pytest.approx((f * w) @ H @ (g * w))
    c = fn.commutator(Ff, Fg, H)(phi)
    assert abs(c[0, 0]) < 1e-14
    assert c[1, 0] == pytest.approx(2j * ((f * w) @ H.imag @ (g * w)))


def test_star_identity_and_associativity(lat, orders, rng, kernels):
    H, _ = kernels
    w = _w(lat)
    one = fn.PolyFunctional.constant(orders, lat.n_sites, 1.0)
    A = fn.PolyFunctional.local(orders, w, rng.standard_normal(lat.n_sites), 2)
    B = fn.PolyFunctional.separable(orders, w, rng.standard_normal((2, lat.n_sites)))
    C = fn.PolyFunctional.linear(orders, w, rng.standard_normal(lat.n_sites))
    assert fn.layer_residual(fn.star_product(one, A, H), A) < 1e-14
    lhs = fn.star_product(fn.star_product(A, B, H), C, H)
    rhs = fn.star_product(A, fn.star_product(B, C, H), H)
    assert fn.layer_residual(lhs, rhs) < 1e-12


def test_wick_fourth_moment(lat, orders, rng, kernels):
    H, _ = kernels
    f = rng.standard_normal(lat.n_sites)
    K = H.real
    F = fn.PolyFunctional.separable(orders, _w(lat), [f] * 4)
    fw = f * lat.measure
    assert fn.gaussian_value(F, K)[2, 0] == pytest.approx(3 * (fw @ K @ fw) ** 2)


def test_alpha_on_quadratic_adds_coincident_constant(lat, orders, rng, kernels):
    H, _ = kernels
    K = H.real
    h = rng.standard_normal(lat.n_sites)
    F = fn.PolyFunctional.local(orders, _w(lat), h, 2)
    c = fn.alpha(F, K).value_at_zero()
    assert c[1, 0] == pytest.approx(np.sum(h * lat.measure * np.diag(K)))


def test_alpha_inverse(lat, orders, rng, kernels):
    K = kernels[0].real
    F = fn.PolyFunctional.local(orders, _w(lat), slab(lat, rng, 3), 4)
    back = fn.alpha(fn.alpha(F, K), -K)
    assert fn.layer_residual(back, F) < 1e-12


def test_time_ordered_symmetric_and_unitary(lat, orders, rng, kernels):
    H, DF = kernels
    w = _w(lat)
    A = fn.PolyFunctional.local(orders, w, slab(lat, rng, 2), 2)
    B = fn.PolyFunctional.local(orders, w, slab(lat, rng, 5), 2)
    assert fn.layer_residual(fn.time_ordered_product(A, B, DF), fn.time_ordered_product(B, A, DF)) < 1e-13
    assert fn.unitarity_residual(A, B, H, DF) < 1e-12


def test_causal_factorisation_of_time_ordered_product(lat, orders, rng, kernels):
    H, DF = kernels
    w = _w(lat)
    late = fn.PolyFunctional.local(orders, w, slab(lat, rng, 6), 2)
    early = fn.PolyFunctional.local(orders, w, slab(lat, rng, 1), 2)
    assert fn.layer_residual(fn.time_ordered_product(late, early, DF), fn.star_product(late, early, H)) < 1e-12
    # the reversed order is a genuinely different product
    assert fn.layer_residual(fn.time_ordered_product(late, early, DF), fn.star_product(early, late, H)) > 1e-3


def test_perturbed_functional_gives_order_one_residual(lat, orders, rng):
    F = fn.PolyFunctional.local(orders, _w(lat), rng.standard_normal(lat.n_sites), 2)
    G = F + fn.PolyFunctional.local(orders, _w(lat), 1e-2 * rng.standard_normal(lat.n_sites), 2)
    assert fn.layer_residual(F, G) > 1e-3
