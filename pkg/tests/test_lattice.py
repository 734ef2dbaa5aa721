import numpy as np
import pytest

from ppalab.lattice import (Field, build_lattice, hermitian_pairing, inverse_spatial_fourier, pairing,
                            spatial_fourier, time_translate, time_translation_matrix)


def test_counts_and_measure():
    lat = build_lattice(5, 0.1, 2, 4, 0.3)
    assert lat.n_space == 16 and lat.n_sites == 80
    assert lat.measure == pytest.approx(0.1 * 0.09)
    assert np.allclose(lat.site_times()[:16], 0.0) and np.allclose(lat.site_times()[16:32], 0.1)


@pytest.mark.parametrize("args", [(2, 0.1, 1, 4, 0.2), (4, 0.1, 1, 1, 0.2), (4, 0.1, 4, 2, 0.2), (4, -0.1, 1, 4, 0.2)])
def test_invalid_lattices_rejected(args):
    with pytest.raises(ValueError):
        build_lattice(*args)


def test_pairing_direct_sum(lat, rng):
    f, g = rng.standard_normal((2, lat.n_sites)) + 1j * rng.standard_normal((2, lat.n_sites))
    F, G = Field(f, lat), Field(g, lat)
    assert pairing(F, G) == pytest.approx(sum(a * b for a, b in zip(f, g)) * lat.measure)
    assert hermitian_pairing(F, F).real > 0


def test_fourier_is_unitary_and_invertible(rng):
    lat = build_lattice(3, 0.1, 2, 4, 0.5)
    f = Field(rng.standard_normal(lat.n_sites), lat)
    modes = spatial_fourier(f)
    assert np.sum(np.abs(modes) ** 2) == pytest.approx(np.sum(np.abs(f.values) ** 2))
    assert np.allclose(inverse_spatial_fourier(modes, lat).values, f.values)


def test_plane_waves_diagonalise_neighbour_laplacian():
    lat = build_lattice(3, 0.1, 1, 6, 0.4)
    n, h = lat.n_x, lat.dx
    L = (2 * np.eye(n) - np.roll(np.eye(n), 1, 0) - np.roll(np.eye(n), -1, 0)) / h**2
    E = lat.plane_waves()
    assert np.allclose(E.conj() @ L @ E.T, np.diag(lat.lattice_k2()), atol=1e-12)


def test_time_translation(lat, rng):
    f = Field(rng.standard_normal(lat.n_sites), lat)
    g = time_translate(f, 2).grid()
    assert np.allclose(g[2:], f.grid()[:-2]) and np.allclose(g[:2], 0)
    T = time_translation_matrix(lat, -1)
    assert np.allclose(T @ f.values.real, time_translate(f, -1).values.real)
    with pytest.raises(ValueError):
        time_translate(f, lat.n_t)


def test_field_size_mismatch(lat):
    with pytest.raises(ValueError):
        Field(np.zeros(lat.n_sites + 1), lat)
