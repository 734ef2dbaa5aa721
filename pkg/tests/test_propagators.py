import numpy as np
import pytest

from ppalab.lattice import build_lattice
from ppalab.propagators import (advanced, build_operator, causal, continue_imaginary, feynman, kms_two_point,
                                mode_basis, retarded, spatial_laplacian, time_stencil, vacuum_two_point)


def test_stencil_and_mass_shift(lat):
    D = time_stencil(lat)
    dt2 = lat.dt**2
    assert D[3, 3] == pytest.approx(-2 / dt2) and D[3, 2] == pytest.approx(1 / dt2) and D[3, 5] == 0
    P0 = build_operator(lat, 0.0).matrix
    P1 = build_operator(lat, 0.7).matrix
    assert np.allclose(P1 - P0, 0.7 * np.eye(lat.n_sites))
    assert np.allclose(P0, P0.T)


def test_laplacian_spectrum(lat):
    assert np.allclose(np.sort(np.linalg.eigvalsh(spatial_laplacian(lat))), np.sort(lat.lattice_k2()))


def test_retarded_inverse_and_support(lat, op):
    G = retarded(op).matrix
    rows = op.interior_rows()
    assert np.abs((op.matrix @ G)[rows] * lat.measure - np.eye(lat.n_sites)[rows]).max() < 1e-12
    ti = lat.time_index()
    assert np.all(G[ti[:, None] <= ti[None, :]] == 0.0)
    assert np.array_equal(advanced(op).matrix, G.T)


def test_retarded_hand_recursion():
    # two spatial sites: modes k = 0 (ω = 0) and k = π/dx (ω² = 4/dx²)
    lat = build_lattice(4, 0.1, 1, 2, 0.3)
    G = retarded(build_operator(lat, 0.0)).matrix.reshape(4, 2, 4, 2)
    mu, dt = lat.measure, lat.dt

    def g(w2):
        out = np.zeros((4, 4))
        for s in range(4):
            prev, cur = 0.0, 0.0
            for t in range(s, 3):
                src = 1.0 / mu if t == s else 0.0
                nxt = dt**2 * (src - w2 * cur) + 2 * cur - prev
                out[t + 1, s] = nxt
                prev, cur = cur, nxt
        return out

    g0, g1 = g(0.0), g(4 / lat.dx**2)
    assert np.allclose(g0[3, 0], 3 * dt / lat.dx)
    assert np.allclose(G[:, 0, :, 0], 0.5 * (g0 + g1), atol=1e-13)
    assert np.allclose(G[:, 1, :, 0], 0.5 * (g0 - g1), atol=1e-13)


def test_hadamard_structure(lat, op):
    D = causal(op).matrix
    H, _ = vacuum_two_point(op)
    H = H.matrix
    assert np.allclose(D, -D.T, atol=1e-14)
    assert np.allclose(H.imag, D / 2, atol=1e-13)
    assert np.allclose(H, H.conj().T, atol=1e-13)
    assert np.linalg.eigvalsh(H).min() > -1e-13
    ti = lat.time_index()
    rows = (ti > 0) & (ti < lat.n_t - 1)  # stencil fully inside the open time grid
    assert np.abs((op.matrix @ H)[rows]).max() / np.abs(op.matrix).max() < 1e-12


def test_feynman(op):
    H, _ = vacuum_two_point(op)
    F = feynman(op, H).matrix
    assert np.allclose(F, F.T, atol=1e-13)
    assert np.allclose(F, H.matrix + 1j * advanced(op).matrix)


def test_mode_wronskian_and_bose(lat):
    mb = mode_basis(lat, 1.0)
    assert np.allclose(mb.wronskian(0.3), 1j)
    nb = mb.n_beta(2.0)
    assert np.allclose(nb, 1 / (np.exp(2.0 * mb.omega_tilde) - 1))
    with pytest.raises(ValueError):
        mb.n_beta(0.0)


def test_massless_zero_mode_excluded(lat):
    mb = mode_basis(lat, 0.0)
    assert mb.active.sum() == lat.n_space - 1 and not mb.active[0]


def test_stability_bound():
    with pytest.raises(ValueError):
        mode_basis(build_lattice(8, 0.2, 1, 8, 0.2), 1.0)


def test_kms_boundary_and_high_temperature_limit(op):
    K = kms_two_point(op, 2.0)
    assert np.allclose(continue_imaginary(K, 2.0).matrix, K.matrix.T, atol=1e-13)
    H, _ = vacuum_two_point(op)
    assert np.allclose(kms_two_point(op, 200.0).matrix, H.matrix, atol=1e-12)
    assert np.linalg.eigvalsh(0.5 * (K.matrix + K.matrix.conj().T)).min() > -1e-13
