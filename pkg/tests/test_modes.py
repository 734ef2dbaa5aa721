import numpy as np
import pytest
from scipy import integrate

from ppalab import kms
from ppalab import modes as md


def test_bump_normalised_and_primitive():
    assert integrate.quad(md.bump, -1, 1)[0] == pytest.approx(1.0, rel=1e-13)
    s = np.linspace(-0.99, 0.99, 41)
    h = 1e-6
    fd = (md.bump_primitive(s + h) - md.bump_primitive(s - h)) / (2 * h)
    assert np.allclose(fd, md.bump(s), atol=1e-8)
    assert md.bump_primitive(-1.0) == pytest.approx(0.0, abs=1e-15) and md.bump_primitive(1.0) == pytest.approx(1.0)
    fd2 = (md.bump(s + h) - md.bump(s - h)) / (2 * h)
    assert np.allclose(fd2, md.bump_derivative(s), atol=1e-7)


def test_lambda_matches_frequency_form():
    p = md.FrequencyProfile(1.0, 1.0, 3.0, 2.0)
    t = np.linspace(-1.8, 1.8, 37)
    h = 1e-4
    w = lambda s: np.sqrt(p.omega_sq(s))
    wd = (w(t + h) - w(t - h)) / (2 * h)
    wdd = (w(t + h) - 2 * w(t) + w(t - h)) / h**2
    assert np.allclose(p.lam(t), 0.5 * wdd / w(t) - 0.75 * (wd / w(t)) ** 2, atol=1e-6)


@pytest.mark.parametrize("args", [(1.0, -1.0, 1.0, 1.0), (1.0, 1.0, 1.0, 0.0), (0.0, 0.0, 1.0, 1.0)])
def test_profile_validation(args):
    with pytest.raises(ValueError):
        md.FrequencyProfile(*args)


def test_coarse_grid_rejected():
    p = md.FrequencyProfile(1.0, 1.0, 2.0, 4.0)
    with pytest.raises(ValueError):
        md.time_grid(p, steps_per_period=20)
    with pytest.raises(ValueError):
        md.integrate_mode(p, np.linspace(-5, 5, 50))


def test_static_profile_reproduces_vacuum_mode():
    p = md.FrequencyProfile(1.0, 1.0, 1.0, 10.0)
    t = md.time_grid(p, steps_per_period=4 * md.steps_for_drift(p, 22.0))
    tr = md.integrate_mode(p, t)
    assert np.abs(tr.T - md.vacuum_mode(p.omega1, t)[0]).max() < 1e-10
    assert md.bogoliubov(p.omega1, t[-1], tr.T[-1], tr.Tdot[-1]) == pytest.approx((1.0, 0.0), abs=1e-9)


@pytest.fixture(scope="module")
def switched():
    p = md.FrequencyProfile(1.0, 1.0, 2.0, 10.0)
    return p, md.integrate_mode(p)


def test_wronskian_and_bogoliubov_norm(switched):
    p, tr = switched
    assert tr.wronskian_drift() <= 1e-8
    a, b = md.bogoliubov(p.omega2, tr.t[-1], tr.T[-1], tr.Tdot[-1])
    assert abs(a) ** 2 - abs(b) ** 2 == pytest.approx(1.0, abs=1e-8)
    assert abs(b) < 1e-3


def test_adiabatic_mode_equation():
    p = md.FrequencyProfile(1.0, 1.0, 2.0, 10.0)
    fine = md.time_grid(p, steps_per_period=4 * md.steps_for_drift(p, 2 * p.mu + 2))
    assert md.adiabatic_residual(p, md.adiabatic_mode(p, fine)) < 1e-8


def test_r_lambda_series_converges(switched):
    p, tr = switched
    sums = md.r_lambda_iterate(p, md.adiabatic_mode(p, tr.t), 3)
    errs = [np.abs(s - tr.T).max() for s in sums]
    assert errs[3] < 1e-6
    assert errs[1] < errs[0]
    assert np.abs(sums[0] - tr.T).max() <= md.exponential_estimate(p, tr.t)


def test_energy_monotone_and_infrared_bound(switched):
    p, tr = switched
    assert md.energy_monotonicity(p, tr)["max_increment"] <= 1e-9
    p0 = md.FrequencyProfile(0.3, 0.0, 2.0, 4.0)
    mono = md.energy_monotonicity(p0, md.integrate_mode(p0))
    assert mono["max_increment"] <= 1e-9 and mono["ir_excess"] <= 1e-9
    with pytest.raises(ValueError):
        md.energy_monotonicity(md.FrequencyProfile(1.0, 2.0, 1.0, 4.0), tr)


def test_sudden_limit():
    p = md.FrequencyProfile(1.0, 1.0, 2.0, 0.005)
    tr = md.integrate_mode(p)
    _, b = md.bogoliubov(p.omega2, tr.t[-1], tr.T[-1], tr.Tdot[-1])
    assert abs(abs(b) - md.sudden_bogoliubov(p.omega1, p.omega2)[1]) < 2e-3


def test_adiabatic_convergence_rate():
    scan = md.adiabatic_convergence_scan(1.0, 2.0, [4.0, 8.0, 16.0, 32.0], [1.0, 2.0])
    assert -1.15 <= scan["slope"] <= -0.85
    errs = [e for _, e in scan["rows"]]
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_vacuum_kernel_limits():
    r = 0.7
    assert md.vacuum_equal_time(1e-6, r) == pytest.approx(md.vacuum_equal_time(0.0, r), rel=1e-9)
    assert md.vacuum_equal_time(2.0, r) < md.vacuum_equal_time(1.0, r)


def test_pushforward_kernel():
    rs = [0.5, 1.0, 2.0]
    same = md.pushforward_two_point_modes(1.0, 1.0, 32.0, 40.0, rs)
    assert np.array_equal(same, [md.vacuum_equal_time(1.0, r) for r in rs])
    adiabatic = md.pushforward_two_point_modes(1.0, 2.0, 32.0, 40.0, rs)
    ref = np.array([md.vacuum_equal_time(np.sqrt(2.0), r) for r in rs])
    assert np.abs(adiabatic / ref - 1).max() < 1e-3
    with pytest.raises(ValueError):
        md.pushforward_two_point_modes(1.0, 2.0, 32.0, 40.0, [0.0])


def test_thermal_coincidence_from_modes():
    for b in (1.0, 2.0):
        assert md.thermal_coincidence_modes(b, 0.0) == pytest.approx(1 / (12 * b * b), rel=1e-6)
        assert md.thermal_coincidence_modes(b, 1.0) == pytest.approx(kms.continuum_coincidence(b, 1.0), rel=1e-6)


def test_mode_space_neumann_bound():
    t = np.linspace(0.0, 4.0, 401)
    prof = lambda s: np.where((s >= 1) & (s <= 2), 0.8 * np.sin(np.pi * (s - 1)) ** 2, 0.0)
    om = np.sqrt(0.5 * np.arange(1, 5) ** 2 + 1.0)
    rows = md.neumann_bound_scan(prof, np.cos(np.outer(om, t)), om, t, 8)
    assert all(norm <= bound for _, norm, bound in rows)
    assert all(b[1] < a[1] for a, b in zip(rows, rows[1:]))
    assert md.neumann_bound_scan(lambda s: 0 * s, np.cos(np.outer(om, t)), om, t, 3) == [(1, 0.0, 0.0), (2, 0.0, 0.0), (3, 0.0, 0.0)]


def test_trajectory_csv(tmp_path, switched):
    _, tr = switched
    path = tmp_path / "mode.csv"
    tr.to_csv(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (tr.t.size, 4) and np.allclose(data[:, 3], 1.0, atol=1e-8)


def test_convergence_scan_edge_cases():
    same = md.adiabatic_convergence_scan(1.0, 1.0, [4.0, 32.0], [1.0, 2.0])
    assert max(e for _, e in same["rows"]) < 1e-7  # integrator floor, no switching error
    massless = md.adiabatic_convergence_scan(1.0, 0.0, [4.0, 8.0, 16.0, 32.0], [1.0, 2.0])
    assert -1.15 <= massless["slope"] <= -0.85
    with pytest.raises(ValueError):
        md.adiabatic_convergence_scan(1.0, 2.0, [4.0, 6.0], [1.0])
