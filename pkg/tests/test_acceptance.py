"""One PASS/FAIL line per acceptance criterion, judged at the stated tolerances.

The full batch run is executed twice in fresh processes; criteria 1-9 are read
from the first report, criterion 10 compares the two reports byte for byte.
"""

import json
import subprocess
import sys

import pytest

CRITERIA = {
    1: ("propagator identities", [
        ("propagators.retarded_inverse", 1e-12), ("propagators.causal_antisymmetric", 1e-12),
        ("propagators.hadamard_imaginary_part", 1e-12), ("propagators.hadamard_positive", 1e-12)]),
    2: ("classical Møller map", [
        ("moller.inverse", 1e-10), ("moller.transport_retarded", 1e-10), ("moller.transport_advanced", 1e-10),
        ("moller.transport_causal", 1e-10), ("moller.transport_hadamard", 1e-10),
        ("moller.neumann_bound", 1.0), ("moller.neumann_convergence", 1e-8)]),
    3: ("perturbative agreement core", [
        ("ppa.beta_linear", 1e-10), ("ppa.deformation_quadratic", 1e-9), ("ppa.deformation_quartic", 1e-9),
        ("ppa.structure_identity", 1e-10), ("ppa.beta_time_ordered", 1e-10), ("ppa.phi_independence", 1e-10)]),
    4: ("cocycle and generalised agreement", [
        ("gppa.cocycle", 1e-9), ("gppa.quartic_interaction", 1e-9),
        ("gppa.degenerate_q0", 1e-14), ("gppa.degenerate_v0", 1e-14)]),
    5: ("causal factorisation", [
        ("moller.smatrix_factorisation", 1e-10), ("moller.time_ordered_intertwining", 1e-10)]),
    6: ("interacting KMS machinery", [
        ("kms.free_boundary", 1e-10), ("kms.ratio_vs_simplex", 1e-8), ("kms.chi_independence", 1e-6),
        ("kms.eps_independence", 1e-6), ("kms.normalisation", 0.0)]),
    7: ("thermal mass", [
        ("thermal_mass.coincidence_quadrature", 1e-3), ("thermal_mass.beta_scaling", 1e-2),
        ("thermal_mass.virtual_mass_independence", 1e-6)]),
    8: ("adiabatic mode construction", [
        ("modes.wronskian", 1e-8), ("modes.energy_monotone", 1e-9), ("modes.infrared_bound", 1e-9),
        ("modes.mu_convergence_slope", 0.15), ("modes.r_lambda_series", 1e-6)]),
    9: ("thermal clustering", [
        ("kms.cluster_decay_m0.5", 0.1), ("kms.cluster_decay_m1", 0.1), ("kms.cluster_decay_m2", 0.1)]),
}


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    out = []
    for name in ("first", "second"):
        d = tmp_path_factory.mktemp(name)
        proc = subprocess.run([sys.executable, "-m", "ppalab", "run", "--suite", "all", "--seed", "0", "--out", str(d)],
                              capture_output=True, text=True)
        out.append((proc.returncode, d / "report-all.json"))
    return out


def _report(path):
    with open(path, encoding="utf-8") as fh:
        return {c["check_id"]: c for c in json.load(fh)["checks"]}


def _announce(capsys, number, title, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'}  {title}: {detail}")


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, runs, capsys):
    title, checks = CRITERIA[number]
    rows = _report(runs[0][1])
    worst, failures = 0.0, []
    for check_id, tol in checks:
        res = rows[check_id]["residual"]
        worst = max(worst, res / tol if tol else (0.0 if res == 0 else float("inf")))
        if not res <= tol:
            failures.append(f"{check_id}={res:.3e}>{tol:.0e}")
    ok = not failures
    _announce(capsys, number, title, ok, "; ".join(failures) or f"{len(checks)} checks, worst residual/tol = {worst:.3g}")
    assert ok, failures


def test_criterion_10_determinism(runs, capsys):
    (code_a, a), (code_b, b) = runs
    same = a.read_bytes() == b.read_bytes()
    ok = same and code_a == 0 and code_b == 0
    _announce(capsys, 10, "determinism", ok, f"reports byte-identical={same}, exit codes {code_a}/{code_b}")
    assert ok
