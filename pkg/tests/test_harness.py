import math

import numpy as np
import pytest

from dualopt import harness, problems, solvers, stability
from dualopt.solvers import HyperParams, initial_state


@pytest.fixture(scope="module")
def nc():
    return problems.builtin("NC-EQ")


def test_equivalence_nc(nc):
    res = harness.run_equivalence_equality(nc, [0.0], [0.0], HyperParams(0.1, 0.1, c=3.0, omega=3.0), 2000)
    assert res.max_primal_gap <= 1e-9 and res.max_dual_gap <= 1e-9
    assert res.offsets["mu0_og_minus_mu0_al"] == [pytest.approx(-2.9)]


def test_equivalence_qp():
    p = problems.builtin("QP-EQ")
    res = harness.run_equivalence_equality(p, [0.0, 0.0], [0.0], HyperParams(0.05, 0.05, c=2.0, omega=2.0), 2000)
    assert res.max_primal_gap <= 1e-9 and res.max_dual_gap <= 1e-9


def test_equivalence_rejects_mismatch(nc):
    with pytest.raises(harness.HarnessError):
        harness.run_equivalence_equality(nc, [0.0], [0.0], HyperParams(0.1, 0.1, c=3.0, omega=2.0), 10)


def test_equivalence_rejects_inequalities():
    with pytest.raises(harness.HarnessError):
        harness.run_equivalence_equality(problems.builtin("INEQ-ACT"), [0.0], [], HyperParams(0.1, 0.1), 10)


@pytest.mark.parametrize("name,x0,c,omega", [("NC-EQ", [0.0], 1.0, 2.0), ("QP-EQ", [0.0, 0.0], 0.5, 1.5)])
def test_compounding(name, x0, c, omega):
    res = harness.run_compounding_check(problems.builtin(name), x0, [0.0], c, omega, 0.1, 1000)
    assert res.max_primal_gap <= 1e-9 and res.max_dual_gap <= 1e-9


def test_compounding_zero_omega_bitwise(nc):
    res = harness.run_compounding_check(nc, [0.2], [0.5], 3.0, 0.0, 0.05, 200)
    assert np.all(res.primal_gaps[:1] == 0.0)
    a = solvers.iterate(nc, "al_gd_oa", initial_state(nc, [0.2], None, [0.5]), HyperParams(0.05, 0.05, 3.0, 0.0), 200)
    b = solvers.iterate(nc, "al_gda", initial_state(nc, [0.2], None, [0.5]), HyperParams(0.05, 0.05, 3.0, 0.0), 200)
    assert all(np.array_equal(u.vector(), v.vector()) for u, v in zip(a, b))


def test_oscillation_lag_gda_vs_al_gda():
    p = problems.builtin("OSC-EQ")
    s0 = initial_state(p, [0.0], None, [0.0])
    lag = harness.oscillation_metrics(p, solvers.iterate(p, "lag_gda", s0, HyperParams(0.1, 0.1), 400))
    al = harness.oscillation_metrics(p, solvers.iterate(p, "al_gda", s0, HyperParams(0.1, 0.1, c=2.0), 400))
    assert lag["sign_changes"] >= 10
    assert al["sign_changes"] <= 2


def test_oscillation_constant_trajectory():
    p = problems.builtin("INEQ-INACT")
    s = initial_state(p, [0.0], [0.0])
    m = harness.oscillation_metrics(p, [s] * 10)
    assert m["sign_changes"] == 0 and m["overshoot"] == 0 and m["tail_amplitude"] == 0.0


def test_oscillation_empty():
    with pytest.raises(harness.HarnessError):
        harness.oscillation_metrics(problems.builtin("OSC-EQ"), [])


def test_sweep_osc_damping():
    rows = harness.omega_sweep(problems.builtin("OSC-EQ"), None, HyperParams(0.1, 0.1), [0.5, 1, 2, 4, 8])
    imag = [r.max_abs_imag for r in rows]
    assert all(v == 0.0 for v in imag[2:])
    assert imag[0] > 0.0


def test_sweep_conditioning_grows_with_active_rows():
    rows = harness.omega_sweep(problems.builtin("INEQ-ACT"), None, HyperParams(0.1, 0.1), [1, 100, 10000])
    k = [r.condition_number for r in rows]
    assert k[0] < k[1] < k[2] and k[2] >= 10 * k[0]


def test_sweep_nc_lssp():
    rows = harness.omega_sweep(problems.builtin("NC-EQ"), None, HyperParams(0.05, 0.05), [1.0, 1.5, 2.5, 4.0])
    assert [r.is_lssp for r in rows] == [False, False, True, True]


def test_sweep_paired_runs():
    p = problems.builtin("OSC-EQ")
    rows = harness.omega_sweep(p, None, HyperParams(0.1, 0.1), [4.0], initial_state(p, [0.0], None, [0.0]), 400)
    assert len(rows) == 1 and rows[0].sign_changes <= 2
    assert set(rows[0].as_dict()) == {"omega", "rho", "max_abs_imag", "kappa", "is_lssp", "sign_changes"}


def test_sweep_grid_validation():
    with pytest.raises(harness.HarnessError):
        harness.omega_sweep(problems.builtin("OSC-EQ"), None, HyperParams(0.1, 0.1), [2.0, 1.0])


def test_inclusion_nc():
    res = harness.monotonic_inclusion_check(problems.builtin("NC-EQ"), None, [1, 2.5, 5, 10])
    assert [v["stabilizable"] for v in res["verdicts"]] == [False, True, True, True]
    assert res["is_upset"]


def test_inclusion_ineq_act():
    res = harness.monotonic_inclusion_check(problems.builtin("INEQ-ACT"), None, [0.1, 1, 10])
    assert all(v["stabilizable"] for v in res["verdicts"])


def test_inclusion_empty_grid():
    with pytest.raises(harness.HarnessError):
        harness.monotonic_inclusion_check(problems.builtin("NC-EQ"), None, [1.0], [])


def test_negative_optimism():
    p = problems.builtin("INEQ-ACT")
    hp = HyperParams(0.1, 0.1)
    assert harness.negative_optimism_check(p, None, hp, -2.0).spectral_radius > 1.0
    assert harness.negative_optimism_check(p, None, hp, -0.5).spectral_radius < 1.0
    with pytest.raises(harness.HarnessError):
        harness.negative_optimism_check(p, None, hp, 0.0)


def test_destabilizing_omega_formula():
    part = stability.partition_from_matrices([[1.0]], [[1.0]])
    assert harness.destabilizing_omega(part) == -2.0
    assert math.isnan(harness.destabilizing_omega(stability.partition_from_matrices([[1.0]], np.zeros((0, 1)))))


def test_rate_ineq_act():
    p = problems.builtin("INEQ-ACT")
    states = solvers.iterate(p, "al_gda", initial_state(p, [1.001], [1.0]), HyperParams(0.1, 0.1), 1000)
    rate = harness.estimate_linear_rate(states, harness.kkt_vector(p.known_kkt[0]))
    assert abs(rate - 0.9270156) <= 0.05 * 0.9270156


def test_rate_qp_matches_og_spectrum():
    p = problems.builtin("QP-EQ")
    hp = HyperParams(0.1, 1.0, c=1.0, omega=1.0)
    g = p.known_kkt[0]
    states = solvers.iterate(p, "lag_gd_oa", initial_state(p, g.x_star + 1e-3, None, g.mu_star), hp, 3000)
    rho = harness.spectral_pair(p, hp)[1]
    rate = harness.estimate_linear_rate(states, harness.kkt_vector(g))
    assert abs(rate - rho) <= 0.05 * rho


def test_rate_diverging_trajectory(nc):
    states = solvers.iterate(nc, "lag_gda", initial_state(nc, [0.9], None, [1.9]), HyperParams(0.1, 0.1), 400)
    with pytest.raises(harness.NoConvergentTail):
        harness.estimate_linear_rate(states, [1.0, 2.0])
