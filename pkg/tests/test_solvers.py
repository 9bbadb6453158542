import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualopt import problems, solvers
from dualopt.solvers import HyperParams, initial_state


@pytest.fixture(scope="module")
def nc():
    return problems.builtin("NC-EQ")


def _kkt_state(p):
    g = p.known_kkt[0]
    return initial_state(p, g.x_star, g.lambda_star, g.mu_star)


def test_lag_gda_osc_example():
    p = problems.builtin("OSC-EQ")
    s = solvers.step_lag_gda(p, initial_state(p, [0.0], None, [0.0]), HyperParams(0.1, 0.1))
    assert s.mu[0] == pytest.approx(-0.1, abs=1e-16)
    assert s.x[0] == pytest.approx(0.01, abs=1e-16)
    assert s.t == 1


def test_lag_gda_projection_clips():
    p = problems.builtin("INEQ-INACT")
    s = solvers.step_lag_gda(p, initial_state(p, [0.0], [0.0]), HyperParams(0.1, 0.1))
    assert s.lam[0] == 0.0


def test_al_gda_example(nc):
    s = solvers.step_al_gda(nc, initial_state(nc, [0.0], None, [0.0]), HyperParams(0.1, 0.1, c=3.0))
    assert s.x[0] == pytest.approx(0.3, abs=1e-15)
    assert s.mu[0] == pytest.approx(-0.07, abs=1e-15)


def test_al_gda_rejects_large_dual_step(nc):
    with pytest.raises(solvers.HyperParamError):
        solvers.step_al_gda(nc, initial_state(nc, [0.0]), HyperParams(0.1, 2.0, c=1.0))


def test_al_gda_eta_equals_c_is_projected_step():
    p = problems.builtin("MIXED-2")
    s0 = initial_state(p, [0.4, -0.2], [0.3, 0.7])
    hp = HyperParams(0.1, 1.5, c=1.5)
    s1 = solvers.step_al_gda(p, s0, hp)
    expect = np.maximum(s0.lam + 1.5 * p.g(s1.x), 0.0)
    assert np.array_equal(s1.lam, expect)


def test_oa_hand_iterates(nc):
    hp = HyperParams(0.1, 0.1, c=3.0, omega=3.0)
    s1 = solvers.step_dual_optimistic(nc, initial_state(nc, [0.0], None, [-2.9]), hp)
    assert s1.mu[0] == pytest.approx(-3.0, abs=1e-15)
    assert s1.x[0] == pytest.approx(0.3, abs=1e-15)
    s2 = solvers.step_dual_optimistic(nc, s1, hp)
    assert s2.mu[0] == pytest.approx(-2.17, abs=1e-14)
    assert s2.x[0] == pytest.approx(0.577, abs=1e-14)


def test_oa_zero_diff_first_step(nc):
    hp = HyperParams(0.1, 0.1, c=3.0, omega=3.0, first_step="zero-diff")
    s1 = solvers.step_dual_optimistic(nc, initial_state(nc, [0.0], None, [-2.9]), hp)
    assert s1.mu[0] == pytest.approx(-2.9 - 0.1 - 3.0, abs=1e-15)


def test_al_optimistic_example(nc):
    s = solvers.step_al_optimistic(nc, initial_state(nc, [0.0], None, [0.0]), HyperParams(0.1, 0.1, c=1.0, omega=2.0))
    assert s.x[0] == pytest.approx(0.1, abs=1e-16)


def test_al_optimistic_rejects_inequalities():
    p = problems.builtin("INEQ-ACT")
    with pytest.raises(solvers.HyperParamError):
        solvers.step_al_optimistic(p, initial_state(p, [0.0], [0.0]), HyperParams(0.1, 0.1))
    with pytest.raises(solvers.HyperParamError):
        solvers.run(p, "al_gd_oa", initial_state(p, [0.0], [0.0]), HyperParams(0.1, 0.1), 5)


@pytest.mark.parametrize("rule", ["lag_gda", "al_gda", "lag_gd_oa", "al_gd_oa"])
def test_kkt_is_fixed_point(catalog_problem, rule):
    p = catalog_problem
    if rule == "al_gd_oa" and p.m:
        pytest.skip("equality-only rule")
    s0 = _kkt_state(p)
    hp = HyperParams(0.1, 0.1, c=1.0, omega=1.0)
    s = s0
    for _ in range(3):
        s = solvers.RULES[rule](p, s, hp)
    assert np.max(np.abs(s.vector() - s0.vector()), initial=0.0) <= 1e-14


def test_omega_zero_is_bitwise(catalog_problem, rng):
    p = catalog_problem
    s0 = initial_state(p, rng.normal(size=p.d), rng.uniform(0, 1, p.m), rng.normal(size=p.n))
    hp = HyperParams(0.05, 0.05, c=1.0, omega=0.0)
    a, b = s0, s0
    for _ in range(20):
        a = solvers.step_dual_optimistic(p, a, hp)
        b = solvers.step_lag_gda(p, b, hp)
        assert np.array_equal(a.vector(), b.vector())
    if p.m == 0:
        a, b = s0, s0
        for _ in range(20):
            a = solvers.step_al_optimistic(p, a, hp)
            b = solvers.step_al_gda(p, b, hp)
            assert np.array_equal(a.vector(), b.vector())


@given(
    st.sampled_from(["INEQ-ACT", "INEQ-INACT", "MIXED-2"]),
    st.sampled_from(["lag_gda", "al_gda", "lag_gd_oa"]),
    st.integers(0, 2**32 - 1),
    st.floats(0.01, 0.3),
    st.floats(0.1, 1.0),
    st.floats(0.0, 3.0),
)
@settings(max_examples=60, deadline=None)
def test_lambda_stays_nonnegative(name, rule, seed, eta, frac, omega):
    p = problems.builtin(name)
    rng = np.random.default_rng(seed)
    c = 2.0
    hp = HyperParams(eta, frac * c, c=c, omega=omega)
    states = solvers.iterate(p, rule, initial_state(p, rng.uniform(-3, 3, p.d), rng.uniform(0, 3, p.m)), hp, 50)
    for s in states:
        if np.all(np.isfinite(s.lam)):
            assert np.all(s.lam >= 0.0)


def test_run_al_gda_converges(nc):
    tr = solvers.run(nc, "al_gda", initial_state(nc, [0.0], None, [0.0]), HyperParams(0.1, 0.1, c=3.0), 2000)
    assert abs(tr.final.x[0] - 1.0) <= 1e-6
    assert len(tr) == 2001
    assert tr.stop_reason == "budget"


def test_run_lag_gda_diverges(nc):
    with pytest.raises(solvers.DivergenceDetected) as e:
        solvers.run(nc, "lag_gda", initial_state(nc, [0.9], None, [1.9]), HyperParams(0.1, 0.1), 500)
    assert e.value.last_state.is_finite()
    assert e.value.trajectory.stop_reason == "diverged"


@pytest.mark.parametrize("rule", ["lag_gda", "al_gda", "lag_gd_oa"])
def test_run_stops_at_kkt(catalog_problem, rule):
    tr = solvers.run(catalog_problem, rule, _kkt_state(catalog_problem), HyperParams(0.1, 0.1), 100, stop_tol=1e-10)
    assert len(tr) == 1 and tr.stop_reason == "converged"
    assert tr.metrics[0].kkt_residual <= 1e-10


def test_run_zero_budget(nc):
    tr = solvers.run(nc, "al_gda", initial_state(nc, [0.0]), HyperParams(0.1, 0.1), 0)
    assert len(tr) == 0


def test_run_deterministic():
    p = problems.builtin("MIXED-2")
    hp = HyperParams(0.07, 0.05, c=1.3, omega=0.6)
    a = solvers.run(p, "lag_gd_oa", initial_state(p, [3.0, -1.0], [0.2, 0.4]), hp, 300)
    b = solvers.run(p, "lag_gd_oa", initial_state(p, [3.0, -1.0], [0.2, 0.4]), hp, 300)
    assert all(np.array_equal(u.vector(), v.vector()) for u, v in zip(a.states, b.states))
    assert a.metrics == b.metrics


def test_converged_states_are_kkt(catalog_problem):
    p = catalog_problem
    g = p.known_kkt[0]
    s0 = initial_state(p, g.x_star + 1e-3, g.lambda_star, g.mu_star)
    rule = "al_gda"
    hp = HyperParams(0.1, 0.1, c=3.0)
    states = solvers.iterate(p, rule, s0, hp, 3000)
    from dualopt.stability import kkt_residual
    for a, b in zip(states, states[1:]):
        if np.max(np.abs(b.vector() - a.vector())) <= 1e-14:
            assert kkt_residual(p, b.x, b.lam, b.mu) <= 1e-10


def test_unknown_rule(nc):
    with pytest.raises(solvers.HyperParamError):
        solvers.get_rule("sgd")


@pytest.mark.parametrize("kwargs", [
    dict(eta_x=0.0, eta_dual=0.1), dict(eta_x=0.1, eta_dual=-1.0),
    dict(eta_x=0.1, eta_dual=0.1, c=0.0), dict(eta_x=0.1, eta_dual=0.1, first_step="other"),
])
def test_hyperparam_validation(kwargs):
    with pytest.raises(solvers.HyperParamError):
        HyperParams(**kwargs)


def test_initial_state_rejects_negative_lambda():
    p = problems.builtin("INEQ-ACT")
    with pytest.raises(ValueError):
        initial_state(p, [0.0], [-1.0])


def test_mom_osc():
    p = problems.builtin("OSC-EQ")
    tr = solvers.method_of_multipliers(p, initial_state(p, [0.0], None, [0.0]), 1.0, outer_max=30)
    assert abs(tr.final.mu[0] + 1.0) <= 1e-6


def test_mom_nc_concave_inner_loop_diverges(nc):
    with pytest.raises(solvers.DivergenceDetected):
        solvers.method_of_multipliers(nc, initial_state(nc, [0.0], None, [0.0]), 1.0)


def test_mom_nc_convexified(nc):
    tr = solvers.method_of_multipliers(nc, initial_state(nc, [0.0], None, [0.0]), 6.0)
    assert abs(tr.final.x[0] - 1.0) <= 1e-6 and abs(tr.final.mu[0] - 2.0) <= 1e-6


def test_geometric_schedule():
    s = solvers.geometric_schedule(1.0, 2.0, 5.0)
    assert [s(t) for t in range(5)] == [1.0, 2.0, 4.0, 5.0, 5.0]
