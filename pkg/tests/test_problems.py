import numpy as np
import pytest

from dualopt import exprcore, problems, stability


def test_catalog_ids():
    assert set(problems.CATALOG_IDS) == {"QP-EQ", "OSC-EQ", "NC-EQ", "INEQ-ACT", "INEQ-INACT", "MIXED-2"}


def test_unknown_id():
    with pytest.raises(problems.ProblemError):
        problems.builtin("NOPE")


def test_known_kkt_residuals(catalog_problem):
    g = catalog_problem.known_kkt[0]
    assert stability.kkt_residual(catalog_problem, g.x_star, g.lambda_star, g.mu_star) <= 1e-10


def test_qp_eq_residual_tight():
    p = problems.builtin("QP-EQ")
    g = p.known_kkt[0]
    assert g.x_star[0] == 0.6666666666666666
    assert stability.kkt_residual(p, g.x_star, g.lambda_star, g.mu_star) <= 1e-12


def test_nc_eq_multiplier():
    g = problems.builtin("NC-EQ").known_kkt[0]
    assert -2 * g.x_star[0] + g.mu_star[0] == 0.0


def test_ineq_inact_strictly_inactive():
    p = problems.builtin("INEQ-INACT")
    g = p.known_kkt[0]
    assert g.lambda_star[0] == 0.0
    assert p.g(g.x_star)[0] == -1.0


@pytest.mark.parametrize("name,x,expected", [
    ("NC-EQ", [0.0], (0.0, [], [-1.0])),
    ("INEQ-ACT", [1.0], (0.5, [0.0], [])),
    ("MIXED-2", [1.0, 0.0], (0.5, [0.0, -5.0], [])),
])
def test_evaluate_all(name, x, expected):
    f, g, h = problems.evaluate_all(problems.builtin(name), x)
    assert f == expected[0]
    np.testing.assert_array_equal(g, expected[1])
    np.testing.assert_array_equal(h, expected[2])


def test_evaluate_all_deterministic(catalog_problem, rng):
    x = rng.normal(size=catalog_problem.d)
    a = problems.evaluate_all(catalog_problem, x)
    b = problems.evaluate_all(catalog_problem, x)
    assert a[0] == b[0] and np.array_equal(a[1], b[1]) and np.array_equal(a[2], b[2])


def test_evaluate_all_wrong_length():
    with pytest.raises(problems.ProblemError):
        problems.evaluate_all(problems.builtin("QP-EQ"), [1.0])


def test_from_config_matches_nc_eq(rng):
    spec = problems.from_config({"d": "1", "f": "-x1^2", "h": ["x1-1"]})
    ref = problems.builtin("NC-EQ")
    assert (spec.m, spec.n) == (0, 1)
    for x in rng.uniform(-3, 3, (20, 1)):
        assert spec.f(x) == ref.f(x)
        np.testing.assert_array_equal(spec.h(x), ref.h(x))
        np.testing.assert_array_equal(spec.grad_f(x), ref.grad_f(x))
        np.testing.assert_array_equal(spec.hess_f(x), ref.hess_f(x))


def test_from_config_unit_disk():
    spec = problems.from_config({"d": "2", "f": "x1", "g": "x1^2+x2^2-1"})
    assert (spec.m, spec.n) == (1, 0)
    assert spec.g([1.0, 1.0])[0] == 1.0


def test_from_config_index_error():
    with pytest.raises(exprcore.VariableIndexError):
        problems.from_config({"d": "1", "f": "x2"})


@pytest.mark.parametrize("cfg", [{}, {"f": "x1"}, {"d": "zero", "f": "x1"}, {"d": "0", "f": "x1"}])
def test_from_config_validation(cfg):
    with pytest.raises(problems.ProblemError):
        problems.from_config(cfg)


def test_from_config_catalog_name():
    assert problems.from_config({"name": "osc-eq"}).name == "OSC-EQ"


def test_check_derivatives_qp():
    rep = problems.check_derivatives(problems.builtin("QP-EQ"), [0.1, 0.2], 1e-5)
    assert rep.passed(1e-6)
    assert [e.label for e in rep.entries] == ["f", "h1"]


def test_check_derivatives_nc_gradient():
    p = problems.builtin("NC-EQ")
    assert p.grad_f([3.0])[0] == -6.0
    fd = problems.fd_gradient(p.f, np.array([3.0]), 1e-5)
    assert abs(fd[0] + 6.0) <= 1e-8


def test_check_derivatives_constant_objective():
    spec = problems.from_config({"d": "2", "f": "3", "h": "x1 - x2"})
    rep = problems.check_derivatives(spec, [0.3, -0.2])
    assert rep.entries[0].grad_error == 0.0


def test_check_derivatives_reports_wrong_gradient():
    good = problems.builtin("OSC-EQ")
    bad_f = problems.AnalyticMap(lambda x: 0.5 * x @ x, lambda x: 2 * x, lambda x: np.eye(1), "wrong")
    spec = problems.ProblemSpec("bad", 1, bad_f, eq=good.eq)
    rep = problems.check_derivatives(spec, [1.0])
    assert not rep.passed()
    assert rep.max_grad_error > 0.1


def test_check_derivatives_step_validation():
    with pytest.raises(ValueError):
        problems.check_derivatives(problems.builtin("OSC-EQ"), [1.0], 0.0)


def test_expression_twin_matches_analytic(catalog_problem, rng):
    twin = problems.expression_twin(catalog_problem)
    for _ in range(10):
        x = rng.uniform(-2, 2, catalog_problem.d)
        for (_, a), (_, b) in zip(catalog_problem.maps(), twin.maps()):
            assert a.value(x) == pytest.approx(b.value(x), rel=1e-14, abs=1e-14)
            np.testing.assert_allclose(a.gradient(x), b.gradient(x), rtol=1e-14, atol=1e-14)
            np.testing.assert_allclose(a.hessian(x), b.hessian(x), rtol=1e-14, atol=1e-14)


def test_negative_lambda_star_rejected():
    with pytest.raises(problems.ProblemError):
        problems.KKTGuess([0.0], [-1.0], [])
