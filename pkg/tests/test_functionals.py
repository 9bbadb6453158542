import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualopt import functionals as fn
from dualopt import problems
from dualopt.problems import fd_gradient


@pytest.fixture(scope="module")
def nc():
    return problems.builtin("NC-EQ")


@pytest.fixture(scope="module")
def act():
    return problems.builtin("INEQ-ACT")


@pytest.fixture(scope="module")
def inact():
    return problems.builtin("INEQ-INACT")


def test_lagrangian_values(nc, act):
    assert fn.lagrangian(nc, [0.0], [], [0.0]) == 0.0
    assert fn.lagrangian(nc, [0.0], [], [2.0]) == -2.0
    assert fn.lagrangian(act, [1.0], [1.0], []) == 0.5


def test_lagrangian_dimension_mismatch(nc):
    with pytest.raises(ValueError):
        fn.lagrangian(nc, [0.0], [1.0], [0.0])


def test_al_values(nc, act, inact):
    assert fn.aug_lagrangian_value(nc, [0.0], [], [0.0], 3.0) == 1.5
    assert fn.aug_lagrangian_value(inact, [0.0], [0.0], [], 2.0) == 0.0
    assert fn.aug_lagrangian_value(act, [1.5], [0.0], [], 2.0) == 0.375


@pytest.mark.parametrize("c", [0.0, -1.0])
def test_al_rejects_nonpositive_c(nc, c):
    with pytest.raises(ValueError):
        fn.aug_lagrangian_value(nc, [0.0], [], [0.0], c)
    with pytest.raises(ValueError):
        fn.aug_lagrangian_grad(nc, [0.0], [], [0.0], c)


def test_al_grad_examples(nc, act, inact):
    g = fn.aug_lagrangian_grad(nc, [0.0], [], [0.0], 3.0)
    assert g.grad_x[0] == -3.0 and g.grad_mu[0] == -1.0
    assert fn.aug_lagrangian_grad(inact, [0.0], [0.0], [], 2.0).grad_lambda[0] == 0.0
    g = fn.aug_lagrangian_grad(act, [1.0], [1.0], [], 0.5)
    assert g.grad_lambda[0] == 0.0 and g.grad_x[0] == 0.0


def test_al_hessian_examples(act, inact):
    H = fn.aug_lagrangian_hessian(act, [1.0], [1.0], [], 1.0)
    assert (H.xx[0, 0], H.x_lambda[0, 0], H.lambda_lambda[0, 0]) == (2.0, 1.0, 0.0)
    H = fn.aug_lagrangian_hessian(inact, [0.0], [0.0], [], 2.0)
    assert (H.xx[0, 0], H.x_lambda[0, 0], H.lambda_lambda[0, 0]) == (1.0, 0.0, -0.5)


def test_al_hessian_kink(act):
    with pytest.raises(fn.NondifferentiablePoint) as e:
        fn.aug_lagrangian_hessian(act, [1.0], [0.0], [], 1.0)
    assert e.value.index == 0


def test_positive_part_ties_are_positive_zero():
    out = fn.positive_part(np.array([-0.0, 0.0, -1.0, 2.0]))
    assert list(out) == [0.0, 0.0, 0.0, 2.0]
    assert not np.any(np.signbit(out))


@given(
    st.lists(st.floats(-5, 5), min_size=1, max_size=6),
    st.lists(st.floats(0, 5), min_size=6, max_size=6),
    st.floats(1e-3, 10),
)
@settings(max_examples=300, deadline=None)
def test_grad_lambda_identity(g, lam, c):
    g = np.array(g)
    lam = np.array(lam[:g.size])
    closed = (fn.positive_part(lam + c * g) - lam) / c
    # the closed form cancels (lam + c g) - lam, so rounding scales with lam / c
    scale = 1 + np.max(np.abs(g)) + np.max(lam) / c
    assert np.max(np.abs(closed - fn.grad_lambda_piecewise(g, lam, c))) <= 1e-14 * scale


def _random_state(p, rng):
    return rng.uniform(-2, 2, p.d), rng.uniform(0, 2, p.m), rng.normal(size=p.n)


def test_grad_matches_fd(catalog_problem, rng):
    p = catalog_problem
    for _ in range(100):
        x, lam, mu = _random_state(p, rng)
        c = rng.uniform(0.2, 5)
        if np.any(np.abs(lam + c * p.g(x)) < 1e-3):
            continue
        g = fn.aug_lagrangian_grad(p, x, lam, mu, c)
        fd_x = fd_gradient(lambda z: fn.aug_lagrangian_value(p, z, lam, mu, c), x, 1e-5)
        assert problems.relative_error(g.grad_x, fd_x) <= 1e-6
        if p.m:
            fd_l = fd_gradient(lambda z: fn.aug_lagrangian_value(p, x, z, mu, c), lam, 1e-5)
            assert problems.relative_error(g.grad_lambda, fd_l) <= 1e-6
        if p.n:
            fd_m = fd_gradient(lambda z: fn.aug_lagrangian_value(p, x, lam, z, c), mu, 1e-5)
            assert problems.relative_error(g.grad_mu, fd_m) <= 1e-6


def test_hessian_matches_fd(catalog_problem, rng):
    p = catalog_problem
    checked = 0
    while checked < 20:
        x, lam, mu = _random_state(p, rng)
        c = rng.uniform(0.2, 5)
        if np.any(np.abs(lam + c * p.g(x)) < 1e-2):
            continue
        H = fn.aug_lagrangian_hessian(p, x, lam, mu, c).assemble()
        z0 = np.concatenate([x, lam, mu])

        def grad(z):
            g = fn.aug_lagrangian_grad(p, z[:p.d], z[p.d:p.d + p.m], z[p.d + p.m:], c)
            return np.concatenate([g.grad_x, g.grad_lambda, g.grad_mu])

        fd = problems.fd_jacobian(grad, z0, 1e-5)
        assert problems.relative_error(H, fd) <= 1e-5
        assert np.array_equal(H, H.T)
        checked += 1


def test_small_c_limit():
    p = problems.builtin("MIXED-2")
    x = np.array([0.3, 0.4])
    g = fn.aug_lagrangian_grad(p, x, [0.0, 0.0], [], 1e-8)
    assert np.max(np.abs(g.grad_x - p.grad_f(x))) <= 1e-6


def test_lagrangian_hessian_x(act):
    assert fn.lagrangian_hessian_x(act, [1.0], [1.0], [])[0, 0] == 1.0
    assert fn.lagrangian_grad_x(act, [1.0], [1.0], [])[0] == 0.0
