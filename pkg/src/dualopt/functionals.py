"""Lagrangian and augmented Lagrangian values, gradients and Hessian blocks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problems import ProblemSpec

DEFAULT_MARGIN = 1e-10


class NondifferentiablePoint(ValueError):
    """Some ``lambda_i + c*g_i(x)`` sits on the kink of the one-sided penalty."""

    def __init__(self, index: int, value: float):
        super().__init__(f"lambda_{index + 1} + c*g_{index + 1}(x) = {value!r} is within the margin of 0")
        self.index = index
        self.value = value


def positive_part(v: np.ndarray) -> np.ndarray:
    # ties map to +0.0
    return np.maximum(np.asarray(v, dtype=float), 0.0) + 0.0


def _check(problem: ProblemSpec, x, lam, mu):
    x = problem.point(x)
    lam = np.asarray(lam, dtype=float).reshape(-1)
    mu = np.asarray(mu, dtype=float).reshape(-1)
    if lam.shape[0] != problem.m:
        raise ValueError(f"lambda has length {lam.shape[0]}, expected {problem.m}")
    if mu.shape[0] != problem.n:
        raise ValueError(f"mu has length {mu.shape[0]}, expected {problem.n}")
    return x, lam, mu


def _check_c(c: float):
    if not c > 0:
        raise ValueError(f"penalty c must be positive, got {c!r}")


def lagrangian(problem: ProblemSpec, x, lam, mu) -> float:
    x, lam, mu = _check(problem, x, lam, mu)
    return problem.f(x) + float(lam @ problem.g(x)) + float(mu @ problem.h(x))


def aug_lagrangian_value(problem: ProblemSpec, x, lam, mu, c: float) -> float:
    _check_c(c)
    x, lam, mu = _check(problem, x, lam, mu)
    g, h = problem.g(x), problem.h(x)
    shifted = positive_part(lam + c * g)
    eq_term = float((mu + c * h) @ (mu + c * h) - mu @ mu)
    ineq_term = float(shifted @ shifted - lam @ lam)
    return problem.f(x) + (eq_term + ineq_term) / (2.0 * c)


@dataclass(frozen=True)
class ALGradient:
    grad_x: np.ndarray
    grad_lambda: np.ndarray
    grad_mu: np.ndarray


def aug_lagrangian_grad(problem: ProblemSpec, x, lam, mu, c: float) -> ALGradient:
    _check_c(c)
    x, lam, mu = _check(problem, x, lam, mu)
    g, h = problem.g(x), problem.h(x)
    shifted = positive_part(lam + c * g)
    grad_x = problem.grad_f(x) + shifted @ problem.jac_g(x) + (mu + c * h) @ problem.jac_h(x)
    return ALGradient(grad_x, (shifted - lam) / c, h)


def grad_lambda_piecewise(g: np.ndarray, lam: np.ndarray, c: float) -> np.ndarray:
    """``g_i`` where ``lam_i + c g_i >= 0``, else ``-lam_i / c``."""
    return np.where(lam + c * g >= 0.0, g, -lam / c)


@dataclass(frozen=True)
class ALHessian:
    xx: np.ndarray
    x_lambda: np.ndarray
    x_mu: np.ndarray
    lambda_lambda: np.ndarray
    active_indicator: np.ndarray

    def assemble(self) -> np.ndarray:
        """Full symmetric matrix over ``(x, lambda, mu)``."""
        d, m = self.x_lambda.shape
        n = self.x_mu.shape[1]
        H = np.zeros((d + m + n, d + m + n))
        H[:d, :d] = self.xx
        H[:d, d:d + m] = self.x_lambda
        H[d:d + m, :d] = self.x_lambda.T
        H[:d, d + m:] = self.x_mu
        H[d + m:, :d] = self.x_mu.T
        H[d:d + m, d:d + m] = self.lambda_lambda
        return H


def aug_lagrangian_hessian(problem: ProblemSpec, x, lam, mu, c: float,
                           margin: float = DEFAULT_MARGIN) -> ALHessian:
    _check_c(c)
    x, lam, mu = _check(problem, x, lam, mu)
    g, h = problem.g(x), problem.h(x)
    pre = lam + c * g
    for i, v in enumerate(pre):
        if abs(v) <= margin:
            raise NondifferentiablePoint(i, float(v))
    active = (pre > 0).astype(float)
    Jg, Jh = problem.jac_g(x), problem.jac_h(x)
    xx = problem.hess_f(x)
    if problem.m:
        xx = xx + np.tensordot(positive_part(pre), problem.hess_g(x), axes=1)
        xx = xx + c * (Jg.T * active) @ Jg
    if problem.n:
        xx = xx + np.tensordot(mu + c * h, problem.hess_h(x), axes=1)
        xx = xx + c * Jh.T @ Jh
    return ALHessian(
        xx=xx,
        x_lambda=Jg.T * active,
        x_mu=Jh.T.copy(),
        lambda_lambda=-np.diag(1.0 - active) / c,
        active_indicator=active,
    )


def lagrangian_hessian_x(problem: ProblemSpec, x, lam, mu) -> np.ndarray:
    """``grad^2_x L`` at ``(x, lam, mu)``."""
    x, lam, mu = _check(problem, x, lam, mu)
    H = problem.hess_f(x)
    if problem.m:
        H = H + np.tensordot(lam, problem.hess_g(x), axes=1)
    if problem.n:
        H = H + np.tensordot(mu, problem.hess_h(x), axes=1)
    return H


def lagrangian_grad_x(problem: ProblemSpec, x, lam, mu) -> np.ndarray:
    x, lam, mu = _check(problem, x, lam, mu)
    return problem.grad_f(x) + lam @ problem.jac_g(x) + mu @ problem.jac_h(x)
