"""Single-step primal-dual update rules, the Method of Multipliers, and trajectory runs.

Update orders:

* ``lag_gda``   dual first, then a primal step on the Lagrangian.
* ``al_gda``    primal step on L_c, then dual ascent at the new point.
* ``lag_gd_oa`` as ``lag_gda`` with an optimistic ``omega * (g_t - g_{t-1})`` term.
* ``al_gd_oa``  as ``al_gda`` with the optimistic term (equality constraints only).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .functionals import positive_part
from .problems import ProblemSpec
from .stability import kkt_residual

DIVERGENCE_BOUND = 1e12
FIRST_STEP_MODES = ("plain", "zero-diff")


class HyperParamError(ValueError):
    pass


class DivergenceDetected(RuntimeError):
    """A state component became non-finite or exceeded the divergence bound."""

    def __init__(self, t: int, last_state: "PrimalDualState", trajectory: Optional["Trajectory"] = None):
        super().__init__(f"iterate diverged at t={t}")
        self.t = t
        self.last_state = last_state
        self.trajectory = trajectory


@dataclass(frozen=True)
class HyperParams:
    eta_x: float
    eta_dual: float
    c: float = 1.0
    omega: float = 0.0
    first_step: str = "plain"

    def __post_init__(self):
        if not (self.eta_x > 0 and self.eta_dual > 0):
            raise HyperParamError("step sizes must be positive")
        if not self.c > 0:
            raise HyperParamError("penalty c must be positive")
        if not math.isfinite(self.omega):
            raise HyperParamError("omega must be finite")
        if self.first_step not in FIRST_STEP_MODES:
            raise HyperParamError(f"first_step must be one of {FIRST_STEP_MODES}")

    def require_al(self):
        if self.eta_dual > self.c:
            raise HyperParamError(f"al_gda needs 0 < eta_dual <= c (eta_dual={self.eta_dual!r}, c={self.c!r})")


@dataclass(frozen=True)
class PrimalDualState:
    x: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    prev_g: Optional[np.ndarray] = None
    prev_h: Optional[np.ndarray] = None
    t: int = 0

    def vector(self) -> np.ndarray:
        """``(x, lambda, mu)`` stacked."""
        return np.concatenate([self.x, self.lam, self.mu])

    def is_finite(self, bound: float = DIVERGENCE_BOUND) -> bool:
        v = self.vector()
        return bool(np.all(np.isfinite(v)) and np.all(np.abs(v) <= bound))


def initial_state(problem: ProblemSpec, x0, lam0=None, mu0=None) -> PrimalDualState:
    x = problem.point(x0).copy()
    lam = np.zeros(problem.m) if lam0 is None else np.asarray(lam0, dtype=float).reshape(-1).copy()
    mu = np.zeros(problem.n) if mu0 is None else np.asarray(mu0, dtype=float).reshape(-1).copy()
    if lam.shape[0] != problem.m or mu.shape[0] != problem.n:
        raise ValueError(f"multiplier lengths ({lam.shape[0]}, {mu.shape[0]}) do not match (m, n) = "
                         f"({problem.m}, {problem.n})")
    if np.any(lam < 0):
        raise ValueError("initial lambda must be nonnegative")
    return PrimalDualState(x, lam, mu)


def _check_state(problem: ProblemSpec, s: PrimalDualState):
    if s.x.shape != (problem.d,) or s.lam.shape != (problem.m,) or s.mu.shape != (problem.n,):
        raise ValueError(f"state shapes {s.x.shape}, {s.lam.shape}, {s.mu.shape} do not match "
                         f"(d, m, n) = ({problem.d}, {problem.m}, {problem.n})")


def _primal_lag_step(problem, x, lam, mu, eta_x):
    grad = problem.grad_f(x)
    if problem.m:
        grad = grad + lam @ problem.jac_g(x)
    if problem.n:
        grad = grad + mu @ problem.jac_h(x)
    return x - eta_x * grad


def _primal_al_step(problem, x, lam, mu, g, h, c, eta_x):
    grad = problem.grad_f(x)
    if problem.m:
        grad = grad + positive_part(lam + c * g) @ problem.jac_g(x)
    if problem.n:
        grad = grad + (mu + c * h) @ problem.jac_h(x)
    return x - eta_x * grad


def _lag_gda(problem, state, hp):
    x = state.x
    g, h = problem.g(x), problem.h(x)
    mu = state.mu + hp.eta_dual * h
    lam = positive_part(state.lam + hp.eta_dual * g) if problem.m else state.lam
    x_new = _primal_lag_step(problem, x, lam, mu, hp.eta_x)
    return PrimalDualState(x_new, lam, mu, g, h, state.t + 1)


def _al_gda(problem, state, hp):
    c, eta = hp.c, hp.eta_dual
    g, h = problem.g(state.x), problem.h(state.x)
    x_new = _primal_al_step(problem, state.x, state.lam, state.mu, g, h, c, hp.eta_x)
    g_new, h_new = problem.g(x_new), problem.h(x_new)
    mu = state.mu + eta * h_new
    lam = state.lam
    if problem.m:
        lam = (1.0 - eta / c) * lam + (eta / c) * positive_part(lam + c * g_new)
    return PrimalDualState(x_new, lam, mu, g, h, state.t + 1)


def _optimistic_term(hp: HyperParams, now: np.ndarray, prev: Optional[np.ndarray]):
    if prev is None:
        if hp.first_step == "plain":
            return None
        prev = np.zeros_like(now)
    return hp.omega * (now - prev)


def _dual_optimistic(problem, state, hp):
    x = state.x
    g, h = problem.g(x), problem.h(x)
    mu = state.mu + hp.eta_dual * h
    lam = state.lam + hp.eta_dual * g
    if hp.omega != 0.0:
        dh = _optimistic_term(hp, h, state.prev_h)
        dg = _optimistic_term(hp, g, state.prev_g)
        if dh is not None:
            mu = mu + dh
        if dg is not None:
            lam = lam + dg
    if problem.m:
        lam = positive_part(lam)
    x_new = _primal_lag_step(problem, x, lam, mu, hp.eta_x)
    return PrimalDualState(x_new, lam, mu, g, h, state.t + 1)


def _al_optimistic(problem, state, hp):
    h = problem.h(state.x)
    empty = np.zeros(0)
    x_new = _primal_al_step(problem, state.x, state.lam, state.mu, empty, h, hp.c, hp.eta_x)
    h_new = problem.h(x_new)
    mu = state.mu + hp.eta_dual * h_new
    if hp.omega != 0.0:
        mu = mu + hp.omega * (h_new - h)
    return PrimalDualState(x_new, state.lam.copy(), mu, empty, h, state.t + 1)


def step_lag_gda(problem: ProblemSpec, state: PrimalDualState, hp: HyperParams) -> PrimalDualState:
    _check_state(problem, state)
    return _lag_gda(problem, state, hp)


def step_al_gda(problem: ProblemSpec, state: PrimalDualState, hp: HyperParams) -> PrimalDualState:
    hp.require_al()
    _check_state(problem, state)
    return _al_gda(problem, state, hp)


def step_dual_optimistic(problem: ProblemSpec, state: PrimalDualState, hp: HyperParams) -> PrimalDualState:
    _check_state(problem, state)
    return _dual_optimistic(problem, state, hp)


def step_al_optimistic(problem: ProblemSpec, state: PrimalDualState, hp: HyperParams) -> PrimalDualState:
    if problem.m:
        raise HyperParamError("al_gd_oa is defined for equality-constrained problems only (m = 0)")
    _check_state(problem, state)
    return _al_optimistic(problem, state, hp)


# unchecked kernels; run/iterate validate once up front
_KERNELS = {
    "lag_gda": _lag_gda,
    "al_gda": _al_gda,
    "lag_gd_oa": _dual_optimistic,
    "al_gd_oa": _al_optimistic,
}

RULES: dict[str, Callable[[ProblemSpec, PrimalDualState, HyperParams], PrimalDualState]] = {
    "lag_gda": step_lag_gda,
    "al_gda": step_al_gda,
    "lag_gd_oa": step_dual_optimistic,
    "al_gd_oa": step_al_optimistic,
}


def get_rule(rule_id: str):
    try:
        return RULES[rule_id]
    except KeyError:
        raise HyperParamError(f"unknown rule {rule_id!r}; expected one of {', '.join(RULES)}") from None


def validate(problem: ProblemSpec, rule_id: str, hp: HyperParams):
    """Reject rule/hyperparameter combinations before any step is taken."""
    get_rule(rule_id)
    if rule_id == "al_gda":
        hp.require_al()
    if rule_id == "al_gd_oa" and problem.m:
        raise HyperParamError("al_gd_oa is defined for equality-constrained problems only (m = 0)")


# --- trajectories -------------------------------------------------------------


@dataclass(frozen=True)
class StepMetrics:
    f: float
    norm_h_inf: float
    max_g_plus: float
    lagrangian: float
    kkt_residual: float
    step_norm: float


def measure(problem: ProblemSpec, s: PrimalDualState, step_norm: float = 0.0) -> StepMetrics:
    f = problem.f(s.x)
    g, h = problem.g(s.x), problem.h(s.x)
    return StepMetrics(
        f=f,
        norm_h_inf=float(np.max(np.abs(h))) if h.size else 0.0,
        max_g_plus=float(np.max(positive_part(g))) if g.size else 0.0,
        lagrangian=f + float(s.lam @ g) + float(s.mu @ h),
        kkt_residual=kkt_residual(problem, s.x, s.lam, s.mu),
        step_norm=step_norm,
    )


@dataclass
class Trajectory:
    problem: str
    rule: str
    states: list[PrimalDualState] = field(default_factory=list)
    metrics: list[StepMetrics] = field(default_factory=list)
    stop_reason: str = "budget"

    def __len__(self):
        return len(self.states)

    @property
    def final(self) -> PrimalDualState:
        return self.states[-1]

    def append(self, state: PrimalDualState, metrics: StepMetrics):
        self.states.append(state)
        self.metrics.append(metrics)


def run(problem: ProblemSpec, rule_id: str, init: PrimalDualState, hp: HyperParams,
        max_steps: int, stop_tol: float = 0.0, guard: float = DIVERGENCE_BOUND) -> Trajectory:
    """Iterate ``rule_id`` from ``init``.

    The start state is recorded as t=0 whenever at least one step is allowed;
    a zero budget records nothing.  Stops early once the KKT residual of the
    latest state is at most ``stop_tol``.
    """
    validate(problem, rule_id, hp)
    _check_state(problem, init)
    rule = _KERNELS[rule_id]
    traj = Trajectory(problem.name, rule_id)
    if max_steps <= 0:
        return traj
    state = init
    traj.append(state, measure(problem, state))
    if traj.metrics[-1].kkt_residual <= stop_tol:
        traj.stop_reason = "converged"
        return traj
    for _ in range(max_steps):
        with np.errstate(over="ignore", invalid="ignore"):
            nxt = rule(problem, state, hp)
        if not nxt.is_finite(guard):
            traj.stop_reason = "diverged"
            raise DivergenceDetected(nxt.t, state, traj)
        step = float(np.max(np.abs(nxt.vector() - state.vector()), initial=0.0))
        state = nxt
        traj.append(state, measure(problem, state, step))
        if traj.metrics[-1].kkt_residual <= stop_tol:
            traj.stop_reason = "converged"
            break
    return traj


def iterate(problem: ProblemSpec, rule_id: str, init: PrimalDualState, hp: HyperParams,
            steps: int) -> list[PrimalDualState]:
    """Raw states ``t = 0..steps`` with no metrics and no divergence guard."""
    validate(problem, rule_id, hp)
    _check_state(problem, init)
    rule = _KERNELS[rule_id]
    out = [init]
    state = init
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(steps):
            state = rule(problem, state, hp)
            out.append(state)
    return out


# --- Method of Multipliers ----------------------------------------------------

Schedule = Union[float, Sequence[float], Callable[[int], float]]


def geometric_schedule(c0: float, factor: float = 1.0, c_max: float = math.inf) -> Callable[[int], float]:
    """``c_t = min(c0 * factor**t, c_max)``."""
    if not c0 > 0 or factor < 1.0:
        raise HyperParamError("geometric schedule needs c0 > 0 and factor >= 1")
    return lambda t: min(c0 * factor**t, c_max)


def _schedule_fn(c_schedule: Schedule, outer_max: int) -> Callable[[int], float]:
    if callable(c_schedule):
        fn = c_schedule
        values = [fn(t) for t in range(outer_max)]
    elif np.ndim(c_schedule) == 0:
        values = [float(c_schedule)] * outer_max
    else:
        values = [float(v) for v in c_schedule]
        if len(values) < outer_max:
            values += [values[-1]] * (outer_max - len(values))
    if any(not v > 0 for v in values):
        raise HyperParamError("penalty schedule must be positive")
    if any(b < a for a, b in zip(values, values[1:])):
        raise HyperParamError("penalty schedule must be nondecreasing")
    return lambda t: values[t]


def method_of_multipliers(problem: ProblemSpec, init: PrimalDualState, c_schedule: Schedule,
                          inner_tol: float = 1e-12, inner_max: int = 10_000, outer_max: int = 50,
                          inner_lr: float = 0.1, stop_tol: float = 0.0,
                          guard: float = DIVERGENCE_BOUND) -> Trajectory:
    """Outer loop: approximately minimize L_{c_t} in x by gradient descent, then
    ``mu += c_t h``, ``lambda = [lambda + c_t g]_+``.  One recorded state per outer step."""
    _check_state(problem, init)
    c_of = _schedule_fn(c_schedule, max(outer_max, 1))
    traj = Trajectory(problem.name, "method_of_multipliers")
    state = init
    traj.append(state, measure(problem, state))
    for k in range(outer_max):
        c = c_of(k)
        x = state.x
        for _ in range(inner_max):
            g, h = problem.g(x), problem.h(x)
            grad = (problem.grad_f(x) + positive_part(state.lam + c * g) @ problem.jac_g(x)
                    + (state.mu + c * h) @ problem.jac_h(x))
            if np.max(np.abs(grad), initial=0.0) <= inner_tol:
                break
            with np.errstate(over="ignore", invalid="ignore"):
                x = x - inner_lr * grad
            if not (np.all(np.isfinite(x)) and np.all(np.abs(x) <= guard)):
                traj.stop_reason = "diverged"
                raise DivergenceDetected(k + 1, state, traj)
        g, h = problem.g(x), problem.h(x)
        nxt = PrimalDualState(x, positive_part(state.lam + c * g), state.mu + c * h, g, h, k + 1)
        if not nxt.is_finite(guard):
            traj.stop_reason = "diverged"
            raise DivergenceDetected(k + 1, state, traj)
        step = float(np.max(np.abs(nxt.vector() - state.vector()), initial=0.0))
        state = nxt
        traj.append(state, measure(problem, state, step))
        if traj.metrics[-1].kkt_residual <= stop_tol:
            traj.stop_reason = "converged"
            break
    return traj


def with_omega(hp: HyperParams, omega: float, c: Optional[float] = None) -> HyperParams:
    return replace(hp, omega=omega, c=hp.c if c is None else c)
