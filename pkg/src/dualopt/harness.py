"""Composite experiments: matched-iterate equivalence runs, omega sweeps,
oscillation counts, rate estimation and stability-region checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import solvers
from .problems import KKTGuess, ProblemSpec
from .solvers import HyperParams, PrimalDualState, Trajectory
from .stability import (
    ActivePartition,
    StabilityReport,
    active_partition,
    analyze,
    certificate_from_guess,
    check_assumptions,
    report_OG,
)


class HarnessError(ValueError):
    pass


class NoConvergentTail(HarnessError):
    """No iterate error falls inside the rate-estimation window."""


def _require_equality_only(problem: ProblemSpec):
    if problem.m:
        raise HarnessError(f"{problem.name} has inequality constraints; equality-only problems required")


# --- equivalence --------------------------------------------------------------


@dataclass
class EquivalenceResult:
    max_primal_gap: float
    max_dual_gap: float
    steps: int
    primal_gaps: np.ndarray = field(repr=False)
    dual_gaps: np.ndarray = field(repr=False)
    offsets: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"max_primal_gap": self.max_primal_gap, "max_dual_gap": self.max_dual_gap,
                "steps": self.steps, "offsets": self.offsets}


def _gap_series(xs_a, xs_b) -> np.ndarray:
    """Per-step ``|x_a - x_b|_inf / (1 + |x_a|_inf)``."""
    a = np.array([s.x for s in xs_a])
    b = np.array([s.x for s in xs_b])
    with np.errstate(over="ignore", invalid="ignore"):
        return np.max(np.abs(a - b), axis=1) / (1.0 + np.max(np.abs(a), axis=1))


def _finite_max(v: np.ndarray) -> float:
    return float(np.max(v)) if v.size and np.all(np.isfinite(v)) else (math.inf if v.size else 0.0)


def run_equivalence_equality(problem: ProblemSpec, x0, mu0, hp: HyperParams, steps: int) -> EquivalenceResult:
    """AL-GDA from ``(x0, mu0)`` against optimistic ascent with omega = c from
    ``(x0, mu0 + (c - eta_dual) h(x0))``.

    Gaps are relative to ``1 + |x_t|_inf``.  The dual gap is the change of
    variable ``mu^OG_{t+1} - mu^AL_t - c h(x^AL_t)``.
    """
    _require_equality_only(problem)
    if hp.omega != hp.c:
        raise HarnessError(f"matched iterates need omega == c (omega={hp.omega!r}, c={hp.c!r})")
    al0 = solvers.initial_state(problem, x0, None, mu0)
    offset = (hp.c - hp.eta_dual) * problem.h(al0.x)
    og0 = solvers.initial_state(problem, x0, None, al0.mu + offset)
    al = solvers.iterate(problem, "al_gda", al0, hp, steps)
    og = solvers.iterate(problem, "lag_gd_oa", og0, hp, steps)
    primal = _gap_series(al, og)
    dual = np.zeros(steps)
    if steps:
        mu_og = np.array([s.mu for s in og[1:]])
        mu_al = np.array([s.mu for s in al[:-1]])
        h_al = np.array([s.prev_h for s in al[1:]])  # prev_h of step t+1 is h(x^AL_t)
        x_al = np.array([s.x for s in al[:-1]])
        with np.errstate(over="ignore", invalid="ignore"):
            diff = mu_og - mu_al - hp.c * h_al
            dual = np.max(np.abs(diff), axis=1) / (1.0 + np.max(np.abs(x_al), axis=1))
    return EquivalenceResult(_finite_max(primal), _finite_max(dual), steps, primal, dual,
                             {"mu0_og_minus_mu0_al": offset.tolist()})


def run_compounding_check(problem: ProblemSpec, x0, mu0, c: float, omega: float, eta,
                          steps: int) -> EquivalenceResult:
    """Three-way primal match among al_gd_oa(c, omega), al_gda(c + omega) and
    lag_gd_oa(omega' = c + omega).

    Initial multipliers: ``mu0`` for al_gd_oa, ``mu0 - omega h(x0)`` for
    al_gda and ``mu0 + (c - eta_dual) h(x0)`` for lag_gd_oa.  The dual gap
    tracks ``mu^{al_gda}_t - (mu^{al_gd_oa}_t - omega h(x_t))``.
    """
    _require_equality_only(problem)
    eta_x, eta_dual = (eta, eta) if np.ndim(eta) == 0 else tuple(eta)
    hp_oa = HyperParams(eta_x, eta_dual, c, omega)
    hp_al = HyperParams(eta_x, eta_dual, c + omega, 0.0)
    hp_og = HyperParams(eta_x, eta_dual, c + omega, c + omega)
    start = solvers.initial_state(problem, x0, None, mu0)
    h0 = problem.h(start.x)
    off_al = -omega * h0
    off_og = (c - eta_dual) * h0
    a = solvers.iterate(problem, "al_gd_oa", start, hp_oa, steps)
    b = solvers.iterate(problem, "al_gda", replace(start, mu=start.mu + off_al), hp_al, steps)
    o = solvers.iterate(problem, "lag_gd_oa", replace(start, mu=start.mu + off_og), hp_og, steps)
    primal = np.maximum(np.maximum(_gap_series(a, b), _gap_series(a, o)), _gap_series(b, o))
    dual = np.empty(steps + 1)
    for t in range(steps + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            diff = b[t].mu - (a[t].mu - omega * problem.h(a[t].x))
            dual[t] = np.max(np.abs(diff), initial=0.0) / (1.0 + np.max(np.abs(a[t].x)))
    return EquivalenceResult(_finite_max(primal), _finite_max(dual), steps, primal, dual,
                             {"al_gda_mu0_offset": off_al.tolist(), "lag_gd_oa_mu0_offset": off_og.tolist()})


# --- oscillation --------------------------------------------------------------


def oscillation_metrics(problem: ProblemSpec, states: Sequence[PrimalDualState] | Trajectory,
                        tail_fraction: float = 0.25) -> dict:
    """Sign changes per constraint, completed infeasible excursions, tail amplitude.

    An excursion for ``g_i`` is a run with ``g_i > 0`` that returns to
    ``g_i <= 0``; for ``h_j`` it is a pair of consecutive zero crossings.
    """
    states = states.states if isinstance(states, Trajectory) else list(states)
    if not states:
        raise HarnessError("empty trajectory")
    H = np.array([problem.h(s.x) for s in states]).reshape(len(states), problem.n)
    G = np.array([problem.g(s.x) for s in states]).reshape(len(states), problem.m)
    h_changes = [int(np.sum(H[:-1, j] * H[1:, j] < 0)) for j in range(problem.n)]
    g_changes = [int(np.sum(G[:-1, i] * G[1:, i] < 0)) for i in range(problem.m)]
    g_excursions = [int(np.sum((G[:-1, i] > 0) & (G[1:, i] <= 0))) for i in range(problem.m)]
    overshoot = sum(g_excursions) + sum(c // 2 for c in h_changes)
    tail = max(1, int(math.ceil(len(states) * tail_fraction)))
    viol = np.concatenate([np.abs(H[-tail:]), np.maximum(G[-tail:], 0.0)], axis=1)
    return {
        "sign_changes_h": h_changes,
        "sign_changes_g": g_changes,
        "sign_changes": sum(h_changes) + sum(g_changes),
        "overshoot": overshoot,
        "tail_amplitude": float(viol.max()) if viol.size else 0.0,
    }


# --- sweeps -------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    omega: float
    spectral_radius: float
    max_abs_imag: float
    condition_number: float
    is_lssp: bool
    sign_changes: Optional[int] = None

    def as_dict(self) -> dict:
        return {"omega": self.omega, "rho": self.spectral_radius, "max_abs_imag": self.max_abs_imag,
                "kappa": self.condition_number, "is_lssp": self.is_lssp, "sign_changes": self.sign_changes}


def certified_partition(problem: ProblemSpec, kkt: Optional[KKTGuess] = None) -> ActivePartition:
    cert = certificate_from_guess(problem, kkt)
    flags = check_assumptions(cert)
    bad = [k for k, ok in flags.items() if not ok]
    if bad:
        raise HarnessError(f"{problem.name}: assumptions fail at the KKT point: {', '.join(bad)}")
    return active_partition(problem, cert)


def _check_increasing(omegas: Sequence[float]):
    if len(omegas) == 0:
        raise HarnessError("empty omega grid")
    if any(b <= a for a, b in zip(omegas, omegas[1:])):
        raise HarnessError("omega grid must be strictly increasing")


def omega_sweep(problem: ProblemSpec, kkt: Optional[KKTGuess], hp_base: HyperParams,
                omegas: Sequence[float], paired_init: Optional[PrimalDualState] = None,
                paired_steps: int = 0) -> list[SweepRow]:
    """J_OG spectrum per omega, with c = omega.

    With ``paired_init`` each row also runs lag_gd_oa for ``paired_steps``
    and counts constraint sign changes.
    """
    _check_increasing(omegas)
    part = certified_partition(problem, kkt)
    rows = []
    for w in omegas:
        hp = replace(hp_base, omega=float(w), c=float(w) if w > 0 else hp_base.c)
        rep = report_OG(part, hp)
        changes = None
        if paired_init is not None and paired_steps > 0:
            states = solvers.iterate(problem, "lag_gd_oa", paired_init, hp, paired_steps)
            changes = oscillation_metrics(problem, states)["sign_changes"]
        rows.append(SweepRow(float(w), rep.spectral_radius, rep.max_abs_imag, rep.condition_number,
                             rep.is_lssp, changes))
    return rows


def default_eta_grid(start: float = 0.1, stop: float = 1e-4) -> list[float]:
    out, eta = [], start
    while eta >= stop:
        out.append(eta)
        eta /= 2.0
    return out


def monotonic_inclusion_check(problem: ProblemSpec, kkt: Optional[KKTGuess], omegas: Sequence[float],
                              eta_grid: Optional[Sequence[float]] = None) -> dict:
    """Per omega, whether some step size on the grid makes the KKT point an
    LSSP of optimistic ascent; plus whether that set is an up-set of the grid."""
    _check_increasing(omegas)
    grid = default_eta_grid() if eta_grid is None else list(eta_grid)
    if not grid:
        raise HarnessError("empty step-size grid")
    part = certified_partition(problem, kkt)
    verdicts = []
    for w in omegas:
        found = None
        for eta in grid:
            if report_OG(part, HyperParams(eta, eta, max(float(w), 1e-12), float(w))).is_lssp:
                found = eta
                break
        verdicts.append({"omega": float(w), "stabilizable": found is not None, "eta": found})
    flags = [v["stabilizable"] for v in verdicts]
    upset = all(b or not a for a, b in zip(flags, flags[1:]))
    return {"verdicts": verdicts, "is_upset": upset}


def negative_optimism_check(problem: ProblemSpec, kkt: Optional[KKTGuess], hp_base: HyperParams,
                            omega_neg: float) -> StabilityReport:
    if not omega_neg < 0:
        raise HarnessError("negative_optimism_check needs omega < 0")
    part = certified_partition(problem, kkt)
    return report_OG(part, replace(hp_base, omega=float(omega_neg)))


def destabilizing_omega(partition: ActivePartition) -> float:
    """``-(lambda_min(A) + 1) / lambda_min(BB')``; NaN without constraint rows."""
    if partition.p == 0:
        return math.nan
    a = float(np.linalg.eigvalsh(partition.A_mat).min())
    b = float(np.linalg.eigvalsh(partition.B_mat @ partition.B_mat.T).min())
    return -(a + 1.0) / b


# --- rates --------------------------------------------------------------------


def estimate_linear_rate(states: Sequence[PrimalDualState] | Trajectory, target,
                         tail_fraction: float = 0.25, window: tuple[float, float] = (1e-10, 1e-3)) -> float:
    """Geometric-mean per-step contraction of ``|(x, lambda, mu)_t - target|``.

    Only steps whose error lies inside ``window`` are used, and of those the
    last ``tail_fraction`` (at least two points).
    """
    states = states.states if isinstance(states, Trajectory) else list(states)
    target = np.asarray(target, dtype=float)
    lo, hi = window
    idx, errs = [], []
    for t, s in enumerate(states):
        v = s.vector()
        if not np.all(np.isfinite(v)):
            break
        e = float(np.linalg.norm(v - target))
        if lo <= e <= hi:
            idx.append(t)
            errs.append(e)
    if len(idx) < 2:
        raise NoConvergentTail(f"{len(idx)} iterate(s) with error in [{lo:g}, {hi:g}]")
    k = max(2, int(math.ceil(len(idx) * tail_fraction)))
    t0, t1 = idx[-k], idx[-1]
    e0, e1 = errs[-k], errs[-1]
    if t1 == t0 or e0 == 0.0:
        raise NoConvergentTail("degenerate error window")
    return float((e1 / e0) ** (1.0 / (t1 - t0)))


def kkt_vector(guess: KKTGuess) -> np.ndarray:
    return np.concatenate([guess.x_star, guess.lambda_star, guess.mu_star])


def spectral_pair(problem: ProblemSpec, hp: HyperParams, kkt: Optional[KKTGuess] = None):
    """(rho(J_AL), rho(J_OG)) at the problem's KKT point."""
    an = analyze(problem, hp, kkt)
    return an.al.spectral_radius, an.og.spectral_radius
