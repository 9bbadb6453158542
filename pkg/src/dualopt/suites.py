"""Property suites run by ``dualopt verify`` and by the acceptance tests.

Each suite returns a SuiteResult; ``faults`` lets tests sabotage one stage
(currently ``"jacobian"``: perturb one entry of every assembled Jacobian)
to confirm that the affected suite notices.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional

import numpy as np

from . import exprcore, functionals, harness, problems, solvers, stability
from .problems import CATALOG_IDS, EQUALITY_IDS
from .solvers import HyperParams


@dataclass
class SuiteResult:
    name: str
    passed: bool
    summary: str
    details: dict = field(default_factory=dict)
    elapsed: float = 0.0

    def as_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "summary": self.summary, "details": self.details}


@dataclass
class Context:
    seed: int = 0
    faults: frozenset = frozenset()

    def rng(self, salt: int = 0) -> np.random.Generator:
        return np.random.default_rng([self.seed, salt])


def _catalog():
    return [problems.builtin(name) for name in CATALOG_IDS]


def _maybe_perturb(J: np.ndarray, ctx: Context) -> np.ndarray:
    if "jacobian" in ctx.faults:
        J = J.copy()
        J[0, 0] += 1e-3
    return J


# --- exprcore -----------------------------------------------------------------


def random_polynomial(rng: np.random.Generator, d: int, depth: int = 3) -> str:
    """Random polynomial expression text over ``x1..xd``."""
    if depth == 0 or rng.random() < 0.25:
        if rng.random() < 0.6:
            return f"x{rng.integers(1, d + 1)}"
        return repr(float(np.round(rng.uniform(-2, 2), 3)))
    kind = rng.integers(0, 5)
    a = random_polynomial(rng, d, depth - 1)
    if kind == 4:
        return f"({a})^{int(rng.integers(2, 4))}"
    if kind == 3:
        return f"-({a})"
    b = random_polynomial(rng, d, depth - 1)
    return f"({a}) {'+-*'[kind]} ({b})"


def suite_exprcore(ctx: Context) -> SuiteResult:
    rng = ctx.rng(1)
    d = 3
    worst_g = worst_h = worst_sym = 0.0
    for _ in range(200):
        tree = exprcore.parse_expression(random_polynomial(rng, d, 4), d)
        x = rng.uniform(-1.5, 1.5, d)
        sv = exprcore.eval_order2(tree, x)
        fd_g = problems.fd_gradient(lambda p: exprcore.evaluate(tree, p), x, 1e-5)
        fd_h = problems.fd_jacobian(lambda p: exprcore.eval_order2(tree, p).gradient, x, 1e-5)
        worst_g = max(worst_g, problems.relative_error(sv.gradient, fd_g))
        worst_h = max(worst_h, problems.relative_error(sv.hessian, fd_h))
        H = sv.hessian
        worst_sym = max(worst_sym, float(np.max(np.abs(H - H.T))) / (1.0 + float(np.max(np.abs(H)))))
    roundtrip = True
    for p in _catalog():
        for text in [p.expressions["f"], *p.expressions["g"], *p.expressions["h"]]:
            t1 = exprcore.parse_expression(text, p.d)
            t2 = exprcore.parse_expression(exprcore.to_text(t1), p.d)
            roundtrip &= t1 == t2 and exprcore.to_text(t2) == exprcore.to_text(t1)
    ok = worst_g <= 1e-6 and worst_h <= 1e-6 and worst_sym <= 1e-12 and roundtrip
    return SuiteResult("exprcore", ok, f"grad {worst_g:.2e}, hess {worst_h:.2e}, sym {worst_sym:.1e}, "
                       f"roundtrip {roundtrip}",
                       {"grad_error": worst_g, "hess_error": worst_h, "symmetry": worst_sym, "roundtrip": roundtrip})


def suite_derivatives(ctx: Context, points: int = 100) -> SuiteResult:
    """Analytic catalog derivatives vs expression forward mode vs central differences."""
    rng = ctx.rng(13)
    worst = {"analytic_vs_expr": 0.0, "analytic_vs_fd": 0.0, "expr_vs_fd": 0.0}
    for p in _catalog():
        twin = problems.expression_twin(p)
        pairs = list(zip(dict(p.maps()).values(), dict(twin.maps()).values()))
        for _ in range(points):
            x = rng.uniform(-3, 3, p.d)
            for ana, ex in pairs:
                ga, ha = ana.gradient(x), ana.hessian(x)
                ge, he = ex.gradient(x), ex.hessian(x)
                worst["analytic_vs_expr"] = max(worst["analytic_vs_expr"],
                                                problems.relative_error(ga, ge), problems.relative_error(ha, he),
                                                abs(ana.value(x) - ex.value(x)) / max(1.0, abs(ana.value(x))))
            for key, prob in (("analytic_vs_fd", p), ("expr_vs_fd", twin)):
                rep = problems.check_derivatives(prob, x, 1e-5)
                worst[key] = max(worst[key], rep.max_grad_error, rep.max_hess_error)
    ok = all(v <= 1e-6 for v in worst.values())
    return SuiteResult("derivatives", ok, ", ".join(f"{k} {v:.2e}" for k, v in worst.items()), worst)


# --- functionals --------------------------------------------------------------


def _random_state(p, rng, c):
    x = rng.uniform(-2, 2, p.d)
    lam = rng.uniform(0, 2, p.m) * (rng.random(p.m) < 0.7)
    mu = rng.uniform(-2, 2, p.n)
    return x, lam, mu


def suite_functionals(ctx: Context, states: int = 100) -> SuiteResult:
    rng = ctx.rng(2)
    worst_id = worst_g = worst_h = 0.0
    for p in _catalog():
        for _ in range(states):
            c = float(rng.choice([0.5, 1.0, 3.0]))
            x, lam, mu = _random_state(p, rng, c)
            # keep away from the kink so that differences stay on one branch
            if p.m and np.min(np.abs(lam + c * p.g(x))) < 1e-3:
                continue
            gr = functionals.aug_lagrangian_grad(p, x, lam, mu, c)
            pw = functionals.grad_lambda_piecewise(p.g(x), lam, c)
            worst_id = max(worst_id, float(np.max(np.abs(gr.grad_lambda - pw), initial=0.0)))
            fd = problems.fd_gradient(lambda z: functionals.aug_lagrangian_value(p, z, lam, mu, c), x, 1e-5)
            worst_g = max(worst_g, problems.relative_error(gr.grad_x, fd))
            H = functionals.aug_lagrangian_hessian(p, x, lam, mu, c).assemble()
            v0 = np.concatenate([x, lam, mu])

            def full_grad(v):
                xx, ll, mm = v[:p.d], v[p.d:p.d + p.m], v[p.d + p.m:]
                gg = functionals.aug_lagrangian_grad(p, xx, ll, mm, c)
                return np.concatenate([gg.grad_x, gg.grad_lambda, gg.grad_mu])

            worst_h = max(worst_h, problems.relative_error(H, problems.fd_jacobian(full_grad, v0, 1e-6)))
    limit = 0.0
    for p in _catalog():
        x = p.known_kkt[0].x_star if p.m == 0 else np.zeros(p.d)
        if p.m and np.any(p.g(x) >= 0):
            continue
        gr = functionals.aug_lagrangian_grad(p, x, np.zeros(p.m), np.zeros(p.n), 1e-8)
        limit = max(limit, float(np.max(np.abs(gr.grad_x - p.grad_f(x)))))
    ok = worst_id <= 1e-14 and worst_g <= 1e-6 and worst_h <= 1e-5 and limit <= 1e-6
    return SuiteResult("functionals", ok, f"identity {worst_id:.1e}, grad-FD {worst_g:.2e}, "
                       f"hess-FD {worst_h:.2e}, c->0 {limit:.1e}",
                       {"identity": worst_id, "grad_fd": worst_g, "hess_fd": worst_h, "limit": limit})


# --- fixed points -------------------------------------------------------------


def _start(p, guess=None):
    g = guess or p.known_kkt[0]
    return solvers.initial_state(p, g.x_star, g.lambda_star, g.mu_star)


def suite_fixed_points(ctx: Context) -> SuiteResult:
    hp = HyperParams(0.1, 0.1, 1.0, 1.0)
    worst_move = 0.0
    skipped = []
    for p in _catalog():
        s0 = _start(p)
        for rule_id, rule in solvers.RULES.items():
            if rule_id == "al_gd_oa" and p.m:
                skipped.append(f"{p.name}/{rule_id}")
                continue
            s1 = rule(p, s0, hp)
            worst_move = max(worst_move, float(np.max(np.abs(s1.vector() - s0.vector()))))
    # converse: run to a numerical fixed point and check the residual there
    worst_res = 0.0
    converged = 0
    hp_run = HyperParams(0.1, 0.1, 3.0, 3.0)
    for p in _catalog():
        for rule_id in solvers.RULES:
            if rule_id == "al_gd_oa" and p.m:
                continue
            if rule_id == "lag_gda" and p.name == "NC-EQ":
                continue
            g = p.known_kkt[0]
            init = solvers.initial_state(p, g.x_star + 0.01, g.lambda_star + 0.01, g.mu_star + 0.01)
            states = solvers.iterate(p, rule_id, init, hp_run, 3000)
            for a, b in zip(states, states[1:]):
                if np.max(np.abs(b.vector() - a.vector())) <= 1e-14:
                    converged += 1
                    worst_res = max(worst_res, stability.kkt_residual(p, b.x, b.lam, b.mu))
                    break
    ok = worst_move <= 1e-14 and worst_res <= 1e-10 and converged > 0
    return SuiteResult("fixed_points", ok, f"max move at KKT {worst_move:.1e}; {converged} runs reached "
                       f"a fixed point, max residual {worst_res:.1e}",
                       {"max_move": worst_move, "max_residual": worst_res, "converged_runs": converged,
                        "skipped": skipped})


# --- equivalences -------------------------------------------------------------


def suite_thm32(ctx: Context, steps: int = 2000) -> SuiteResult:
    rows = []
    for name in EQUALITY_IDS:
        p = problems.builtin(name)
        for c in (0.5, 2.0, 10.0):
            for ed in (0.1 * c, c):
                r = harness.run_equivalence_equality(p, np.zeros(p.d), np.zeros(p.n), HyperParams(0.1, ed, c, c),
                                                     steps)
                finite = np.isfinite(r.primal_gaps) & np.isfinite(np.append(r.dual_gaps, 0.0))
                n_fin = int(np.argmin(finite)) if not finite.all() else len(finite)
                prefix = float(np.max(r.primal_gaps[:n_fin], initial=0.0))
                rows.append({"problem": name, "c": c, "eta_dual": ed, "primal": r.max_primal_gap,
                             "dual": r.max_dual_gap, "finite_steps": n_fin - 1, "prefix_primal": prefix,
                             "ok": r.max_primal_gap <= 1e-9 and r.max_dual_gap <= 1e-9})
    bad = [r for r in rows if not r["ok"]]
    worst = max((r["prefix_primal"] for r in rows), default=0.0)
    summary = f"{len(rows) - len(bad)}/{len(rows)} configs within 1e-9"
    if bad:
        summary += "; failing: " + ", ".join(
            f"{r['problem']} c={r['c']:g} ed={r['eta_dual']:g} (finite for {r['finite_steps']} steps, "
            f"gap over finite prefix {r['prefix_primal']:.1e})" for r in bad)
    else:
        summary += f"; worst primal gap {worst:.1e}"
    return SuiteResult("thm32", not bad, summary, {"rows": rows})


def suite_compounding(ctx: Context, steps: int = 2000) -> SuiteResult:
    rows = []
    for name in ("NC-EQ", "QP-EQ"):
        p = problems.builtin(name)
        r = harness.run_compounding_check(p, np.zeros(p.d), np.zeros(p.n), 1.0, 2.0, 0.1, steps)
        z = harness.run_compounding_check(p, np.zeros(p.d), np.zeros(p.n), 1.0, 0.0, 0.1, 200)
        a = solvers.iterate(p, "al_gd_oa", _start(p), HyperParams(0.1, 0.1, 1.0, 0.0), 200)
        b = solvers.iterate(p, "al_gda", _start(p), HyperParams(0.1, 0.1, 1.0), 200)
        bitwise = all(np.array_equal(u.x, v.x) and np.array_equal(u.mu, v.mu) for u, v in zip(a, b))
        rows.append({"problem": name, "gap": r.max_primal_gap, "dual_gap": r.max_dual_gap,
                     "omega0_gap": z.max_primal_gap, "omega0_bitwise": bitwise})
    ok = all(r["gap"] <= 1e-9 and r["omega0_bitwise"] for r in rows)
    return SuiteResult("compounding", ok, ", ".join(f"{r['problem']} gap {r['gap']:.1e}" for r in rows),
                       {"rows": rows})


# --- spectra ------------------------------------------------------------------

RELATION_PROBLEMS = ("INEQ-ACT", "INEQ-INACT", "MIXED-2", "NC-EQ")


def suite_spectral_relation(ctx: Context) -> SuiteResult:
    rows = []
    for name in RELATION_PROBLEMS:
        p = problems.builtin(name)
        for c in (1.0, 3.0):
            for eta in (0.05, 0.1):
                an = stability.analyze(p, HyperParams(eta, eta, c, c))
                rel = an.relation
                rows.append({"problem": name, "c": c, "eta": eta, **rel})
    act = stability.analyze(problems.builtin("INEQ-ACT"), HyperParams(0.1, 0.1, 1.0, 1.0))
    rho = act.al.spectral_radius
    worst = max(r["gap"] for r in rows)
    ok = worst <= 1e-8 and abs(rho - 0.9270156) <= 1e-6
    return SuiteResult("spectral_relation", ok, f"max gap {worst:.1e}; rho(J_AL) INEQ-ACT = {rho:.7f}",
                       {"rows": rows, "rho_ineq_act": rho})


def _hp_grid():
    for c in (1.0, 3.0):
        for eta in (0.05, 0.1):
            for w in (c, 0.5 * c, 2.0 * c):
                yield HyperParams(eta, eta, c, w)


def suite_charpoly(ctx: Context) -> SuiteResult:
    worst = 0.0
    counts_ok = True
    checked = 0
    for p in _catalog():
        part = stability.active_partition(p, stability.certificate_from_guess(p))
        d = part.d
        for hp in _hp_grid():
            for fam, assemble, chi in (("AL", stability.assemble_J_AL, stability.char_poly_AL),
                                       ("OG", stability.assemble_J_OG, stability.char_poly_OG)):
                J = _maybe_perturb(assemble(part, None, hp), ctx)
                rep = stability.eigen_analysis(J, stability._trivial_record(part, None, hp, fam))
                for z in rep.eigenvalues:
                    worst = max(worst, abs(chi(z, part, None, hp)) / (1.0 + abs(z)) ** (2 * d))
                    checked += 1
                counts_ok &= stability.trivial_count_ok(rep)
    ok = worst <= 1e-8 and counts_ok
    return SuiteResult("charpoly", ok, f"{checked} eigenvalues, max scaled |chi| {worst:.1e}, "
                       f"trivial counts {'exact' if counts_ok else 'WRONG'}",
                       {"max_scaled_chi": worst, "trivial_counts_ok": counts_ok, "eigenvalues_checked": checked})


def suite_sigma_one(ctx: Context) -> SuiteResult:
    closest = math.inf
    for p in _catalog():
        part = stability.active_partition(p, stability.certificate_from_guess(p))
        for hp in _hp_grid():
            for J in (stability.assemble_J_AL(part, None, hp), stability.assemble_J_OG(part, None, hp)):
                eig = np.linalg.eigvals(_maybe_perturb(J, ctx))
                closest = min(closest, float(np.min(np.abs(eig - 1.0))))
    return SuiteResult("sigma_one", closest > 1e-8, f"closest eigenvalue to 1 at distance {closest:.2e}",
                       {"min_distance": closest})


def suite_complementarity(ctx: Context, instances: int = 500) -> SuiteResult:
    """lambda = [lambda + k g]_+ iff g <= 0 and lambda*g = 0, on exactly representable data."""
    rng = ctx.rng(5)
    g_vals = np.array([-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0])
    l_vals = np.array([0.0, 0.5, 1.0, 3.0])
    k_vals = np.array([0.25, 0.5, 1.0, 2.0, 10.0])
    counter = 0
    seen = {True: 0, False: 0}
    for _ in range(instances):
        size = int(rng.integers(1, 5))
        # bias towards complementary pairs so both verdicts occur often
        lam = rng.choice(l_vals, size)
        g = rng.choice(g_vals, size)
        mask = rng.random(size) < 0.6
        g = np.where(mask & (lam > 0), 0.0, g)
        g = np.where(mask & (lam == 0), -np.abs(g), g)
        k = float(rng.choice(k_vals))
        lhs = stability.is_projection_fixed_point(lam, g, k)
        rhs = stability.feasible_and_complementary(lam, g)
        seen[rhs] += 1
        counter += lhs != rhs
    ok = counter == 0 and seen[True] > 0 and seen[False] > 0
    return SuiteResult("complementarity", ok, f"{counter} counterexamples in {instances} instances "
                       f"({seen[True]} satisfying, {seen[False]} violating)",
                       {"counterexamples": counter, "satisfying": seen[True], "violating": seen[False]})


def suite_threshold(ctx: Context) -> SuiteResult:
    vals = {}
    for name in ("NC-EQ", "INEQ-ACT"):
        p = problems.builtin(name)
        vals[name] = stability.convexification_threshold(
            stability.active_partition(p, stability.certificate_from_guess(p)))
    sosc_fail = stability.convexification_threshold(stability.partition_from_matrices([[-1.0]], np.zeros((1, 1))))
    ok = abs(vals["NC-EQ"] - 2.0) <= 1e-6 and vals["INEQ-ACT"] == 0.0 and sosc_fail == math.inf
    return SuiteResult("threshold", ok, f"NC-EQ {vals['NC-EQ']:.9f}, INEQ-ACT {vals['INEQ-ACT']:g}, "
                       f"A=-1,B=0 {sosc_fail}", {**vals, "sosc_violated": sosc_fail})


# --- dynamics -----------------------------------------------------------------


def _perturbed_start(p, radius: float):
    g = p.known_kkt[0]
    v = np.concatenate([g.x_star, g.lambda_star, g.mu_star])
    direction = np.ones_like(v) / math.sqrt(v.size)
    w = v + radius * direction
    return solvers.initial_state(p, w[:p.d], w[p.d:p.d + p.m], w[p.d + p.m:])


def _converges(p, rule_id, init, hp, steps, tol) -> bool:
    try:
        tr = solvers.run(p, rule_id, init, hp, steps, tol)
    except solvers.DivergenceDetected:
        return False
    return tr.stop_reason == "converged"


def suite_nonconvex(ctx: Context) -> SuiteResult:
    p = problems.builtin("NC-EQ")
    init = _perturbed_start(p, 1e-2)
    target = np.array([1.0, 2.0])
    d0 = float(np.linalg.norm(init.vector() - target))
    try:
        tr = solvers.run(p, "lag_gda", init, HyperParams(0.1, 0.1), 500)
        d_end = float(np.linalg.norm(tr.final.vector() - target))
        gda = f"distance {d0:.1e} -> {d_end:.1e}"
        gda_fails = d_end > d0 and tr.stop_reason != "converged"
    except solvers.DivergenceDetected as e:
        gda, gda_fails = f"diverged at t={e.t}", True
    hp = HyperParams(0.1, 0.1, 3.0, 3.0)
    al_ok = _converges(p, "al_gda", init, hp, 5000, 1e-8)
    og_ok = _converges(p, "lag_gd_oa", init, hp, 5000, 1e-8)
    ok = gda_fails and al_ok and og_ok
    return SuiteResult("nonconvex", ok, f"lag_gda {gda}; al_gda converged {al_ok}; lag_gd_oa converged {og_ok}",
                       {"lag_gda_fails": gda_fails, "al_gda": al_ok, "lag_gd_oa": og_ok})


def suite_lssp(ctx: Context) -> SuiteResult:
    """LSSP verdict agrees with convergence from a 1e-3 perturbation."""
    rows = []
    for p in _catalog():
        for c in (1.0, 3.0):
            hp = HyperParams(0.1, 0.1, c, c)
            an = stability.analyze(p, hp)
            init = _perturbed_start(p, 1e-3)
            for rule_id, rep in (("al_gda", an.al), ("lag_gd_oa", an.og)):
                if not rep.is_lssp and rep.spectral_radius <= 1 + 1e-6:
                    continue
                conv = _converges(p, rule_id, init, hp, 5000, 1e-8)
                rows.append({"problem": p.name, "c": c, "rule": rule_id, "rho": rep.spectral_radius,
                             "is_lssp": rep.is_lssp, "converged": conv, "ok": conv == rep.is_lssp})
    bad = [r for r in rows if not r["ok"]]
    return SuiteResult("lssp", not bad, f"{len(rows) - len(bad)}/{len(rows)} verdicts match dynamics "
                       f"({sum(not r['is_lssp'] for r in rows)} unstable cases)", {"rows": rows})


def rate_cases():
    """(label, problem, rule, init, hp, target, jacobian family)."""
    act = problems.builtin("INEQ-ACT")
    qp = problems.builtin("QP-EQ")
    yield ("INEQ-ACT al_gda", act, "al_gda", solvers.initial_state(act, [1.001], [1.0]),
           HyperParams(0.1, 0.1, 1.0, 1.0), "AL")
    g = qp.known_kkt[0]
    yield ("QP-EQ lag_gd_oa", qp, "lag_gd_oa", solvers.initial_state(qp, g.x_star + [1e-3, 0.0], None, g.mu_star),
           HyperParams(0.1, 1.0, 1.0, 1.0), "OG")


def suite_rates(ctx: Context) -> SuiteResult:
    rows = []
    for label, p, rule_id, init, hp, fam in rate_cases():
        an = stability.analyze(p, hp)
        rho = (an.al if fam == "AL" else an.og).spectral_radius
        tr = solvers.run(p, rule_id, init, hp, 3000)
        rate = harness.estimate_linear_rate(tr, harness.kkt_vector(p.known_kkt[0]))
        rows.append({"case": label, "rate": rate, "rho": rho, "rel_err": abs(rate - rho) / rho})
    ok = all(r["rel_err"] <= 0.05 for r in rows)
    return SuiteResult("rates", ok, "; ".join(f"{r['case']} rate {r['rate']:.4f} vs rho {r['rho']:.4f}"
                                              for r in rows), {"rows": rows})


DAMPING_GRID = (0.5, 1.0, 2.0, 4.0, 8.0)
IMAG_ZERO = 1e-12


def suite_damping(ctx: Context) -> SuiteResult:
    osc = problems.builtin("OSC-EQ")
    hp = HyperParams(0.1, 0.1)
    init = solvers.initial_state(osc, [0.0])
    rows = harness.omega_sweep(osc, None, hp, DAMPING_GRID, init, 400)
    real_from_2 = all(r.max_abs_imag <= IMAG_ZERO for r in rows if r.omega >= 2.0)
    base = harness.oscillation_metrics(osc, solvers.iterate(osc, "lag_gda", init, hp, 400))["sign_changes"]
    at4 = next(r.sign_changes for r in rows if r.omega == 4.0)
    # weak form on every catalog problem: once real, always real along the grid
    upsets = {}
    for p in _catalog():
        sweep = harness.omega_sweep(p, None, hp, DAMPING_GRID)
        flags = [r.max_abs_imag <= IMAG_ZERO for r in sweep]
        upsets[p.name] = all(b or not a for a, b in zip(flags, flags[1:]))
    ok = real_from_2 and base >= 10 and at4 <= 2 and at4 < base and all(upsets.values())
    return SuiteResult("damping", ok, f"max|Im| by omega {[round(r.max_abs_imag, 6) for r in rows]}; "
                       f"sign changes lag_gda {base} vs omega=4 {at4}",
                       {"rows": [r.as_dict() for r in rows], "baseline_sign_changes": base,
                        "omega4_sign_changes": at4, "upsets": upsets})


def suite_conditioning(ctx: Context) -> SuiteResult:
    hp = HyperParams(0.1, 0.1)
    rows = {}
    for p in _catalog():
        try:
            sweep = harness.omega_sweep(p, None, hp, (1.0, 1e2, 1e4))
        except harness.HarnessError:
            continue  # assumptions fail: outside the claim
        k = [r.condition_number for r in sweep]
        rows[p.name] = {"kappa": k, "ok": k[0] < k[1] < k[2] and k[2] >= 10 * k[0]}
    bad = [n for n, r in rows.items() if not r["ok"]]
    summary = f"{len(rows) - len(bad)}/{len(rows)} problems with growing kappa"
    if bad:
        summary += "; flat: " + ", ".join(f"{n} {rows[n]['kappa']}" for n in bad)
    return SuiteResult("conditioning", not bad, summary, {"rows": rows})


def suite_destabilization(ctx: Context) -> SuiteResult:
    hp = HyperParams(0.1, 0.1)
    rows = {}
    for p in _catalog():
        part = harness.certified_partition(p)
        w = harness.destabilizing_omega(part)
        if math.isnan(w):
            continue  # no active constraint or equality: J_OG does not depend on omega
        rho = stability.report_OG(part, replace(hp, omega=w)).spectral_radius
        rows[p.name] = {"omega": w, "rho": rho}
    ok = all(r["rho"] > 1 for r in rows.values())
    return SuiteResult("destabilization", ok, ", ".join(f"{n} rho {r['rho']:.4f} at omega {r['omega']:g}"
                                                        for n, r in rows.items()), {"rows": rows})


def suite_negative_optimism(ctx: Context) -> SuiteResult:
    act = problems.builtin("INEQ-ACT")
    hp = HyperParams(0.1, 0.1)
    r2 = harness.negative_optimism_check(act, None, hp, -2.0).spectral_radius
    r05 = harness.negative_optimism_check(act, None, hp, -0.5).spectral_radius
    ok = r2 > 1 and r05 < 1
    return SuiteResult("negative_optimism", ok, f"rho at omega=-2 {r2:.4f}, at omega=-0.5 {r05:.4f}",
                       {"rho_minus_2": r2, "rho_minus_half": r05})


def suite_inclusion(ctx: Context) -> SuiteResult:
    nc = harness.monotonic_inclusion_check(problems.builtin("NC-EQ"), None, (1.0, 2.5, 5.0, 10.0))
    act = harness.monotonic_inclusion_check(problems.builtin("INEQ-ACT"), None, (0.5, 1.0, 5.0, 10.0))
    nc_flags = [v["stabilizable"] for v in nc["verdicts"]]
    act_flags = [v["stabilizable"] for v in act["verdicts"]]
    ok = nc_flags == [False, True, True, True] and all(act_flags) and nc["is_upset"] and act["is_upset"]
    return SuiteResult("inclusion", ok, f"NC-EQ {nc_flags}, INEQ-ACT {act_flags}",
                       {"NC-EQ": nc, "INEQ-ACT": act})


def suite_mom(ctx: Context) -> SuiteResult:
    osc, nc = problems.builtin("OSC-EQ"), problems.builtin("NC-EQ")
    tr = solvers.method_of_multipliers(osc, solvers.initial_state(osc, [0.0]), 1.0, 1e-12, 10_000, 30)
    osc_ok = abs(tr.final.mu[0] + 1.0) <= 1e-6
    try:
        solvers.method_of_multipliers(nc, solvers.initial_state(nc, [0.0]), 1.0, 1e-12, 10_000, 30)
        nc1 = False
    except solvers.DivergenceDetected:
        nc1 = True
    tr6 = solvers.method_of_multipliers(nc, solvers.initial_state(nc, [0.0]), 6.0, 1e-12, 10_000, 60)
    nc6 = bool(np.allclose(tr6.final.vector(), [1.0, 2.0], atol=1e-8))
    ok = osc_ok and nc1 and nc6
    return SuiteResult("mom", ok, f"OSC-EQ mu {tr.final.mu[0]:.9f}; NC-EQ c=1 diverges {nc1}; "
                       f"NC-EQ c=6 converges {nc6}", {"osc_mu": float(tr.final.mu[0]), "nc_c1_diverges": nc1,
                                                      "nc_c6_converges": nc6})


SUITES: dict[str, Callable[[Context], SuiteResult]] = {
    "exprcore": suite_exprcore,
    "derivatives": suite_derivatives,
    "functionals": suite_functionals,
    "fixed_points": suite_fixed_points,
    "thm32": suite_thm32,
    "compounding": suite_compounding,
    "spectral_relation": suite_spectral_relation,
    "charpoly": suite_charpoly,
    "sigma_one": suite_sigma_one,
    "complementarity": suite_complementarity,
    "threshold": suite_threshold,
    "nonconvex": suite_nonconvex,
    "lssp": suite_lssp,
    "rates": suite_rates,
    "damping": suite_damping,
    "conditioning": suite_conditioning,
    "destabilization": suite_destabilization,
    "negative_optimism": suite_negative_optimism,
    "inclusion": suite_inclusion,
    "mom": suite_mom,
}


def run_suites(names: Optional[Iterable[str]] = None, seed: int = 0,
               faults: Iterable[str] = ()) -> list[SuiteResult]:
    names = list(SUITES) if names is None else list(names)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite(s): {', '.join(unknown)}")
    ctx = Context(seed, frozenset(faults))
    out = []
    for name in names:
        t0 = time.perf_counter()
        res = SUITES[name](ctx)
        res.elapsed = time.perf_counter() - t0
        out.append(res)
    return out
