"""Constrained problems ``min f(x) s.t. g(x) <= 0, h(x) = 0`` and the test catalog."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from . import exprcore


class ProblemError(ValueError):
    pass


class ScalarMap:
    """A twice-differentiable map R^d -> R."""

    label: str = ""

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class AnalyticMap(ScalarMap):
    """Hand-coded value/gradient/Hessian."""

    def __init__(self, value: Callable, gradient: Callable, hessian: Callable, label: str = ""):
        self._value = value
        self._gradient = gradient
        self._hessian = hessian
        self.label = label

    def value(self, x):
        return float(self._value(x))

    def gradient(self, x):
        return np.asarray(self._gradient(x), dtype=float)

    def hessian(self, x):
        return np.asarray(self._hessian(x), dtype=float)

    def __repr__(self):
        return f"AnalyticMap({self.label!r})"


class ExprMap(ScalarMap):
    """Map backed by a parsed expression, differentiated in forward mode."""

    def __init__(self, tree: exprcore.ExprTree):
        self.tree = tree
        self.label = tree.text or str(tree)

    def value(self, x):
        return exprcore.evaluate(self.tree, x)

    def gradient(self, x):
        return exprcore.eval_order2(self.tree, x).gradient

    def hessian(self, x):
        return exprcore.eval_order2(self.tree, x).hessian

    def __repr__(self):
        return f"ExprMap({self.label!r})"


@dataclass(frozen=True)
class KKTGuess:
    x_star: np.ndarray
    lambda_star: np.ndarray
    mu_star: np.ndarray
    note: str = ""

    def __post_init__(self):
        for name in ("x_star", "lambda_star", "mu_star"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))
        if np.any(self.lambda_star < 0):
            raise ProblemError("lambda_star must be nonnegative")


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    d: int
    objective: ScalarMap
    ineq: tuple[ScalarMap, ...] = ()
    eq: tuple[ScalarMap, ...] = ()
    known_kkt: tuple[KKTGuess, ...] = ()
    # expression text of every map, when known (catalog cross-checks use it)
    expressions: Mapping[str, object] = field(default_factory=dict, compare=False)
    # optional stacked affine forms (matrix, offset) of g and h; when present
    # they replace the per-map loop in g/h/jac_g/jac_h
    affine_ineq: Optional[tuple[np.ndarray, np.ndarray]] = field(default=None, compare=False, repr=False)
    affine_eq: Optional[tuple[np.ndarray, np.ndarray]] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        # sizes are read on every solver step
        object.__setattr__(self, "m", len(self.ineq))
        object.__setattr__(self, "n", len(self.eq))

    def point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.d:
            raise ProblemError(f"{self.name}: point has length {x.shape[0]}, expected {self.d}")
        return x

    def maps(self):
        """(label, map) pairs for f, g_1..g_m, h_1..h_n."""
        yield "f", self.objective
        for i, gi in enumerate(self.ineq, 1):
            yield f"g{i}", gi
        for j, hj in enumerate(self.eq, 1):
            yield f"h{j}", hj

    def f(self, x) -> float:
        return self.objective.value(x)

    def g(self, x) -> np.ndarray:
        if not self.ineq:
            return np.zeros(0)
        if self.affine_ineq is not None:
            return self.affine_ineq[0] @ x + self.affine_ineq[1]
        return np.array([gi.value(x) for gi in self.ineq], dtype=float)

    def h(self, x) -> np.ndarray:
        if not self.eq:
            return np.zeros(0)
        if self.affine_eq is not None:
            return self.affine_eq[0] @ x + self.affine_eq[1]
        return np.array([hj.value(x) for hj in self.eq], dtype=float)

    def grad_f(self, x) -> np.ndarray:
        return self.objective.gradient(x)

    def jac_g(self, x) -> np.ndarray:
        if not self.ineq:
            return np.zeros((0, self.d))
        if self.affine_ineq is not None:
            return self.affine_ineq[0]
        return np.array([gi.gradient(x) for gi in self.ineq])

    def jac_h(self, x) -> np.ndarray:
        if not self.eq:
            return np.zeros((0, self.d))
        if self.affine_eq is not None:
            return self.affine_eq[0]
        return np.array([hj.gradient(x) for hj in self.eq])

    def hess_f(self, x) -> np.ndarray:
        return self.objective.hessian(x)

    def hess_g(self, x) -> np.ndarray:
        return np.array([gi.hessian(x) for gi in self.ineq]).reshape(self.m, self.d, self.d)

    def hess_h(self, x) -> np.ndarray:
        return np.array([hj.hessian(x) for hj in self.eq]).reshape(self.n, self.d, self.d)


def evaluate_all(problem: ProblemSpec, x) -> tuple[float, np.ndarray, np.ndarray]:
    """Return ``(f(x), g(x), h(x))``."""
    x = problem.point(x)
    return problem.f(x), problem.g(x), problem.h(x)


# --- catalog ------------------------------------------------------------------


def _affine(coef: Sequence[float], const: float, label: str) -> AnalyticMap:
    a = np.asarray(coef, dtype=float)
    d = a.shape[0]
    return AnalyticMap(
        lambda x: a @ x + const,
        lambda x: a.copy(),
        lambda x: np.zeros((d, d)),
        label,
    )


def _quadratic(Q: Sequence[Sequence[float]], b: Sequence[float], const: float, label: str) -> AnalyticMap:
    """0.5 x'Qx + b'x + const."""
    Q = np.asarray(Q, dtype=float)
    b = np.asarray(b, dtype=float)
    return AnalyticMap(
        lambda x: 0.5 * x @ Q @ x + b @ x + const,
        lambda x: Q @ x + b,
        lambda x: Q.copy(),
        label,
    )


def _stack(rows):
    if not rows:
        return None
    A = np.array([r[0] for r in rows], dtype=float)
    b = np.array([r[1] for r in rows], dtype=float)
    A.flags.writeable = False
    b.flags.writeable = False
    return A, b


def _catalog_problem(name, d, objective, f_text, ineq=(), eq=(), kkt=None):
    """``ineq``/``eq`` hold ``(coef, const, text)`` triples of affine constraints."""
    return ProblemSpec(
        name, d, objective,
        ineq=tuple(_affine(a, b, t) for a, b, t in ineq),
        eq=tuple(_affine(a, b, t) for a, b, t in eq),
        known_kkt=(kkt,),
        expressions={"f": f_text, "g": [t for *_, t in ineq], "h": [t for *_, t in eq]},
        affine_ineq=_stack(ineq),
        affine_eq=_stack(eq),
    )


def _qp_eq():
    return _catalog_problem(
        "QP-EQ", 2, _quadratic([[1, 0], [0, 2]], [0, 0], 0.0, "0.5*(x1^2+2*x2^2)"), "0.5*(x1^2 + 2*x2^2)",
        eq=[([1, 1], -1.0, "x1 + x2 - 1")],
        # 2/3 and -2/3 rounded to nearest double
        kkt=KKTGuess([2 / 3, 1 / 3], [], [-2 / 3], "x=(2/3,1/3), mu=-2/3 from Qx = -mu*1, x1+x2=1"),
    )


def _osc_eq():
    return _catalog_problem(
        "OSC-EQ", 1, _quadratic([[1]], [0], 0.0, "0.5*x1^2"), "0.5*x1^2",
        eq=[([1], -1.0, "x1 - 1")],
        kkt=KKTGuess([1.0], [], [-1.0], "x + mu = 0 at x = 1"),
    )


def _nc_eq():
    return _catalog_problem(
        "NC-EQ", 1, _quadratic([[-2]], [0], 0.0, "-x1^2"), "-x1^2",
        eq=[([1], -1.0, "x1 - 1")],
        kkt=KKTGuess([1.0], [], [2.0], "-2x + mu = 0 at x = 1; Lagrangian concave in x"),
    )


def _ineq_act():
    return _catalog_problem(
        "INEQ-ACT", 1, _quadratic([[1]], [-2], 2.0, "0.5*(x1-2)^2"), "0.5*(x1 - 2)^2",
        ineq=[([1], -1.0, "x1 - 1")],
        kkt=KKTGuess([1.0], [1.0], [], "(x-2) + lambda = 0 at x = 1"),
    )


def _ineq_inact():
    return _catalog_problem(
        "INEQ-INACT", 1, _quadratic([[1]], [0], 0.0, "0.5*x1^2"), "0.5*x1^2",
        ineq=[([1], -1.0, "x1 - 1")],
        kkt=KKTGuess([0.0], [0.0], [], "unconstrained minimum is strictly feasible"),
    )


def _mixed_2():
    return _catalog_problem(
        "MIXED-2", 2, _quadratic([[1, 0], [0, 1]], [-2, 0], 2.0, "0.5*((x1-2)^2+x2^2)"),
        "0.5*((x1 - 2)^2 + x2^2)",
        ineq=[([1, 0], -1.0, "x1 - 1"), ([0, 1], -5.0, "x2 - 5")],
        kkt=KKTGuess([1.0, 0.0], [1.0, 0.0], [], "g1 active with lambda1=1, g2 inactive"),
    )


_CATALOG = {
    "QP-EQ": _qp_eq,
    "OSC-EQ": _osc_eq,
    "NC-EQ": _nc_eq,
    "INEQ-ACT": _ineq_act,
    "INEQ-INACT": _ineq_inact,
    "MIXED-2": _mixed_2,
}

CATALOG_IDS = tuple(_CATALOG)
EQUALITY_IDS = ("QP-EQ", "OSC-EQ", "NC-EQ")


def builtin(name: str) -> ProblemSpec:
    """Catalog problem with hand-coded derivatives and its known KKT point."""
    try:
        return _CATALOG[name.upper()]()
    except KeyError:
        raise ProblemError(f"unknown catalog id {name!r}; expected one of {', '.join(CATALOG_IDS)}") from None


def _as_list(value) -> list[str]:
    if value is None:
        return []
    if isinstance(value, str):
        return [s.strip() for s in value.split(";") if s.strip()]
    return [str(s) for s in value]


def from_expressions(name: str, d: int, f: str, g=(), h=(), known_kkt=()) -> ProblemSpec:
    """Build a problem whose maps are parsed expressions over ``x1..xd``."""
    g, h = _as_list(g), _as_list(h)
    return ProblemSpec(
        name, d,
        ExprMap(exprcore.parse_expression(f, d)),
        ineq=tuple(ExprMap(exprcore.parse_expression(t, d)) for t in g),
        eq=tuple(ExprMap(exprcore.parse_expression(t, d)) for t in h),
        known_kkt=tuple(known_kkt),
        expressions={"f": f, "g": g, "h": h},
    )


def expression_twin(problem: ProblemSpec) -> ProblemSpec:
    """The same problem rebuilt from its expression text (forward-mode derivatives)."""
    e = problem.expressions
    if not e:
        raise ProblemError(f"{problem.name} carries no expression text")
    return from_expressions(problem.name + "/expr", problem.d, e["f"], e["g"], e["h"], problem.known_kkt)


def from_config(config: Mapping[str, object]) -> ProblemSpec:
    """Problem from a config section.

    Either ``name`` naming a catalog entry, or ``d`` and ``f`` plus optional
    ``g``/``h`` (lists, or strings separated by ``;``).
    """
    if "f" not in config:
        if "name" in config:
            return builtin(str(config["name"]))
        raise ProblemError("problem config needs 'name' or 'd' and 'f'")
    if "d" not in config:
        raise ProblemError("problem config with expressions needs 'd'")
    try:
        d = int(config["d"])
    except (TypeError, ValueError):
        raise ProblemError(f"d must be an integer, got {config['d']!r}") from None
    if d < 1:
        raise ProblemError("d must be >= 1")
    return from_expressions(str(config.get("name", "custom")), d, str(config["f"]),
                            config.get("g"), config.get("h"))


# --- derivative checks --------------------------------------------------------


@dataclass
class DerivativeCheck:
    label: str
    grad_error: float
    hess_error: float


@dataclass
class DerivativeReport:
    problem: str
    x: np.ndarray
    fd_step: float
    entries: list[DerivativeCheck]

    @property
    def max_grad_error(self) -> float:
        return max((e.grad_error for e in self.entries), default=0.0)

    @property
    def max_hess_error(self) -> float:
        return max((e.hess_error for e in self.entries), default=0.0)

    def passed(self, tol: float = 1e-6) -> bool:
        return self.max_grad_error <= tol and self.max_hess_error <= tol

    def as_dict(self) -> dict:
        return {
            "problem": self.problem,
            "x": self.x.tolist(),
            "fd_step": self.fd_step,
            "entries": [{"label": e.label, "grad_error": e.grad_error, "hess_error": e.hess_error}
                        for e in self.entries],
            "max_grad_error": self.max_grad_error,
            "max_hess_error": self.max_hess_error,
        }


def relative_error(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


def fd_gradient(fun: Callable[[np.ndarray], float], x: np.ndarray, step: float) -> np.ndarray:
    out = np.empty(x.shape[0])
    for k in range(x.shape[0]):
        e = np.zeros_like(x)
        e[k] = step
        out[k] = (fun(x + e) - fun(x - e)) / (2.0 * step)
    return out


def fd_jacobian(fun: Callable[[np.ndarray], np.ndarray], x: np.ndarray, step: float) -> np.ndarray:
    cols = []
    for k in range(x.shape[0]):
        e = np.zeros_like(x)
        e[k] = step
        cols.append((np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2.0 * step))
    return np.stack(cols, axis=-1)


def check_derivatives(problem: ProblemSpec, x, fd_step: float = 1e-5) -> DerivativeReport:
    """Compare analytic first/second derivatives with central differences.

    Gradients are checked against differences of values, Hessians against
    differences of the analytic gradient.
    """
    if fd_step <= 0:
        raise ValueError("fd_step must be positive")
    x = problem.point(x)
    entries = []
    for label, fn in problem.maps():
        grad_fd = fd_gradient(fn.value, x, fd_step)
        hess_fd = fd_jacobian(fn.gradient, x, fd_step)
        entries.append(DerivativeCheck(
            label,
            relative_error(fn.gradient(x), grad_fd),
            relative_error(fn.hessian(x), hess_fd),
        ))
    return DerivativeReport(problem.name, x, fd_step, entries)
