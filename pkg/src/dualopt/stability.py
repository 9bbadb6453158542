"""Local stability of KKT points under the AL-GDA and optimistic-ascent iterations.

Both Jacobians act on a reordered state: primal block first, then the
multipliers of active inequalities followed by the equality multipliers,
then the inactive inequality multipliers.  With

    A = grad^2_x L(x*, lambda*, mu*)        B = [grad g_A(x*); grad h(x*)]

the AL-GDA Jacobian over ``(x, lambda_A|mu, lambda_I)`` is

    [ I - ex(A + cB'B)           -ex B'          0           ]
    [ ed B (I - ex(A + cB'B))    I - ex ed BB'   0           ]
    [ 0                          0               (1-ed/c) I  ]

and the optimistic-ascent Jacobian over ``(x_t, x_{t-1}, lambda_A|mu, lambda_I)`` is

    [ I - ex A - ex(ed+w)B'B    ex w B'B   -ex B'   0 ]
    [ I                         0          0        0 ]
    [ (ed+w) B                  -w B       I        0 ]
    [ 0                         0          0        0 ]
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .functionals import lagrangian_grad_x, lagrangian_hessian_x, positive_part
from .problems import KKTGuess, ProblemSpec

TOL_ACT = 1e-8
TOL_STRICT = 1e-8
TOL_LSSP = 1e-9
TRIVIAL_TOL = 1e-9


class StabilityError(ValueError):
    reason = "assumption violated"


class StrictComplementarityViolated(StabilityError):
    reason = "strict complementarity violated"


class AssumptionViolation(StabilityError):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


# --- KKT certification --------------------------------------------------------


def _residual_parts(problem: ProblemSpec, x, lam, mu):
    x = problem.point(x)
    lam = np.asarray(lam, dtype=float).reshape(-1)
    mu = np.asarray(mu, dtype=float).reshape(-1)
    g, h = problem.g(x), problem.h(x)
    stat = lagrangian_grad_x(problem, x, lam, mu)
    return (
        float(np.max(np.abs(stat), initial=0.0)),
        float(np.max(np.abs(h), initial=0.0)),
        float(np.max(positive_part(g), initial=0.0)),
        float(np.max(np.abs(lam * g), initial=0.0)),
        x, lam, mu, g, h,
    )


def kkt_residual(problem: ProblemSpec, x, lam, mu) -> float:
    """max(|grad_x L|_inf, |h|_inf, |[g]_+|_inf, |lambda*g|_inf)."""
    return max(_residual_parts(problem, x, lam, mu)[:4])


@dataclass(frozen=True)
class KKTCertificate:
    x: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    stationarity: float
    norm_h: float
    max_g_plus: float
    complementarity: float
    active: tuple[int, ...]
    inactive: tuple[int, ...]
    strict_margin: float
    licq_min_singular: float
    sosc_min_eig: float
    hessian_x: np.ndarray = field(repr=False)
    active_jacobian: np.ndarray = field(repr=False)

    @property
    def residual(self) -> float:
        return max(self.stationarity, self.norm_h, self.max_g_plus, self.complementarity)


def _null_space(B: np.ndarray, d: int) -> np.ndarray:
    if B.shape[0] == 0:
        return np.eye(d)
    _, s, vt = np.linalg.svd(B)
    cutoff = max(B.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > cutoff))
    return vt[rank:].T


def kkt_certificate(problem: ProblemSpec, x, lam, mu, tol_act: float = TOL_ACT) -> KKTCertificate:
    stat, nh, gp, comp, x, lam, mu, g, h = _residual_parts(problem, x, lam, mu)
    if np.any(lam < 0):
        raise ValueError("lambda must be nonnegative")
    active = tuple(int(i) for i in np.flatnonzero(np.abs(g) <= tol_act))
    inactive = tuple(i for i in range(problem.m) if i not in active)
    margin = float(np.min(np.maximum(lam, -g))) if problem.m else math.inf
    B = np.vstack([problem.jac_g(x)[list(active)], problem.jac_h(x)])
    licq = float(np.linalg.svd(B, compute_uv=False).min()) if B.shape[0] else math.inf
    H = lagrangian_hessian_x(problem, x, lam, mu)
    Z = _null_space(B, problem.d)
    if Z.shape[1] == 0:
        sosc = math.inf  # tangent space is {0}
    else:
        sosc = float(np.linalg.eigvalsh(Z.T @ H @ Z).min())
    return KKTCertificate(x, lam, mu, stat, nh, gp, comp, active, inactive, margin, licq, sosc, H, B)


def certificate_from_guess(problem: ProblemSpec, guess: Optional[KKTGuess] = None,
                           tol_act: float = TOL_ACT) -> KKTCertificate:
    guess = guess if guess is not None else problem.known_kkt[0]
    return kkt_certificate(problem, guess.x_star, guess.lambda_star, guess.mu_star, tol_act)


def check_assumptions(cert: KKTCertificate, tol: float = TOL_STRICT) -> dict[str, bool]:
    return {
        "strict_cs": cert.strict_margin > tol,
        "licq": cert.licq_min_singular > tol,
        "sosc": cert.sosc_min_eig > tol,
    }


# --- partition and Jacobians --------------------------------------------------


@dataclass(frozen=True)
class ActivePartition:
    active: tuple[int, ...]
    inactive: tuple[int, ...]
    A_mat: np.ndarray
    B_mat: np.ndarray
    n_eq: int = 0

    @property
    def d(self) -> int:
        return self.A_mat.shape[0]

    @property
    def p(self) -> int:
        return self.B_mat.shape[0]

    @property
    def m(self) -> int:
        return len(self.active) + len(self.inactive)


def active_partition(problem: ProblemSpec, cert: KKTCertificate, tol: float = TOL_STRICT) -> ActivePartition:
    if not check_assumptions(cert, tol)["strict_cs"]:
        raise StrictComplementarityViolated(
            f"strict complementarity violated (margin {cert.strict_margin!r} <= {tol!r})")
    return ActivePartition(cert.active, cert.inactive, cert.hessian_x.copy(),
                           cert.active_jacobian.copy(), problem.n)


def partition_from_matrices(A, B, inactive_count: int = 0) -> ActivePartition:
    """Partition built directly from ``A`` and ``B`` (B rows treated as active)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(-1, A.shape[0])
    p = B.shape[0]
    return ActivePartition(tuple(range(p)), tuple(range(p, p + inactive_count)), A, B, 0)


def _inactive(partition: ActivePartition, inactive_count: Optional[int]) -> int:
    return len(partition.inactive) if inactive_count is None else int(inactive_count)


def assemble_J_AL(partition: ActivePartition, inactive_count: Optional[int], hp) -> np.ndarray:
    if hp.eta_dual > hp.c:
        raise ValueError("J_AL needs 0 < eta_dual <= c")
    A, B = partition.A_mat, partition.B_mat
    d, p, q = partition.d, partition.p, _inactive(partition, inactive_count)
    ex, ed, c = hp.eta_x, hp.eta_dual, hp.c
    P = np.eye(d) - ex * (A + c * B.T @ B)
    J = np.zeros((d + p + q, d + p + q))
    J[:d, :d] = P
    J[:d, d:d + p] = -ex * B.T
    J[d:d + p, :d] = ed * B @ P
    J[d:d + p, d:d + p] = np.eye(p) - ex * ed * B @ B.T
    J[d + p:, d + p:] = (1.0 - ed / c) * np.eye(q)
    return J


def assemble_J_OG(partition: ActivePartition, inactive_count: Optional[int], hp) -> np.ndarray:
    A, B = partition.A_mat, partition.B_mat
    d, p, q = partition.d, partition.p, _inactive(partition, inactive_count)
    ex, ed, w = hp.eta_x, hp.eta_dual, hp.omega
    BtB = B.T @ B
    J = np.zeros((2 * d + p + q, 2 * d + p + q))
    J[:d, :d] = np.eye(d) - ex * A - ex * (ed + w) * BtB
    J[:d, d:2 * d] = ex * w * BtB
    J[:d, 2 * d:2 * d + p] = -ex * B.T
    J[d:2 * d, :d] = np.eye(d)
    J[2 * d:2 * d + p, :d] = (ed + w) * B
    J[2 * d:2 * d + p, d:2 * d] = -w * B
    J[2 * d:2 * d + p, 2 * d:2 * d + p] = np.eye(p)
    return J


# --- spectra ------------------------------------------------------------------


@dataclass(frozen=True)
class StabilityReport:
    jacobian: np.ndarray
    eigenvalues: tuple[complex, ...]
    spectral_radius: float
    condition_number: float
    trivial_eigs: dict
    is_lssp: bool
    marginal: bool = False
    singular_values: tuple[float, ...] = ()

    @property
    def max_abs_imag(self) -> float:
        return max((abs(z.imag) for z in self.eigenvalues), default=0.0)

    def as_dict(self) -> dict:
        return {
            "eigenvalues": [[z.real, z.imag] for z in self.eigenvalues],
            "spectral_radius": self.spectral_radius,
            "condition_number": self.condition_number,
            "is_lssp": self.is_lssp,
            "marginal": self.marginal,
            "trivial_eigs": self.trivial_eigs,
            "jacobian": self.jacobian.tolist(),
        }


def pseudo_condition_number(s: np.ndarray, n: int) -> float:
    """Largest over smallest nonzero singular value (rank cutoff ``s0 * n * eps``)."""
    if s.size == 0 or s[0] == 0.0:
        return math.inf if s.size else 1.0
    keep = s[s > s[0] * n * np.finfo(float).eps]
    return float(s[0] / keep[-1])


def eigen_analysis(matrix, trivial: Optional[dict] = None, tol_margin: float = TOL_LSSP) -> StabilityReport:
    """Spectrum, spectral radius and conditioning of a square real matrix.

    ``condition_number`` uses the smallest nonzero singular value, so that the
    structurally singular optimistic Jacobian still gets a finite figure.
    """
    J = np.asarray(matrix, dtype=float)
    if J.ndim != 2 or J.shape[0] != J.shape[1]:
        raise ValueError("eigen_analysis needs a square matrix")
    if J.size == 0:
        return StabilityReport(J, (), 0.0, 1.0, dict(trivial or {}), True, False, ())
    eig = np.linalg.eigvals(J)
    ordered = tuple(complex(z) for z in sorted(eig, key=lambda z: (z.real, z.imag)))
    rho = float(np.max(np.abs(eig)))
    s = np.linalg.svd(J, compute_uv=False)
    kappa = pseudo_condition_number(s, J.shape[0])
    is_lssp = rho < 1.0 - tol_margin
    marginal = abs(rho - 1.0) <= tol_margin
    record = dict(trivial or {})
    if "value" in record:
        record["found"] = int(sum(abs(z - record["value"]) <= record.get("tol", TRIVIAL_TOL) for z in eig))
    return StabilityReport(J, ordered, rho, kappa, record, is_lssp, marginal, tuple(float(v) for v in s))


def nontrivial_roots(partition: ActivePartition, hp, family: str) -> np.ndarray:
    """Roots of the determinant factor of the characteristic polynomial.

    With s = 1 - sigma the factor is det(s^2 I - s K + M) where
    K = ex(A + (k + ed)B'B), M = ex ed B'B and k is c (AL) or omega (OG);
    its 2d roots come from a companion linearization.
    """
    k = hp.c if family == "AL" else hp.omega
    A, B, d = partition.A_mat, partition.B_mat, partition.d
    BtB = B.T @ B
    K = hp.eta_x * (A + (k + hp.eta_dual) * BtB)
    M = hp.eta_x * hp.eta_dual * BtB
    C = np.block([[K, -M], [np.eye(d), np.zeros((d, d))]])
    return 1.0 - np.linalg.eigvals(C)


def _trivial_record(partition, inactive_count, hp, family):
    q = _inactive(partition, inactive_count)
    if family == "AL":
        value, base = 1.0 - hp.eta_dual / hp.c, q
    else:
        value, base = 0.0, q + partition.d
    roots = nontrivial_roots(partition, hp, family)
    coincident = int(np.sum(np.abs(roots - value) <= TRIVIAL_TOL))
    return {"value": value, "expected": base, "coincident": coincident, "inactive_count": q,
            "tol": TRIVIAL_TOL}


def report_AL(partition: ActivePartition, hp, inactive_count: Optional[int] = None) -> StabilityReport:
    J = assemble_J_AL(partition, inactive_count, hp)
    return eigen_analysis(J, _trivial_record(partition, inactive_count, hp, "AL"))


def report_OG(partition: ActivePartition, hp, inactive_count: Optional[int] = None) -> StabilityReport:
    J = assemble_J_OG(partition, inactive_count, hp)
    return eigen_analysis(J, _trivial_record(partition, inactive_count, hp, "OG"))


def trivial_count_ok(report: StabilityReport) -> bool:
    t = report.trivial_eigs
    return t["found"] == t["expected"] + t["coincident"]


def _det_factor(sigma: complex, partition: ActivePartition, k: float, hp) -> complex:
    A, B, d = partition.A_mat, partition.B_mat, partition.d
    s = 1.0 - sigma
    M = (s * s) * np.eye(d) - hp.eta_x * s * A - hp.eta_x * (k * s - hp.eta_dual * sigma) * (B.T @ B)
    return complex(np.linalg.det(M.astype(complex)))


def char_poly_AL(sigma: complex, partition: ActivePartition, inactive_count: Optional[int], hp) -> complex:
    q = _inactive(partition, inactive_count)
    return (1.0 - hp.eta_dual / hp.c - sigma) ** q * _det_factor(sigma, partition, hp.c, hp)


def char_poly_OG(sigma: complex, partition: ActivePartition, inactive_count: Optional[int], hp) -> complex:
    q = _inactive(partition, inactive_count)
    return (-sigma) ** (q + partition.d) * _det_factor(sigma, partition, hp.omega, hp)


def det_factor_AL(sigma, partition, hp) -> complex:
    return _det_factor(sigma, partition, hp.c, hp)


def det_factor_OG(sigma, partition, hp) -> complex:
    return _det_factor(sigma, partition, hp.omega, hp)


def verify_spectral_relation(rep_al: StabilityReport, rep_og: StabilityReport, hp) -> dict:
    """Compare rho(J_AL) with max(rho(J_OG), 1 - ed/c).

    The ``1 - ed/c`` term enters ``rhs`` only when inactive inequalities
    exist; ``rhs_literal`` always includes it.
    """
    if hp.omega != hp.c:
        raise ValueError(f"spectral relation needs omega == c (omega={hp.omega!r}, c={hp.c!r})")
    floor = 1.0 - hp.eta_dual / hp.c
    lhs = rep_al.spectral_radius
    q = rep_al.trivial_eigs.get("inactive_count", 0)
    rhs = max(rep_og.spectral_radius, floor) if q > 0 else rep_og.spectral_radius
    rhs_literal = max(rep_og.spectral_radius, floor)
    return {"lhs": lhs, "rhs": rhs, "gap": abs(lhs - rhs),
            "rhs_literal": rhs_literal, "gap_literal": abs(lhs - rhs_literal)}


def convexification_threshold(partition: ActivePartition, c_max: float = 1e6, tol: float = 1e-8) -> float:
    """Smallest c in (0, c_max] with lambda_min(A + cB'B) > 0; 0 when A is already PD."""
    if not c_max > 0:
        raise ValueError("c_max must be positive")
    A, BtB = partition.A_mat, partition.B_mat.T @ partition.B_mat

    def pd(c):
        return np.linalg.eigvalsh(A + c * BtB).min() > 0.0

    if pd(0.0):
        return 0.0
    if not pd(c_max):
        return math.inf
    lo, hi = 0.0, c_max
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if pd(mid):
            hi = mid
        else:
            lo = mid
    return hi


# --- complementarity as a projection fixed point ------------------------------


def is_projection_fixed_point(lam, g, k: float) -> bool:
    """lambda == [lambda + k g]_+ componentwise."""
    lam = np.asarray(lam, dtype=float)
    return bool(np.all(lam == positive_part(lam + k * np.asarray(g, dtype=float))))


def feasible_and_complementary(lam, g) -> bool:
    """g <= 0 and lambda_i g_i = 0, decided component by component."""
    for li, gi in zip(np.asarray(lam, dtype=float), np.asarray(g, dtype=float)):
        if gi > 0:
            return False
        if li != 0 and gi != 0:
            return False
    return True


# --- convenience --------------------------------------------------------------


@dataclass(frozen=True)
class StabilityAnalysis:
    certificate: KKTCertificate
    assumptions: dict
    partition: ActivePartition
    al: StabilityReport
    og: StabilityReport
    relation: Optional[dict]


def analyze(problem: ProblemSpec, hp, guess: Optional[KKTGuess] = None, tol_act: float = TOL_ACT,
            tol: float = TOL_STRICT, require: bool = True) -> StabilityAnalysis:
    """Certify a KKT point, assemble both Jacobians and compare their spectra.

    With ``require`` every one of strict complementarity, LICQ and SOSC must
    hold, otherwise AssumptionViolation is raised.
    """
    cert = certificate_from_guess(problem, guess, tol_act)
    flags = check_assumptions(cert, tol)
    if not flags["strict_cs"]:
        raise StrictComplementarityViolated("strict complementarity violated")
    if require:
        for key, reason in (("licq", "LICQ violated"), ("sosc", "second-order sufficiency violated")):
            if not flags[key]:
                raise AssumptionViolation(reason)
    part = active_partition(problem, cert, tol)
    al = report_AL(part, hp)
    og = report_OG(part, hp)
    relation = verify_spectral_relation(al, og, hp) if hp.omega == hp.c else None
    return StabilityAnalysis(cert, flags, part, al, og, relation)
