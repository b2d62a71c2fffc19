"""Adversary-side min-max power allocation for both attack modes.

Outer loop: successive convex approximation anchored at the previous
iterate; inner loop: bisection on the objective level t, each probe a
second-order-cone feasibility problem solved by :mod:`cfmimo.cone`.

Variable layout: the power matrix zeta (N adversarial APs x K users) is
optimized through nu = sqrt(zeta), flattened column-major so user k owns
the contiguous block [k*N, (k+1)*N).

The per-user level constraint "SINR_k <= t" is assembled from first
principles rather than transcribed:

* PSA mode:   C ups + A - t B <= (t - 1) D (W + ups^2)
  with ups = kappa_k^T nu_k (linear) and W = sum_n theta kappa nu^2.
  For t <= 1 the constraint is convex as written and is emitted exactly as
  a cone via the hyperbolic identity w^2 <= x y; for t > 1 the convex
  quadratic on the favorable side is replaced by its first-order Taylor
  minorant at the anchor, leaving a linear constraint.  Either way the
  assembled set is exact at the anchor and conservative elsewhere.

* data mode:  numer - t (interf + 1) <= t F(nu)
  with F convex quadratic in the whole nu matrix; F is always replaced by
  its Taylor minorant (conservative, exact at the anchor).

Every per-user constraint is normalized by its own magnitude before being
handed to the cone solver; feasibility is scale-invariant so this only
conditions the numerics.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import cone
from .config import SystemConfig
from .rates import ClosedFormTerms


class MinMaxError(RuntimeError):
    """Solver failure or a diagnostic inconsistency (non-monotone trace)."""


@dataclass(frozen=True)
class MinMaxProblem:
    mode: str               # 'psa' | 'data'
    kappa: np.ndarray       # (N, K) adversarial estimate variances
    theta: np.ndarray       # (N, K) adversarial large-scale gains
    caps: np.ndarray        # (N,) per-AP budget, sum_k zeta kappa <= cap
    # psa constants (arrays of length K; zero-size for data mode)
    A: np.ndarray = None
    B: np.ndarray = None
    C: np.ndarray = None
    D: np.ndarray = None
    # data constants
    numer: np.ndarray = None    # rho_d (eps^2 + sigma_kk)
    interf: np.ndarray = None   # rho_d sum_{k' != k} sigma_kk'
    rho_da: float = 0.0

    @property
    def n_adv(self):
        return self.kappa.shape[0]

    @property
    def k_users(self):
        return self.kappa.shape[1]

    def objective(self, zeta: np.ndarray) -> float:
        """max_k of the SINR this formulation minimizes."""
        return float(np.max(self.per_user_sinr(zeta)))

    def per_user_sinr(self, zeta: np.ndarray) -> np.ndarray:
        ups = (np.sqrt(zeta) * self.kappa).sum(axis=0)
        if self.mode == "psa":
            w_own = (zeta * self.theta * self.kappa).sum(axis=0)
            script_d = self.D * (w_own + ups ** 2)
            return (self.C * ups + script_d + self.A) / (script_d + self.B)
        w_all = np.einsum("nj,nk,nj->k", zeta, self.theta, self.kappa)
        return self.numer / (self.interf + self.rho_da * (ups ** 2 + w_all) + 1.0)


def build_problem(mode: str, terms: ClosedFormTerms, kappa: np.ndarray,
                  theta: np.ndarray, config: SystemConfig) -> MinMaxProblem:
    """Assemble the optimizer's data from the closed-form rate constants.

    The legitimate-side inputs (beta, eta, gamma baked into ``terms``) are
    the genie knowledge the formulation grants the adversary.
    """
    if mode not in ("psa", "data"):
        raise ValueError(f"unknown optimization mode {mode!r}")
    if np.any(kappa <= 0) or np.any(theta <= 0):
        raise ValueError("kappa and theta must be entrywise positive")
    caps = np.ones(kappa.shape[0])
    if mode == "psa":
        return MinMaxProblem(mode, kappa, theta, caps,
                             A=terms.A, B=terms.B, C=terms.C, D=terms.D)
    # high-SNR training approximation: varrho ~= sigma_kk
    numer = config.rho_d * (terms.eps ** 2 + terms.xi)
    interf = config.rho_d * (terms.cross.sum(axis=1) - terms.xi)
    return MinMaxProblem(mode, kappa, theta, caps,
                         numer=numer, interf=interf, rho_da=config.rho_da)


def equal_allocation(kappa: np.ndarray) -> np.ndarray:
    """zeta_nk = 1/(K kappa_nk): each AP saturates its cap with a uniform
    per-user share."""
    if np.any(kappa <= 0):
        raise ValueError("kappa must be entrywise positive")
    return 1.0 / (kappa.shape[1] * kappa)


@dataclass(frozen=True)
class LinearSurrogate:
    """Affine minorant f_hat(nu) = f0 + <grad, nu - anchor> of a convex
    quadratic part f; exact (value and gradient) at the anchor."""
    f0: float
    grad: np.ndarray    # same shape as anchor
    anchor: np.ndarray

    def __call__(self, nu: np.ndarray) -> float:
        return self.f0 + float(np.sum(self.grad * (nu - self.anchor)))


def _psa_quadratic(problem, nu_col, k):
    ups = problem.kappa[:, k] @ nu_col
    w = np.sum(problem.theta[:, k] * problem.kappa[:, k] * nu_col ** 2)
    return w + ups ** 2


def _data_quadratic(problem, nu, k):
    ups = problem.kappa[:, k] @ nu[:, k]
    w_all = np.einsum("nj,n,nj->", nu ** 2, problem.theta[:, k], problem.kappa)
    return ups ** 2 + w_all


def sca_linearize(mode: str, nu_anchor: np.ndarray,
                  problem: MinMaxProblem) -> list[LinearSurrogate]:
    """First-order Taylor surrogates of each user's nonconvex part.

    PSA: f_k(nu) = ||nu_k o sqrt(theta_k kappa_k)||^2 + (kappa_k^T nu_k)^2,
    a function of the anchored user's column only.  Data: f_k is the full
    jamming quadratic over the whole nu matrix.
    """
    n, k_users = problem.kappa.shape
    out = []
    for k in range(k_users):
        if mode == "psa":
            col = nu_anchor[:, k]
            f0 = _psa_quadratic(problem, col, k)
            grad = np.zeros_like(nu_anchor)
            grad[:, k] = (2.0 * problem.theta[:, k] * problem.kappa[:, k] * col
                          + 2.0 * (problem.kappa[:, k] @ col) * problem.kappa[:, k])
        else:
            f0 = _data_quadratic(problem, nu_anchor, k)
            grad = 2.0 * nu_anchor * problem.theta[:, [k]] * problem.kappa
            grad[:, k] += 2.0 * (problem.kappa[:, k] @ nu_anchor[:, k]) \
                * problem.kappa[:, k]
        out.append(LinearSurrogate(f0=float(f0), grad=grad, anchor=nu_anchor.copy()))
    return out


def _linear_cone(coef_flat: np.ndarray, const: float) -> cone.SocConstraint:
    """coef . x + const <= 0 as a degenerate one-row cone 0 <= -coef.x - const."""
    n = coef_flat.size
    return cone.SocConstraint(np.zeros((1, n)), np.zeros(1), -coef_flat, -const)


def cap_cones(problem: MinMaxProblem) -> list[cone.SocConstraint]:
    """Per-AP budget ||diag(sqrt(kappa_n,:)) nu_n,:|| <= sqrt(cap_n)."""
    n, k_users = problem.kappa.shape
    dim = n * k_users
    out = []
    for ap in range(n):
        a = np.zeros((k_users, dim))
        for k in range(k_users):
            a[k, k * n + ap] = np.sqrt(problem.kappa[ap, k])
        out.append(cone.SocConstraint(a, np.zeros(k_users), np.zeros(dim),
                                      np.sqrt(problem.caps[ap])))
    return out


def assemble_soc(mode: str, t: float, nu_anchor: np.ndarray,
                 problem: MinMaxProblem):
    """SOC + linear constraint set whose feasible nu all satisfy the true
    per-user level constraints at level t, with exactness at the anchor.

    Returns (cones, bounds) for :func:`cfmimo.cone.solve_feasibility`.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    n, k_users = problem.kappa.shape
    dim = n * k_users
    cones = cap_cones(problem)
    surrogates = sca_linearize(mode, nu_anchor, problem)
    for k in range(k_users):
        blk = slice(k * n, (k + 1) * n)
        if mode == "psa":
            scale = problem.A[k] + problem.B[k]
            a_k = problem.A[k] / scale
            b_k = problem.B[k] / scale
            c_k = problem.C[k] / scale
            d_k = problem.D[k] / scale
            if d_k == 0.0 and c_k == 0.0:
                # attack power absent from this user's SINR: constant test
                cones.append(_linear_cone(np.zeros(dim), a_k - t * b_k))
                continue
            if t > 1.0:
                sur = surrogates[k]
                coef = np.zeros(dim)
                coef[blk] = c_k * problem.kappa[:, k] - (t - 1.0) * d_k * sur.grad[:, k]
                const = (a_k - t * b_k
                         - (t - 1.0) * d_k * (sur.f0 - sur.grad[:, k] @ nu_anchor[:, k]))
                cones.append(_linear_cone(coef, const))
            else:
                # exact convex cone: (1-t) d_k ||M nu_k||^2 <= t b_k - a_k - c_k ups
                m_rows = np.vstack([np.diag(np.sqrt(problem.theta[:, k]
                                                    * problem.kappa[:, k])),
                                    problem.kappa[:, k]])
                root = np.sqrt((1.0 - t) * d_k)
                a = np.zeros((m_rows.shape[0] + 1, dim))
                a[:-1, blk] = 2.0 * root * m_rows
                a[-1, blk] = -c_k * problem.kappa[:, k]
                b = np.zeros(m_rows.shape[0] + 1)
                b[-1] = t * b_k - a_k - 1.0
                c = np.zeros(dim)
                c[blk] = -c_k * problem.kappa[:, k]
                cones.append(cone.SocConstraint(a, b, c, t * b_k - a_k + 1.0))
        else:
            scale = problem.numer[k] + problem.interf[k] + 1.0
            sur = surrogates[k]
            coef = -t * problem.rho_da * sur.grad.flatten(order="F") / scale
            const = (problem.numer[k] - t * (problem.interf[k] + 1.0)
                     - t * problem.rho_da
                     * (sur.f0 - float(np.sum(sur.grad * nu_anchor)))) / scale
            cones.append(_linear_cone(coef, const))
    bounds = (np.zeros(dim), None)
    return cones, bounds


def level_constraint_ok(mode: str, t: float, nu: np.ndarray,
                        problem: MinMaxProblem, slack: float = 0.0) -> np.ndarray:
    """Direct evaluation of the true per-user level inequalities (the oracle
    the assembled SOC set is certified against)."""
    k_users = problem.k_users
    out = np.zeros(k_users, dtype=bool)
    for k in range(k_users):
        if mode == "psa":
            ups = problem.kappa[:, k] @ nu[:, k]
            q = _psa_quadratic(problem, nu[:, k], k)
            lhs = problem.C[k] * ups + problem.A[k] - t * problem.B[k] \
                - (t - 1.0) * problem.D[k] * q
            out[k] = lhs <= slack * (problem.A[k] + problem.B[k])
        else:
            f = _data_quadratic(problem, nu, k)
            lhs = problem.numer[k] - t * (problem.interf[k] + 1.0) \
                - t * problem.rho_da * f
            out[k] = lhs <= slack * (problem.numer[k] + problem.interf[k] + 1.0)
    return out


def feasible(t: float, nu_anchor: np.ndarray, problem: MinMaxProblem,
             tol: float = 1e-8, warm: np.ndarray | None = None,
             tau0: float = 1.0):
    """Probe level t: returns (flag, witness nu or None, FeasibilityResult)."""
    if t <= 0:
        raise ValueError("t must be positive")
    cones, bounds = assemble_soc(problem.mode, t, nu_anchor, problem)
    x0 = (warm if warm is not None else nu_anchor).flatten(order="F")
    res = cone.solve_feasibility(cones, bounds, tol=tol, x0=x0, tau0=tau0)
    if res.status == cone.STRICTLY_FEASIBLE:
        n = problem.n_adv
        witness = res.x.reshape((n, problem.k_users), order="F")
        return True, np.maximum(witness, 0.0), res
    return False, None, res


@dataclass
class SolveIteration:
    t_star: float
    bisect_history: list            # (lo, hi, probe, feasible)
    solver_iterations: int
    residual: float
    wall_ms: float


@dataclass
class SolveTrace:
    mode: str
    iterations: list = field(default_factory=list)
    zero_sensitivity: bool = False
    converged_iteration: int | None = None

    @property
    def objectives(self):
        return [it.t_star for it in self.iterations]

    def rows(self):
        """CSV rows (iteration, t, residual, wall_ms) for convergence curves."""
        return [(i, it.t_star, it.residual, it.wall_ms)
                for i, it in enumerate(self.iterations)]


def solve_minmax(problem: MinMaxProblem, sca_iters: int = 8,
                 bisect_tol: float = 1e-4, t_min: float = 1e-9,
                 max_bisect: int = 60, feas_tol: float = 1e-8,
                 anchor_refresh: bool = True):
    """Min-max power allocation: returns (zeta_star, SolveTrace).

    The bisection searches downward: feasibility of the level-t set grows
    with t, so a feasible probe moves the upper end down.  Each SCA round
    starts from the previous witness (equal allocation initially); within a
    round, ``anchor_refresh`` re-anchors the surrogates at every accepted
    witness, which leaves each accepted probe certified (a witness always
    satisfies its own conservative constraint set, hence the true level
    inequality) while letting the first round track the descent direction
    instead of stalling on the initial tangent plane.  The recorded
    objective is the true SINR of the round's witness, so the trace cannot
    increase.
    """
    if sca_iters < 1:
        raise ValueError("sca_iters must be >= 1")
    nu = np.sqrt(equal_allocation(problem.kappa))
    if problem.mode == "psa" and np.all(problem.C == 0) and np.all(problem.D == 0):
        trace = SolveTrace(mode=problem.mode, zero_sensitivity=True)
        trace.iterations.append(SolveIteration(
            t_star=problem.objective(nu ** 2), bisect_history=[],
            solver_iterations=0, residual=0.0, wall_ms=0.0))
        trace.converged_iteration = 0
        return nu ** 2, trace

    trace = SolveTrace(mode=problem.mode)
    t_cur = problem.objective(nu ** 2)
    for it in range(sca_iters):
        start = time.perf_counter()
        lo, hi = t_min, t_cur
        witness = nu
        anchor = nu
        history = []
        solver_iters = 0
        last_residual = 0.0
        steps = 0
        tau0 = 1.0
        while steps < max_bisect and (hi - lo) > bisect_tol * hi:
            mid = 0.5 * (lo + hi)
            ok, cand, res = feasible(mid, anchor, problem, tol=feas_tol,
                                     warm=witness, tau0=tau0)
            tau0 = max(1.0, res.final_tau / 1e3)
            solver_iters += res.iterations
            last_residual = res.max_residual
            history.append((lo, hi, mid, ok))
            if res.status == cone.FAILURE:
                raise MinMaxError(
                    f"feasibility solver failed at t={mid:.6g} "
                    f"(residual {res.max_residual:.3g})")
            if ok:
                hi = mid
                witness = cand
                if anchor_refresh:
                    anchor = cand
            else:
                lo = mid
            steps += 1
        t_new = problem.objective(witness ** 2)
        if t_new > t_cur * (1.0 + 1e-6):
            raise MinMaxError(
                f"non-monotone SCA trace: {t_cur:.6g} -> {t_new:.6g}")
        t_new = min(t_new, t_cur)
        trace.iterations.append(SolveIteration(
            t_star=t_new, bisect_history=history, solver_iterations=solver_iters,
            residual=last_residual,
            wall_ms=1e3 * (time.perf_counter() - start)))
        improved = t_cur - t_new
        nu = witness
        t_cur = t_new
        if improved <= 1e-4 * max(t_cur, 1e-300):
            trace.converged_iteration = it
            break
    return nu ** 2, trace
