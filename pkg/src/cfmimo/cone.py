"""Dense second-order-cone feasibility: decide whether a set of SOC and box
constraints admits a point, and produce a strictly feasible witness.

Method: phase-1 log-barrier interior point on the slack formulation

    minimize s   s.t.  ||A_i x + b_i|| <= c_i^T x + d_i + s,   box +- s,

starting from any x with s = residual(x) + 1 (always strictly interior).
The barrier parameter grows by 10x per outer stage.  A witness is returned
as soon as the slack goes negative; infeasibility is reported "at tolerance"
once the duality gap certifies the phase-1 optimum exceeds ``tol``.  No dual
ray is produced; the caller (bisection) only needs a monotone yes/no.

The per-Newton-step system assembly is the hot kernel; a compiled extension
is used when available, with this module's pure-numpy implementation as the
fallback (set CFMIMO_PURE_PYTHON=1 to force the fallback).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

try:  # compiled hot kernel (optional)
    from . import _socext
except ImportError:  # pragma: no cover - build-environment dependent
    _socext = None

BACKEND = "compiled" if (_socext is not None
                         and not os.environ.get("CFMIMO_PURE_PYTHON")) else "numpy"

STRICTLY_FEASIBLE = "strictly-feasible"
INFEASIBLE = "infeasible-at-tolerance"
FAILURE = "numerical-failure"


@dataclass(frozen=True)
class SocConstraint:
    """The cone ||A x + b|| <= c^T x + d."""
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: float

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).ravel())
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float).ravel())
        object.__setattr__(self, "d", float(self.d))
        if A.shape[0] < 1:
            raise ValueError("cone needs at least one row")
        if self.b.shape[0] != A.shape[0] or self.c.shape[0] != A.shape[1]:
            raise ValueError("inconsistent cone dimensions")


@dataclass(frozen=True)
class FeasibilityResult:
    status: str
    x: np.ndarray
    max_residual: float
    iterations: int
    final_tau: float = 1.0  # barrier weight reached (warm-start hint)

    @property
    def feasible(self) -> bool:
        return self.status == STRICTLY_FEASIBLE


def residual(cones, bounds, x) -> float:
    """Max constraint violation at x: <= 0 iff x is feasible."""
    x = np.asarray(x, dtype=float)
    worst = -np.inf
    for cone in cones:
        if cone.c.shape[0] != x.shape[0]:
            raise ValueError("cone dimension does not match x")
        worst = max(worst, float(np.linalg.norm(cone.A @ x + cone.b)
                                 - cone.c @ x - cone.d))
    if bounds is not None:
        lb, ub = bounds
        if lb is not None:
            worst = max(worst, float(np.max(lb - x)))
        if ub is not None:
            worst = max(worst, float(np.max(x - ub)))
    return worst


class _Packed:
    """Flat constraint arrays shared by the numpy and compiled kernels."""

    def __init__(self, cones, bounds, n):
        sup_idx, sup_ptr = [], [0]
        a_flat, a_ptr = [], [0]
        b_flat, row_ptr = [], [0]
        c_flat, d = [], []
        for cone in cones:
            mask = (np.abs(cone.A).sum(axis=0) != 0) | (cone.c != 0)
            sup = np.flatnonzero(mask)
            if sup.size == 0:  # constant constraint; keep one dummy column
                sup = np.array([0], dtype=np.intp)
            sup_idx.append(sup)
            sup_ptr.append(sup_ptr[-1] + sup.size)
            a_small = cone.A[:, sup]
            a_flat.append(a_small.ravel())
            a_ptr.append(a_ptr[-1] + a_small.size)
            b_flat.append(cone.b)
            row_ptr.append(row_ptr[-1] + cone.b.size)
            c_flat.append(cone.c[sup])
            d.append(cone.d)
        box_idx, box_sign, box_rhs = [], [], []
        if bounds is not None:
            lb, ub = bounds
            if lb is not None:
                for j in np.flatnonzero(np.isfinite(lb)):
                    box_idx.append(j); box_sign.append(1.0); box_rhs.append(-lb[j])
            if ub is not None:
                for j in np.flatnonzero(np.isfinite(ub)):
                    box_idx.append(j); box_sign.append(-1.0); box_rhs.append(ub[j])
        self.n = n
        self.n_cones = len(cones)
        self.sup_ptr = np.asarray(sup_ptr, dtype=np.int64)
        self.sup_idx = (np.concatenate(sup_idx).astype(np.int64)
                        if sup_idx else np.zeros(0, dtype=np.int64))
        self.a_ptr = np.asarray(a_ptr, dtype=np.int64)
        self.a_flat = (np.concatenate(a_flat) if a_flat else np.zeros(0))
        self.row_ptr = np.asarray(row_ptr, dtype=np.int64)
        self.b_flat = (np.concatenate(b_flat) if b_flat else np.zeros(0))
        self.c_flat = (np.concatenate(c_flat) if c_flat else np.zeros(0))
        self.d = np.asarray(d, dtype=float)
        self.box_idx = np.asarray(box_idx, dtype=np.int64)
        self.box_sign = np.asarray(box_sign, dtype=float)
        self.box_rhs = np.asarray(box_rhs, dtype=float)
        self.n_terms = self.n_cones + self.box_idx.size


def _barrier_np(z, p: _Packed):
    """(ok, sum of -log barrier terms); ok=False outside the domain."""
    x, s = z[:-1], z[-1]
    total = 0.0
    for i in range(p.n_cones):
        sup = p.sup_idx[p.sup_ptr[i]:p.sup_ptr[i + 1]]
        xs = x[sup]
        rows = p.row_ptr[i + 1] - p.row_ptr[i]
        a = p.a_flat[p.a_ptr[i]:p.a_ptr[i + 1]].reshape(rows, sup.size)
        u = a @ xs + p.b_flat[p.row_ptr[i]:p.row_ptr[i + 1]]
        w = p.c_flat[p.sup_ptr[i]:p.sup_ptr[i + 1]] @ xs + p.d[i] + s
        r2 = w * w - u @ u
        if w <= 0.0 or r2 <= 0.0:
            return False, np.inf
        total -= np.log(r2)
    for j in range(p.box_idx.size):
        w = p.box_sign[j] * x[p.box_idx[j]] + p.box_rhs[j] + s
        if w <= 0.0:
            return False, np.inf
        total -= np.log(w)
    return True, total


def _newton_np(z, p: _Packed, grad, hess):
    """Fill gradient/Hessian of the barrier at z; returns False off-domain."""
    x, s = z[:-1], z[-1]
    n = p.n
    grad[:] = 0.0
    hess[:] = 0.0
    for i in range(p.n_cones):
        sup = p.sup_idx[p.sup_ptr[i]:p.sup_ptr[i + 1]]
        xs = x[sup]
        rows = p.row_ptr[i + 1] - p.row_ptr[i]
        a = p.a_flat[p.a_ptr[i]:p.a_ptr[i + 1]].reshape(rows, sup.size)
        b = p.b_flat[p.row_ptr[i]:p.row_ptr[i + 1]]
        c = p.c_flat[p.sup_ptr[i]:p.sup_ptr[i + 1]]
        u = a @ xs + b
        w = c @ xs + p.d[i] + s
        r2 = w * w - u @ u
        if w <= 0.0 or r2 <= 0.0:
            return False
        ext = np.concatenate([sup, [n]])
        cz = np.concatenate([c, [1.0]])
        v = 2.0 * w * cz
        v[:-1] -= 2.0 * (a.T @ u)
        grad[ext] -= v / r2
        block = np.outer(v, v) / (r2 * r2) - (2.0 / r2) * np.outer(cz, cz)
        block[:-1, :-1] += (2.0 / r2) * (a.T @ a)
        hess[np.ix_(ext, ext)] += block
    for j in range(p.box_idx.size):
        idx = p.box_idx[j]
        w = p.box_sign[j] * x[idx] + p.box_rhs[j] + s
        if w <= 0.0:
            return False
        vz = np.array([p.box_sign[j], 1.0])
        ext = np.array([idx, n])
        grad[ext] -= vz / w
        hess[np.ix_(ext, ext)] += np.outer(vz, vz) / (w * w)
    return True


def _kernel_funcs():
    if BACKEND == "compiled":
        return _socext.barrier_value, _socext.newton_system
    return _barrier_np, _newton_np


def _pack_args(p: _Packed):
    if BACKEND == "compiled":
        return (p.n, p.n_cones, p.sup_ptr, p.sup_idx, p.a_ptr, p.a_flat,
                p.row_ptr, p.b_flat, p.c_flat, p.d,
                p.box_idx, p.box_sign, p.box_rhs)
    return (p,)


def solve_feasibility(cones, bounds=None, tol: float = 1e-8,
                      max_iters: int = 4000, x0=None,
                      tau0: float = 1.0) -> FeasibilityResult:
    """Find a strictly feasible point or report infeasibility at tolerance.

    ``bounds`` is an optional (lb, ub) pair of length-n arrays (entries may
    be +-inf, or either side None).  ``tau0`` seeds the barrier weight
    (useful when re-solving a closely related instance).  Deterministic
    given identical inputs.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if cones:
        n = cones[0].c.shape[0]
    elif bounds is not None and bounds[0] is not None:
        n = len(bounds[0])
    elif bounds is not None and bounds[1] is not None:
        n = len(bounds[1])
    else:
        raise ValueError("empty problem")
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    packed = _Packed(cones, bounds, n)
    barrier_value, newton_system = _kernel_funcs()
    args = _pack_args(packed)

    s = max(residual(cones, bounds, x), 0.0) + 1.0
    z = np.concatenate([x, [s]])
    m = packed.n_terms
    if m == 0:
        return FeasibilityResult(STRICTLY_FEASIBLE, x, -np.inf, 0)

    grad = np.zeros(n + 1)
    hess = np.zeros((n + 1, n + 1))
    e_s = np.zeros(n + 1)
    e_s[-1] = 1.0
    tau = max(1.0, float(tau0))
    iterations = 0
    gap_target = 0.01 * tol
    feas_margin = max(10.0 * tol, 1e-9)
    jitter = np.arange(n + 1), np.arange(n + 1)

    while True:
        # center for the current barrier weight (loosely early, tightly late)
        decrement_stop = 2e-9 + 1e-3 * m / tau
        for _ in range(60):
            if iterations >= max_iters:
                break
            ok = newton_system(z, *args, grad, hess)
            if not ok:
                return FeasibilityResult(FAILURE, z[:-1],
                                         residual(cones, bounds, z[:-1]),
                                         iterations, tau)
            g = tau * e_s + grad
            h = hess.copy()
            h[jitter] += 1e-12
            try:
                step = -np.linalg.solve(h, g)
            except np.linalg.LinAlgError:
                step = -np.linalg.lstsq(h, g, rcond=None)[0]
            iterations += 1
            decrement = -g @ step
            if decrement <= decrement_stop:
                break
            alpha = 1.0
            okv, f0 = barrier_value(z, *args)
            f0 += tau * z[-1]
            for _ in range(60):
                trial = z + alpha * step
                okv, ft = barrier_value(trial, *args)
                if okv and ft + tau * trial[-1] <= f0 + 0.25 * alpha * (g @ step):
                    break
                alpha *= 0.5
            else:
                break
            z = z + alpha * step
            if z[-1] < -feas_margin:
                break
        s = z[-1]
        if s < -feas_margin:
            break
        # certified infeasibility: the phase-1 optimum is at least s - 2m/tau
        if s - 2.0 * m / tau > tol:
            return FeasibilityResult(INFEASIBLE, z[:-1],
                                     residual(cones, bounds, z[:-1]),
                                     iterations, tau)
        if m / tau <= gap_target:
            break
        if iterations >= max_iters:
            res = residual(cones, bounds, z[:-1])
            if res <= tol:
                return FeasibilityResult(STRICTLY_FEASIBLE, z[:-1], res,
                                         iterations, tau)
            return FeasibilityResult(FAILURE, z[:-1], res, iterations, tau)
        tau *= 30.0

    x = z[:-1]
    res = residual(cones, bounds, x)
    if res <= tol:
        return FeasibilityResult(STRICTLY_FEASIBLE, x, res, iterations, tau)
    return FeasibilityResult(INFEASIBLE, x, res, iterations, tau)


def write_instance(path, cones, bounds=None):
    """Dump an instance in the documented plain-text format: a dimensions
    header, then each cone as dense rows, then optional bounds lines."""
    n = cones[0].c.shape[0] if cones else (len(bounds[0]) if bounds else 0)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"vars {n}\ncones {len(cones)}\n")
        for cone in cones:
            fh.write(f"cone rows {cone.A.shape[0]}\n")
            for row in cone.A:
                fh.write("A " + " ".join(repr(v) for v in row) + "\n")
            fh.write("b " + " ".join(repr(v) for v in cone.b) + "\n")
            fh.write("c " + " ".join(repr(v) for v in cone.c) + "\n")
            fh.write(f"d {cone.d!r}\n")
        if bounds is not None:
            lb, ub = bounds
            if lb is not None:
                fh.write("lb " + " ".join(repr(v) for v in lb) + "\n")
            if ub is not None:
                fh.write("ub " + " ".join(repr(v) for v in ub) + "\n")


def read_instance(path):
    """Inverse of :func:`write_instance`."""
    cones, lb, ub = [], None, None
    with open(path, "r", encoding="utf-8") as fh:
        tokens = [line.split() for line in fh if line.strip()]
    i = 0
    assert tokens[i][0] == "vars"
    i += 1
    n_cones = int(tokens[i][1])
    i += 1
    for _ in range(n_cones):
        rows = int(tokens[i][2])
        i += 1
        a = np.array([[float(v) for v in tokens[i + r][1:]] for r in range(rows)])
        i += rows
        b = np.array([float(v) for v in tokens[i][1:]]); i += 1
        c = np.array([float(v) for v in tokens[i][1:]]); i += 1
        d = float(tokens[i][1]); i += 1
        cones.append(SocConstraint(a, b, c, d))
    while i < len(tokens):
        if tokens[i][0] == "lb":
            lb = np.array([float(v) for v in tokens[i][1:]])
        elif tokens[i][0] == "ub":
            ub = np.array([float(v) for v in tokens[i][1:]])
        i += 1
    bounds = None if lb is None and ub is None else (lb, ub)
    return cones, bounds
