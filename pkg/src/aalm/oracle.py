"""Independent reference solutions and cross-checking oracles.

Diagnostics compare iterates against a KKT pair ``(x*, lam*)`` satisfying
``grad f(x*) + A' lam* = 0`` and ``A x* = b``.  This module is the only
producer of such pairs:

* :func:`kkt_solve_qp` solves the quadratic case directly from the saddle
  system, falling back to a minimum-norm least-squares solve when the
  constraints are rank deficient;
* :func:`kkt_refine` handles general smooth objectives: a long accelerated
  run to get near the solution, then Newton polish on the KKT equations
  down to a certified residual;
* :func:`brute_step_oracle` recomputes a single solver iteration for
  scalar problems by literal formula substitution -- a deliberately
  separate arithmetic path used to pin down :func:`aalm.solver.step`.

References are expensive for the larger benchmark instances, so they can
be cached to sidecar CSV files keyed by a content hash of the instance.
"""

from __future__ import annotations

import hashlib
import os
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve, lstsq

from .problems import KKTPoint, ProblemInstance
from .schedule import nesterov
from .solver import SolverConfig, StoppingRule, run
from .subsolver import InnerSolverPolicy

# Residual scale accepted from the direct KKT solve before falling back to
# (or failing out of) the least-squares path.
KKT_RESIDUAL_TOL = 1e-10


class ReferenceNotConverged(RuntimeError):
    """Refinement missed the target KKT residual.

    Attributes
    ----------
    stat_res, feas_res : float
        Final stationarity and feasibility residuals.
    """

    def __init__(self, message, stat_res, feas_res):
        super().__init__(message)
        self.stat_res = stat_res
        self.feas_res = feas_res


class InfeasibleConstraints(ValueError):
    """``b`` is not in the range of ``A``: no feasible point exists."""


def _min_norm_solve(M, rhs):
    """Minimum-norm least-squares solve (complete orthogonal factorization)."""
    sol, _, _, _ = lstsq(M, rhs, lapack_driver="gelsy")
    return sol


def kkt_solve_qp(Q, q, A, b):
    """Closed-form KKT pair of ``min x'Qx/2 + q'x  s.t.  Ax = b``.

    Solves the saddle system ``[[Q, A'], [A, 0]] [x; lam] = [-q; b]``
    directly; if the system is singular (rank-deficient ``A`` or ``Q``
    singular on the null space), the minimum-norm least-squares solution
    is taken instead, which in particular selects the minimum-norm dual.

    Raises
    ------
    InfeasibleConstraints
        When no point satisfies ``Ax = b`` to within ``1e-10``.
    ReferenceNotConverged
        When the stationarity equation cannot be satisfied (e.g. the QP is
        unbounded below on the feasible set).
    """
    Q = np.asarray(Q, dtype=float)
    q = np.asarray(q, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    n, m = Q.shape[0], A.shape[0]
    K = np.zeros((n + m, n + m))
    K[:n, :n] = Q
    K[:n, n:] = A.T
    K[n:, :n] = A
    rhs = np.concatenate([-q, b])
    scale = 1.0 + np.linalg.norm(rhs)
    try:
        sol = np.linalg.solve(K, rhs)
        if np.linalg.norm(K @ sol - rhs) > KKT_RESIDUAL_TOL * scale:
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        sol = _min_norm_solve(K, rhs)
    x, lam = sol[:n], sol[n:]
    feas = float(np.linalg.norm(A @ x - b))
    stat = float(np.linalg.norm(Q @ x + q + A.T @ lam))
    if feas > KKT_RESIDUAL_TOL * (1.0 + np.linalg.norm(b)):
        raise InfeasibleConstraints(
            f"constraint residual {feas:.3e}: b is not in the range of A")
    if stat > KKT_RESIDUAL_TOL * scale:
        raise ReferenceNotConverged(
            f"stationarity residual {stat:.3e}; the QP has no finite "
            f"KKT point", stat, feas)
    return KKTPoint(x=x, lam=lam, kkt_tol=max(stat, feas))


def _kkt_residuals(instance, x, lam):
    g = instance.objective.gradient(x)
    stat = float(np.linalg.norm(g + instance.A.T @ lam))
    feas = float(np.linalg.norm(instance.A @ x - instance.b))
    return stat, feas


def kkt_refine(instance, budget=100_000, target=1e-9, polish_steps=60):
    """High-accuracy KKT pair for a general smooth instance.

    Quadratic objectives short-circuit to :func:`kkt_solve_qp`.  Otherwise
    an accelerated run (explicit step when a Lipschitz constant is known,
    implicit otherwise) warms a damped Newton iteration on the KKT system;
    each polish step solves the Schur complement ``A H^{-1} A'`` by a
    minimum-norm least-squares solve, so rank-deficient constraints are
    handled throughout.  The returned ``kkt_tol`` certifies
    ``max(stationarity, feasibility) <= target``.

    Raises
    ------
    ReferenceNotConverged
        If the residual target is not met; carries the final residuals.
    """
    obj = instance.objective
    if obj.quadratic is not None:
        Q, q = obj.quadratic
        return kkt_solve_qp(Q, q, instance.A, instance.b)
    case = "explicit" if obj.lipschitz is not None else "implicit"
    # The warm run only needs to land in the Newton polish basin.  Stopping
    # there also keeps the inner tolerance schedule (which tightens like
    # 1/t^3) clear of the subproblem gradient's evaluation noise, which
    # grows like t^2 * eps through the squared dual-correction coefficient;
    # past their crossing no inner solver can certify the schedule.  The
    # polish phase owns the accuracy target.
    basin = max(1e-4, 0.1 * target)
    config = SolverConfig(
        schedule=nesterov(),
        case=case,
        stop=StoppingRule(budget, feas_tol=basin, stat_tol=basin),
        inner=InnerSolverPolicy(max_inner=100),
        use_eig=(case == "explicit" and instance.dim >= 400),
    )
    x0 = np.zeros(instance.dim)
    lam0 = np.zeros(instance.n_constraints)
    state, _ = run(instance, config, x0, lam0)
    x, lam = state.x_curr, state.lam_curr
    A, b = instance.A, instance.b
    stat, feas = _kkt_residuals(instance, x, lam)
    if obj.hessian is not None:
        best = max(stat, feas)
        for _ in range(polish_steps):
            if best <= 0.01 * target:
                break
            H = obj.hessian(x)
            g = obj.gradient(x)
            try:
                chol = cho_factor(H)
                Hinv_g = cho_solve(chol, g)
                Hinv_At = cho_solve(chol, A.T)
                S = A @ Hinv_At
                lam_new = _min_norm_solve(S, A @ x - b - A @ Hinv_g)
                dx = -cho_solve(chol, g + A.T @ lam_new)
            except np.linalg.LinAlgError:
                # Indefinite or singular Hessian: full KKT least squares.
                n = x.size
                J = np.zeros((n + A.shape[0], n + A.shape[0]))
                J[:n, :n] = H
                J[:n, n:] = A.T
                J[n:, :n] = A
                F = np.concatenate([g + A.T @ lam, A @ x - b])
                d = _min_norm_solve(J, -F)
                dx, lam_new = d[:n], lam + d[n:]
            # Damped acceptance on the KKT residual.
            s = 1.0
            while s > 1e-6:
                x_try = x + s * dx
                lam_try = lam + s * (lam_new - lam)
                stat_t, feas_t = _kkt_residuals(instance, x_try, lam_try)
                if max(stat_t, feas_t) < best:
                    x, lam, best = x_try, lam_try, max(stat_t, feas_t)
                    break
                s *= 0.5
            else:
                break  # no progress in any damping; stop polishing
        # Deterministic dual: minimum-norm multiplier for the final x.
        lam_mn = _min_norm_solve(A.T, -obj.gradient(x))
        stat_mn, feas_mn = _kkt_residuals(instance, x, lam_mn)
        if max(stat_mn, feas_mn) <= best:
            lam, best = lam_mn, max(stat_mn, feas_mn)
        stat, feas = _kkt_residuals(instance, x, lam)
    res = max(stat, feas)
    if res > target:
        raise ReferenceNotConverged(
            f"KKT residual {res:.3e} exceeds target {target:.1e} after "
            f"budget {budget} and polishing", stat, feas)
    return KKTPoint(x=x, lam=lam, kkt_tol=res)


def brute_step_oracle(quad_coef, lin_coef, a, b, gamma, delta, beta, eta,
                      t_curr, t_next, x_curr, x_prev, lam_curr, lam_prev,
                      case="implicit"):
    """One solver iteration for the scalar problem, by literal substitution.

    The problem is ``min quad_coef*x^2/2 + lin_coef*x  s.t.  a*x = b`` in
    one variable with one constraint.  Every formula of the iteration is
    written out in plain scalar arithmetic, independent of the solver
    modules, so agreement with :func:`aalm.solver.step` pins the
    implementation:

        alpha = (t_{k+1} - eta)/eta,   c = t_{k+1}/eta,
        xbar  = x_k + (t_k - 1)/t_{k+1} (x_k - x_{k-1}),
        p = c*lbar - alpha*lam_k,      r = alpha*a*x_k + b,
        x_{k+1} = [xbar/gamma - g0 - ql + a(beta*b - p + delta*c*r)]
                  / [qc + 1/gamma + beta*a^2 + delta*c^2*a^2],
        lam_{k+1} = lbar + delta*(c*a*x_{k+1} - r),

    where ``(qc, ql, g0)`` are ``(quad_coef, lin_coef, 0)`` for the
    implicit case and ``(0, 0, f'(xbar))`` for the explicit case.

    Returns
    -------
    (float, float)
        ``(x_{k+1}, lam_{k+1})``.
    """
    alpha = (t_next - eta) / eta
    c = t_next / eta
    w = (t_curr - 1.0) / t_next
    xbar = x_curr + w * (x_curr - x_prev)
    lbar = lam_curr + w * (lam_curr - lam_prev)
    p = c * lbar - alpha * lam_curr
    r = alpha * a * x_curr + b
    if case == "explicit":
        qc, ql, g0 = 0.0, 0.0, quad_coef * xbar + lin_coef
    elif case == "implicit":
        qc, ql, g0 = quad_coef, lin_coef, 0.0
    else:
        raise ValueError(f"scalar oracle handles implicit/explicit, "
                         f"got {case!r}")
    denom = qc + 1.0 / gamma + beta * a * a + delta * c * c * a * a
    numer = xbar / gamma - g0 - ql + a * (beta * b - p + delta * c * r)
    x_next = numer / denom
    lam_next = lbar + delta * (c * a * x_next - r)
    return x_next, lam_next


# ---------------------------------------------------------------------------
# Reference cache: KKT points persisted next to experiment outputs.

def instance_hash(instance):
    """Content hash binding a cache entry to the instance's exact data."""
    h = hashlib.sha256()
    h.update(instance.name.encode())
    h.update(np.ascontiguousarray(instance.A).tobytes())
    h.update(np.ascontiguousarray(instance.b).tobytes())
    return h.hexdigest()[:16]


def save_kkt(path, kkt):
    """Write a KKT pair as a small CSV sidecar (round-trip exact)."""
    with open(path, "w") as f:
        f.write(f"kkt_tol,{kkt.kkt_tol!r}\n")
        f.write("x," + ",".join(repr(float(v)) for v in kkt.x) + "\n")
        f.write("lam," + ",".join(repr(float(v)) for v in kkt.lam) + "\n")


def load_kkt(path):
    """Read a sidecar written by :func:`save_kkt`."""
    with open(path) as f:
        rows = [line.rstrip("\n").split(",") for line in f if line.strip()]
    fields = {r[0]: r[1:] for r in rows}
    return KKTPoint(x=np.array([float(v) for v in fields["x"]]),
                    lam=np.array([float(v) for v in fields["lam"]]),
                    kkt_tol=float(fields["kkt_tol"][0]))


def cached_reference(instance, directory, compute=None, refresh=False):
    """Fetch (or compute and persist) the reference pair for ``instance``.

    The cache file name embeds :func:`instance_hash`, so any change to the
    instance data invalidates the entry.  ``compute`` defaults to
    :func:`kkt_refine`.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{instance.name}-{instance_hash(instance)}.kkt.csv"
    if path.exists() and not refresh:
        kkt = load_kkt(path)
        if kkt.x.shape == (instance.dim,):
            return kkt
    kkt = compute(instance) if compute is not None else kkt_refine(instance)
    save_kkt(path, kkt)
    return kkt
