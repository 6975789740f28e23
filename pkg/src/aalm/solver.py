"""The accelerated augmented Lagrangian loop.

One outer iteration, at state ``(x_k, x_{k-1}, lam_k, lam_{k-1}, t_k)`` and
with ``alpha_k = (t_{k+1} - eta)/eta``, ``c_k = t_{k+1}/eta``:

1. extrapolate   ``xbar_k = x_k + ((t_k - 1)/t_{k+1})(x_k - x_{k-1})`` and
   likewise ``lambdabar_k``;
2. aggregate the dual data ``p_k = c_k lambdabar_k - alpha_k lam_k`` and
   ``r_k = alpha_k A x_k + b``;
3. minimize the strongly convex subproblem (see :mod:`aalm.subsolver`)
   built from ``(p_k, r_k, xbar_k)`` -- with ``f`` kept implicit, or
   linearized at ``xbar_k`` when a gradient Lipschitz constant is known and
   ``gamma <= 1/L``;
4. ascend the dual: ``lam_{k+1} = lambdabar_k + delta (c_k A x_{k+1} - r_k)``.

The same iteration can be written as a coupled pair of proximal-type
inclusions in ``(x_{k+1}, lam_{k+1})``; :func:`step_coupled` solves that
pair directly as a joint linear system and serves as an independent oracle
for :func:`step` in the tests.  Equivalence of the two forms hinges on the
dual-correction identity

    lam_{k+1} + alpha_k (lam_{k+1} - lam_k)
        = p_k + delta c_k (c_k A x_{k+1} - r_k),

which ``check_identities=True`` verifies at every iteration.

A scaled variant multiplies both stepsizes by per-iteration factors
``xi_{k+1}`` (implicit case only); rates are then measured against
``t_k^2 xi_k`` and every trace record carries that scaling.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from .diagnostics import TraceRecord, make_record
from .problems import KKTPoint, ProblemInstance
from .schedule import (ScaledSchedule, Schedule, certify_rho_scaled,
                       coefficients, generate, generate_scaled, resolve,
                       resolve_eta)
from .subsolver import (InnerSolverPolicy, LinearCache, SubproblemSpec,
                        multiplier_update, solve_inner_newton,
                        solve_linear_case)

# Inner Newton tolerance schedule: min(cap, INNER_TOL_SCALE / t_k^3).  The
# cubic decay outpaces the energy telescoping, so inexact inner solves do
# not pollute the measured rates.
INNER_TOL_SCALE = 1e-2

# Relative slack for the per-iteration identity checks in debug mode.
IDENTITY_TOL = 1e-10


class SolverError(RuntimeError):
    """An iteration failed (identity violation or invalid configuration
    discovered mid-run)."""


@dataclass(frozen=True)
class StoppingRule:
    """Iteration budget plus optional early-exit tolerances.

    The run stops early only when *every* tolerance that is set has been
    met (feasibility and/or stationarity).
    """

    max_iter: int
    feas_tol: Optional[float] = None
    stat_tol: Optional[float] = None

    def satisfied(self, feas, stat):
        if self.feas_tol is None and self.stat_tol is None:
            return False
        ok = True
        if self.feas_tol is not None:
            ok = ok and feas <= self.feas_tol
        if self.stat_tol is not None:
            ok = ok and stat <= self.stat_tol
        return ok


@dataclass(frozen=True)
class SolverConfig:
    """Full configuration of a run.

    ``gamma=None`` requests the default stepsize: ``1/L`` for the
    explicit/composite cases, ``1.0`` for the implicit case.  ``schedule``
    may be unresolved (``rho``/``eta`` symbolic); :func:`resolve_config`
    certifies and freezes it against the iteration budget.
    """

    schedule: Schedule
    case: str = "implicit"
    gamma: Optional[float] = None
    delta: float = 1.0
    beta: float = 1.0
    scaling: Optional[ScaledSchedule] = None
    max_iter: int = 1000
    stop: Optional[StoppingRule] = None
    inner: InnerSolverPolicy = field(default_factory=InnerSolverPolicy)
    use_eig: bool = False
    check_identities: bool = False

    def __post_init__(self):
        if self.stop is None:
            object.__setattr__(self, "stop", StoppingRule(self.max_iter))
        else:
            object.__setattr__(self, "max_iter", self.stop.max_iter)


@dataclass
class IterateState:
    """Mutable loop state.

    ``t_seq``/``xi_seq`` hold the precomputed schedule values
    ``t_1 .. t_{K+1}`` so that ``t_curr = t_seq[k-1]`` and
    ``t_next = t_seq[k]`` are plain lookups; ``k`` is the 1-based iterate
    index (``k = 1`` is the initial point, with ``x_prev = x_curr``).
    """

    x_curr: np.ndarray
    x_prev: np.ndarray
    lam_curr: np.ndarray
    lam_prev: np.ndarray
    k: int
    t_seq: np.ndarray
    xi_seq: np.ndarray

    @property
    def t_curr(self):
        return float(self.t_seq[self.k - 1])

    @property
    def t_next(self):
        return float(self.t_seq[self.k])

    @property
    def xi_curr(self):
        return float(self.xi_seq[self.k - 1])

    @property
    def xi_next(self):
        return float(self.xi_seq[self.k])


def resolve_config(instance, config):
    """Validate ``config`` against ``instance`` and freeze open parameters.

    Fills the default ``gamma``, certifies/resolves the schedule (and the
    scaled growth condition when scaling is attached) over a horizon of
    ``max(10 * max_iter, 10_000)``, and checks the stepsize restriction
    ``gamma <= 1/L`` wherever a linearized gradient step is taken.

    Returns
    -------
    SolverConfig
        A copy safe to hand to :func:`step`/:func:`run`.
    """
    obj = instance.objective
    if config.case == "explicit":
        L = obj.lipschitz
        if L is None:
            raise ValueError(
                "explicit case needs a gradient Lipschitz constant on the "
                "objective; use the implicit case instead")
    elif config.case == "composite":
        if obj.split is None:
            raise ValueError("composite case needs objective.split = (f1, f2)")
        L = obj.split[1].lipschitz
        if L is None:
            raise ValueError("composite case needs f2.lipschitz")
    elif config.case == "implicit":
        L = None
    else:
        raise ValueError(f"unknown case {config.case!r}")
    gamma = config.gamma
    if gamma is None:
        gamma = 1.0 / L if L is not None else 1.0
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if L is not None and gamma > 1.0 / L * (1.0 + 1e-12):
        raise ValueError(
            f"gamma = {gamma:.6g} violates the stepsize restriction "
            f"1/L = {1.0 / L:.6g} of the linearized step")
    if config.delta <= 0:
        raise ValueError(f"delta must be positive, got {config.delta}")
    if config.beta < 0:
        raise ValueError(f"beta must be nonnegative, got {config.beta}")
    if config.scaling is not None:
        if config.case != "implicit":
            raise ValueError("stepsize scaling is defined for the implicit "
                             "case only")
        horizon = max(10 * config.max_iter, 10_000)
        rho_s = certify_rho_scaled(config.scaling, horizon)
        if config.scaling.rho_scaled is not None:
            if rho_s > config.scaling.rho_scaled + 1e-12:
                raise ValueError(
                    f"supplied rho_scaled = {config.scaling.rho_scaled} is "
                    f"below the measured growth {rho_s:.6g}")
            rho_s = config.scaling.rho_scaled
        # eta must dominate the growth constant of t_k^2 xi_k (the base
        # schedule's own growth is implied by the scaled certification).
        rho_s = min(rho_s, 1.0)
        schedule = replace(config.schedule, rho=rho_s,
                           eta=resolve_eta(config.schedule.eta, rho_s))
        scaling = replace(config.scaling, base=schedule, rho_scaled=rho_s)
    else:
        schedule = resolve(config.schedule, config.max_iter)
        scaling = None
    return replace(config, gamma=float(gamma), schedule=schedule,
                   scaling=scaling)


def initial_state(instance, config, x0, lam0):
    """Build the ``k = 1`` state (``x_1 = x_0``, ``lam_1 = lam_0``).

    ``config`` must be resolved.  Schedule values are generated once for
    the whole budget (``t_1 .. t_{K+1}``).
    """
    x0 = np.asarray(x0, dtype=float)
    lam0 = np.asarray(lam0, dtype=float)
    if x0.shape != (instance.dim,):
        raise ValueError(f"x0 must have shape ({instance.dim},), got {x0.shape}")
    if lam0.shape != (instance.n_constraints,):
        raise ValueError(
            f"lam0 must have shape ({instance.n_constraints},), got {lam0.shape}")
    k_max = config.max_iter + 1
    if config.scaling is not None:
        t_seq, xi_seq = generate_scaled(config.scaling, k_max)
    else:
        t_seq = generate(config.schedule, k_max)
        xi_seq = np.ones_like(t_seq)
    return IterateState(x_curr=x0.copy(), x_prev=x0.copy(),
                        lam_curr=lam0.copy(), lam_prev=lam0.copy(),
                        k=1, t_seq=t_seq, xi_seq=xi_seq)


def extrapolate(state):
    """Momentum points ``(xbar_k, lambdabar_k)`` with weight
    ``(t_k - 1) / t_{k+1}``."""
    w = (state.t_curr - 1.0) / state.t_next
    xbar = state.x_curr + w * (state.x_curr - state.x_prev)
    lbar = state.lam_curr + w * (state.lam_curr - state.lam_prev)
    return xbar, lbar


def _wants_linear_path(instance, case):
    if case == "explicit":
        return True
    part = instance.objective if case == "implicit" else instance.objective.split[0]
    return part.quadratic is not None


def inner_tolerance(t_curr, policy):
    """Per-iteration inner gradient tolerance ``min(cap, 1e-2 / t_k^3)``."""
    return min(policy.tol_grad, INNER_TOL_SCALE / t_curr ** 3)


def step(state, config, instance, cache=None, inner_report=None):
    """Advance one outer iteration; returns the ``k+1`` state.

    ``config`` must be resolved (see :func:`resolve_config`).  When
    ``inner_report`` is a dict, the inner solver's iteration count,
    achieved gradient norm and the tolerance in force are recorded there.
    """
    eta = config.schedule.eta
    alpha_k, c_k = coefficients(state.t_next, eta)
    xbar, lbar = extrapolate(state)
    A = instance.A
    p_k = c_k * lbar - alpha_k * state.lam_curr
    r_k = alpha_k * (A @ state.x_curr) + instance.b
    gamma_eff = config.gamma * state.xi_next
    delta_eff = config.delta * state.xi_next
    if config.case == "explicit":
        anchor = instance.objective.gradient(xbar)
    elif config.case == "composite":
        anchor = instance.objective.split[1].gradient(xbar)
    else:
        anchor = None
    spec = SubproblemSpec(case=config.case, gamma=gamma_eff, beta=config.beta,
                          delta=delta_eff, c_k=c_k, p_k=p_k, r_k=r_k,
                          xbar_k=xbar, gradient_anchor=anchor)
    if _wants_linear_path(instance, config.case):
        x_next = solve_linear_case(spec, instance, cache)
        if inner_report is not None:
            inner_report.update(iterations=0, grad_norm=0.0, tol=None)
    else:
        tol = inner_tolerance(state.t_curr, config.inner)
        policy = replace(config.inner, tol_grad=tol)
        x_next = solve_inner_newton(spec, instance, policy, state.x_curr,
                                    report=inner_report)
        if inner_report is not None:
            inner_report["tol"] = tol
    lam_next = multiplier_update(lbar, delta_eff, c_k, A, x_next, r_k)
    if config.check_identities:
        lhs = c_k * lam_next - alpha_k * state.lam_curr
        rhs = p_k + delta_eff * c_k * (c_k * (A @ x_next) - r_k)
        err = np.linalg.norm(lhs - rhs)
        if err > IDENTITY_TOL * (1.0 + np.linalg.norm(rhs)):
            raise SolverError(
                f"dual-correction identity violated at k={state.k}: "
                f"deviation {err:.3e}")
    return IterateState(x_curr=x_next, x_prev=state.x_curr,
                        lam_curr=lam_next, lam_prev=state.lam_curr,
                        k=state.k + 1, t_seq=state.t_seq, xi_seq=state.xi_seq)


def step_coupled(state, config, instance):
    """Advance one iteration through the coupled primal-dual system.

    Solves the joint stationarity conditions

        gamma^{-1}(x - xbar) + g + A'(c_k lam - alpha_k lam_k)
            + beta A'(A x - b) = 0,
        delta^{-1}(lam - lambdabar) - c_k A x + alpha_k A x_k + b = 0,

    directly as one linear system in ``(x, lam)`` -- only available when
    the implicit part is (at most) quadratic.  This is an independent
    arithmetic path from :func:`step` and is used to cross-validate it.
    """
    eta = config.schedule.eta
    alpha_k, c_k = coefficients(state.t_next, eta)
    xbar, lbar = extrapolate(state)
    A = instance.A
    m, n = A.shape
    gamma_eff = config.gamma * state.xi_next
    delta_eff = config.delta * state.xi_next
    if config.case == "explicit":
        Q_eff, q_eff = None, None
        anchor = instance.objective.gradient(xbar)
    else:
        part = (instance.objective if config.case == "implicit"
                else instance.objective.split[0])
        if part.quadratic is None:
            raise ValueError("step_coupled needs a quadratic implicit part")
        Q_eff, q_eff = part.quadratic
        anchor = (instance.objective.split[1].gradient(xbar)
                  if config.case == "composite" else None)
    K = np.zeros((n + m, n + m))
    K[:n, :n] = config.beta * (A.T @ A)
    K[np.diag_indices(n)] += 1.0 / gamma_eff
    if Q_eff is not None:
        K[:n, :n] += Q_eff
    K[:n, n:] = c_k * A.T
    K[n:, :n] = -c_k * A
    K[n:, n:] = np.eye(m) / delta_eff
    rhs = np.empty(n + m)
    rhs[:n] = (xbar / gamma_eff + config.beta * (A.T @ instance.b)
               + alpha_k * (A.T @ state.lam_curr))
    if q_eff is not None:
        rhs[:n] -= q_eff
    if anchor is not None:
        rhs[:n] -= anchor
    rhs[n:] = lbar / delta_eff - instance.b - alpha_k * (A @ state.x_curr)
    sol = np.linalg.solve(K, rhs)
    resid = np.linalg.norm(K @ sol - rhs)
    if resid > 1e-10 * (1.0 + np.linalg.norm(rhs)):
        raise SolverError(f"coupled system residual {resid:.3e} too large")
    return IterateState(x_curr=sol[:n], x_prev=state.x_curr,
                        lam_curr=sol[n:], lam_prev=state.lam_curr,
                        k=state.k + 1, t_seq=state.t_seq, xi_seq=state.xi_seq)


def run(instance, config, x0, lam0, kkt=None, inner_log=None,
        use_coupled=False):
    """Run the loop for ``config.stop.max_iter`` iterations.

    Parameters
    ----------
    instance : ProblemInstance
    config : SolverConfig
        Resolved or not (it is resolved here either way).
    x0, lam0 : ndarray
        Starting point; the convention ``x_1 = x_0``, ``lam_1 = lam_0``
        makes the first extrapolation a no-op.
    kkt : KKTPoint, optional
        Reference for the gap/energy/objective-residual diagnostics.
        Without it those trace fields are NaN.
    inner_log : list, optional
        Receives one dict per iteration with the inner solver's tolerance
        and achieved gradient norm (Newton path only).
    use_coupled : bool
        Drive the trajectory with :func:`step_coupled` (test oracle).

    Returns
    -------
    (IterateState, list of TraceRecord)
        Final state and one record per completed iteration (record ``k``
        describes iterate ``x_k``, so the trace spans ``k = 2 .. K+1`` for
        a full ``K``-iteration run).  Two runs from identical inputs
        produce bit-identical traces.
    """
    config = resolve_config(instance, config)
    state = initial_state(instance, config, x0, lam0)
    cache = (LinearCache(instance, config.case, use_eig=config.use_eig)
             if _wants_linear_path(instance, config.case) else None)
    f_star = instance.objective.value(kkt.x) if kkt is not None else None
    eta = config.schedule.eta
    trace: List[TraceRecord] = []
    for _ in range(config.max_iter):
        if use_coupled:
            state = step_coupled(state, config, instance)
        else:
            report = {} if inner_log is not None else None
            state = step(state, config, instance, cache, inner_report=report)
            if report is not None:
                inner_log.append({"k": state.k, **report})
        rec = make_record(instance, state.k, state.t_curr,
                          state.x_curr, state.x_prev,
                          state.lam_curr, state.lam_prev,
                          config.gamma, config.delta, eta, config.beta,
                          xi_k=state.xi_curr, kkt=kkt, f_star=f_star)
        trace.append(rec)
        if config.stop.satisfied(rec.feas, rec.stat_res):
            break
    return state, trace
