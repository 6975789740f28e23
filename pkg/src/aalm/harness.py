"""Benchmark harness: JSON experiment configs, traces, and summaries.

An experiment runs a list of named solvers on one problem instance and
writes, into the output directory:

* ``<name>.trace.csv`` per solver -- one row per iteration with the exact
  header ``k,t_k,feas,obj_res,stat_res,gap_H,energy_E,step_norm_M,
  scaled_feas``;
* ``summary.csv`` -- one row per solver with the resolved configuration,
  final residuals, rate slopes fitted over the last half of the run, and
  little-o witnesses;
* the cached reference sidecar (``*.kkt.csv``);
* optionally ``plots.gp``, a gnuplot script laying the six standard
  panels (raw and ``t``-scaled residuals) out in a 2x3 grid.

Configs are strict: unknown keys anywhere are an error (fail-fast beats a
silently ignored typo).  Floats are serialized with ``repr`` so traces
round-trip exactly and re-running a config byte-identically reproduces its
outputs.  The environment variable ``AALM_OUTPUT_DIR`` overrides the
config's ``output_dir`` when set.

The non-accelerated baseline (:func:`vanilla_alm_step`) is the classical
proximal augmented Lagrangian iteration

    x_{k+1} = argmin f + <lam_k, Ax - b> + (beta/2)||Ax - b||^2
                     + (1/(2 gamma))||x - x_k||^2,
    lam_{k+1} = lam_k + delta (A x_{k+1} - b),

with the same implicit/linearized treatment of ``f`` as the accelerated
loop, so a comparison at equal stepsizes isolates the effect of the
momentum and dual corrections.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional

import numpy as np
import scipy.io
import scipy.sparse

from . import solver as aalm_solver
from .diagnostics import TRACE_FIELDS, TraceRecord, fit_rate, littleo_witness, \
    make_record
from .oracle import cached_reference, kkt_refine
from .problems import (make_lp_regression, make_qp, make_random_lp,
                       make_random_qp, make_ring_logistic)
from .schedule import ScaledSchedule, attouch_cabot, chambolle_dossal, \
    nesterov
from .solver import SolverConfig, StoppingRule, run
from .subsolver import (InnerSolverPolicy, LinearCache, SubproblemSpec,
                        multiplier_update, solve_inner_newton,
                        solve_linear_case)

# Fixed offset deriving the instance's stream from the master seed.
INSTANCE_SEED_OFFSET = 1000

RNG_NAME = "pcg64"


class ConfigError(ValueError):
    """An experiment config is malformed (unknown key, bad value, ...)."""


@dataclass(frozen=True)
class VanillaConfig:
    """Stepsizes of the non-accelerated baseline."""

    case: str = "explicit"
    gamma: Optional[float] = None
    delta: float = 1.0
    beta: float = 1.0
    inner: InnerSolverPolicy = field(default_factory=InnerSolverPolicy)


@dataclass(frozen=True)
class SolverEntry:
    """One named solver of an experiment: accelerated or vanilla."""

    name: str
    method: str  # "aalm" | "vanilla"
    config: object  # SolverConfig or VanillaConfig


@dataclass(frozen=True)
class ExperimentConfig:
    problem: dict
    solvers: List[SolverEntry]
    iterations: int
    seed: int = 0
    output_dir: str = "results"
    emit_gnuplot: bool = False
    reference_budget: int = 100_000

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if not self.solvers:
            raise ConfigError("at least one solver is required")
        names = [s.name for s in self.solvers]
        for n in names:
            if names.count(n) > 1:
                raise ConfigError(f"duplicate solver name {n!r}")


def _check_keys(block, allowed, context):
    unknown = sorted(set(block) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {context}")


def _parse_schedule(block):
    _check_keys(block, {"rule", "alpha", "rho", "eta"}, "schedule")
    rule = block.get("rule")
    eta = block.get("eta")
    if rule in ("nesterov",):
        sched = nesterov(eta=eta)
    elif rule in ("chambolle-dossal", "cd"):
        sched = chambolle_dossal(block.get("alpha", 10.0), eta=eta)
    elif rule in ("attouch-cabot", "ac"):
        sched = attouch_cabot(block.get("alpha", 10.0), eta=eta)
    else:
        raise ConfigError(f"unknown schedule rule {rule!r}")
    if "rho" in block:
        sched = replace(sched, rho=float(block["rho"]))
    return sched


def _parse_scaling(block, base):
    _check_keys(block, {"form", "exponent"}, "scaling")
    form = block.get("form")
    if form == "t-power":
        e = float(block.get("exponent", 0.5))
        return ScaledSchedule(base=base, xi=lambda t: t ** e, xi_of_t=True)
    if form == "constant":
        return ScaledSchedule(base=base, xi=None)
    raise ConfigError(f"unknown scaling form {form!r}")


def _parse_stop(block, iterations):
    _check_keys(block, {"feas_tol", "stat_tol"}, "stop")
    return StoppingRule(max_iter=iterations,
                        feas_tol=block.get("feas_tol"),
                        stat_tol=block.get("stat_tol"))


def _parse_solver(block, iterations):
    _check_keys(block, {"name", "method", "case", "schedule", "gamma",
                        "delta", "beta", "scaling", "stop", "use_eig",
                        "inner_tol", "max_inner"}, "solver entry")
    name = block.get("name")
    if not name:
        raise ConfigError("every solver entry needs a name")
    method = block.get("method", "aalm")
    inner = InnerSolverPolicy(
        tol_grad=block.get("inner_tol", 1e-8),
        max_inner=block.get("max_inner", 50))
    if method == "vanilla":
        for bad in ("schedule", "scaling", "stop", "use_eig"):
            if bad in block:
                raise ConfigError(f"{bad!r} does not apply to the vanilla "
                                  f"baseline (solver {name!r})")
        cfg = VanillaConfig(case=block.get("case", "explicit"),
                            gamma=block.get("gamma"),
                            delta=block.get("delta", 1.0),
                            beta=block.get("beta", 1.0), inner=inner)
    elif method == "aalm":
        if "schedule" not in block:
            raise ConfigError(f"solver {name!r} needs a schedule")
        sched = _parse_schedule(block["schedule"])
        scaling = (_parse_scaling(block["scaling"], sched)
                   if "scaling" in block else None)
        stop = (_parse_stop(block["stop"], iterations)
                if "stop" in block else None)
        cfg = SolverConfig(schedule=sched, case=block.get("case", "explicit"),
                           gamma=block.get("gamma"),
                           delta=block.get("delta", 1.0),
                           beta=block.get("beta", 1.0), scaling=scaling,
                           max_iter=iterations, stop=stop, inner=inner,
                           use_eig=block.get("use_eig", False))
    else:
        raise ConfigError(f"unknown method {method!r} (solver {name!r})")
    return SolverEntry(name=name, method=method, config=cfg)


def parse_config(source):
    """Parse an experiment config from a JSON file path or a dict.

    Raises :class:`ConfigError` on any unknown key or malformed value.
    """
    if isinstance(source, (str, Path)):
        try:
            with open(source) as f:
                raw = json.load(f)
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"malformed JSON in {source}: {e}") from None
    else:
        raw = source
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys(raw, {"problem", "solvers", "iterations", "seed",
                      "output_dir", "emit_gnuplot", "reference_budget"},
                "config")
    for key in ("problem", "solvers", "iterations"):
        if key not in raw:
            raise ConfigError(f"config needs {key!r}")
    iterations = int(raw["iterations"])
    solvers = [_parse_solver(b, iterations) for b in raw["solvers"]]
    return ExperimentConfig(problem=raw["problem"], solvers=solvers,
                            iterations=iterations,
                            seed=int(raw.get("seed", 0)),
                            output_dir=raw.get("output_dir", "results"),
                            emit_gnuplot=bool(raw.get("emit_gnuplot", False)),
                            reference_budget=int(raw.get("reference_budget",
                                                         100_000)))


# ---------------------------------------------------------------------------
# Instances from config blocks and manifest files.

def _load_array(path):
    path = str(path)
    if path.endswith(".mtx"):
        mat = scipy.io.mmread(path)
        if scipy.sparse.issparse(mat):
            mat = mat.toarray()
        return np.asarray(mat, dtype=float)
    return np.loadtxt(path, delimiter=",", dtype=float)


def load_manifest(path):
    """Instance from a manifest binding an objective to matrix files.

    The manifest is JSON with keys ``name``, ``objective``, ``A``, ``b``;
    matrix paths (``.mtx`` Matrix Market or ``.csv`` dense) are resolved
    relative to the manifest's directory.  Objective kinds: ``qp`` (keys
    ``Q``, ``q``) and ``lp-regression`` (keys ``B``, ``c``, ``p``).
    """
    path = Path(path)
    try:
        with open(path) as f:
            raw = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read manifest: {e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed JSON in {path}: {e}") from None
    _check_keys(raw, {"name", "objective", "A", "b"}, "manifest")
    for key in ("objective", "A", "b"):
        if key not in raw:
            raise ConfigError(f"manifest needs {key!r}")
    base = path.parent
    A = np.atleast_2d(_load_array(base / raw["A"]))
    b = np.atleast_1d(_load_array(base / raw["b"]))
    obj = raw["objective"]
    kind = obj.get("kind")
    name = raw.get("name", path.stem)
    if kind == "qp":
        _check_keys(obj, {"kind", "Q", "q"}, "objective")
        Q = np.atleast_2d(_load_array(base / obj["Q"]))
        q = np.atleast_1d(_load_array(base / obj["q"]))
        return make_qp(Q, q, A, b, name=name)
    if kind == "lp-regression":
        _check_keys(obj, {"kind", "B", "c", "p"}, "objective")
        B = np.atleast_2d(_load_array(base / obj["B"]))
        c = np.atleast_1d(_load_array(base / obj["c"]))
        return make_lp_regression(B, c, float(obj["p"]), A, b, name=name)
    raise ConfigError(f"unknown objective kind {kind!r}")


def build_problem(block, master_seed=0):
    """Instance from a config ``problem`` block (builtin or manifest)."""
    if "manifest" in block:
        _check_keys(block, {"manifest"}, "problem")
        return load_manifest(block["manifest"])
    _check_keys(block, {"builtin", "n", "m", "cond", "d", "p",
                        "n_constraints", "p_agents", "m_dim", "rho_reg",
                        "seed"}, "problem")
    builtin = block.get("builtin")
    seed = int(block.get("seed", master_seed + INSTANCE_SEED_OFFSET))
    if builtin == "qp":
        return make_random_qp(n=block.get("n", 50), m=block.get("m", 10),
                              seed=seed, cond=block.get("cond", 10.0))
    if builtin == "lp-regression":
        return make_random_lp(d=block.get("d", 30), n=block.get("n", 20),
                              p=block.get("p", 1.5),
                              n_constraints=block.get("n_constraints", 1),
                              seed=seed)
    if builtin == "ring-logistic":
        return make_ring_logistic(p_agents=block.get("p_agents", 10),
                                  m_dim=block.get("m_dim", 200),
                                  rho_reg=block.get("rho_reg", 0.5),
                                  seed=seed)
    raise ConfigError(f"unknown builtin problem {builtin!r}")


# ---------------------------------------------------------------------------
# The vanilla (non-accelerated) proximal ALM baseline.

def vanilla_alm_step(state, vcfg, instance, cache=None):
    """One proximal ALM iteration (no extrapolation, no dual correction).

    Encoded through the shared subproblem machinery with ``c_k = 0``,
    ``p_k = lam_k``, ``xbar = x_k`` followed by the plain dual ascent
    ``lam + delta (A x_{k+1} - b)``.
    """
    spec = SubproblemSpec(
        case=vcfg.case, gamma=vcfg.gamma, beta=vcfg.beta, delta=vcfg.delta,
        c_k=0.0, p_k=state.lam_curr, r_k=np.zeros_like(state.lam_curr),
        xbar_k=state.x_curr,
        gradient_anchor=(instance.objective.gradient(state.x_curr)
                         if vcfg.case == "explicit" else None))
    if aalm_solver._wants_linear_path(instance, vcfg.case):
        x_next = solve_linear_case(spec, instance, cache)
    else:
        tol = aalm_solver.inner_tolerance(state.t_curr, vcfg.inner)
        policy = replace(vcfg.inner, tol_grad=tol)
        x_next = solve_inner_newton(spec, instance, policy, state.x_curr)
    lam_next = multiplier_update(state.lam_curr, vcfg.delta, 1.0,
                                 instance.A, x_next, instance.b)
    return aalm_solver.IterateState(
        x_curr=x_next, x_prev=state.x_curr, lam_curr=lam_next,
        lam_prev=state.lam_curr, k=state.k + 1, t_seq=state.t_seq,
        xi_seq=state.xi_seq)


def run_vanilla(instance, vcfg, iterations, x0, lam0, kkt=None,
                use_eig=False):
    """Run the baseline; returns ``(state, trace)`` like :func:`aalm.solver.run`.

    Records carry ``t_k = 1`` (no schedule) and NaN energy; the gap and
    residual fields are directly comparable with accelerated traces.
    """
    obj = instance.objective
    if vcfg.case == "explicit" and obj.lipschitz is None:
        raise ValueError("explicit baseline needs a Lipschitz constant")
    gamma = vcfg.gamma
    if gamma is None:
        gamma = 1.0 / obj.lipschitz if vcfg.case == "explicit" else 1.0
    vcfg = replace(vcfg, gamma=float(gamma))
    ones = np.ones(iterations + 1)
    state = aalm_solver.IterateState(
        x_curr=np.asarray(x0, dtype=float).copy(),
        x_prev=np.asarray(x0, dtype=float).copy(),
        lam_curr=np.asarray(lam0, dtype=float).copy(),
        lam_prev=np.asarray(lam0, dtype=float).copy(),
        k=1, t_seq=ones, xi_seq=ones)
    cache = (LinearCache(instance, vcfg.case, use_eig=use_eig)
             if aalm_solver._wants_linear_path(instance, vcfg.case) else None)
    f_star = obj.value(kkt.x) if kkt is not None else None
    trace = []
    for _ in range(iterations):
        state = vanilla_alm_step(state, vcfg, instance, cache)
        rec = make_record(instance, state.k, 1.0, state.x_curr, state.x_prev,
                          state.lam_curr, state.lam_prev, vcfg.gamma,
                          vcfg.delta, 1.0, vcfg.beta, kkt=kkt, f_star=f_star)
        # No Lyapunov certificate applies to the baseline.
        trace.append(replace(rec, energy_E=float("nan")))
    return state, trace


# ---------------------------------------------------------------------------
# Trace and summary serialization.

def write_trace_csv(path, trace):
    """Serialize records with the canonical header; floats via repr."""
    with open(path, "w") as f:
        f.write(",".join(TRACE_FIELDS) + "\n")
        for r in trace:
            vals = [str(r.k)] + [repr(float(getattr(r, name)))
                                 for name in TRACE_FIELDS[1:]]
            f.write(",".join(vals) + "\n")


def read_trace_csv(path):
    """Inverse of :func:`write_trace_csv`."""
    with open(path) as f:
        header = f.readline().strip().split(",")
        if tuple(header) != TRACE_FIELDS:
            raise ValueError(f"unexpected trace header {header}")
        out = []
        for line in f:
            parts = line.strip().split(",")
            out.append(TraceRecord(int(parts[0]),
                                   *[float(v) for v in parts[1:]]))
    return out


SUMMARY_FIELDS = ("name", "method", "case", "schedule", "gamma", "delta",
                  "beta", "rho", "eta", "iterations", "seed", "rng",
                  "reference", "final_feas", "final_obj_res",
                  "final_stat_res", "slope_feas", "r2_feas", "slope_obj_res",
                  "r2_obj_res", "witness_t2_feas", "witness_t2_obj", "status")


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_summary_csv(path, rows):
    with open(path, "w") as f:
        f.write(",".join(SUMMARY_FIELDS) + "\n")
        for row in rows:
            f.write(",".join(_fmt(row[k]) for k in SUMMARY_FIELDS) + "\n")


def _schedule_label(entry):
    if entry.method == "vanilla":
        return ""
    sched = entry.config.schedule
    label = sched.rule
    if sched.alpha is not None:
        label += f"({sched.alpha:g})"
    if entry.config.scaling is not None:
        label += "+scaled"
    return label


def summarize_trace(trace):
    """Rate slopes over the last half of the run plus little-o witnesses."""
    nan = float("nan")
    out = {"slope_feas": nan, "r2_feas": nan, "slope_obj_res": nan,
           "r2_obj_res": nan, "witness_t2_feas": nan, "witness_t2_obj": nan}
    if len(trace) < 2:
        return out
    k_mid = trace[len(trace) // 2].k
    k_last = trace[-1].k
    for fld, s_key, r_key in (("feas", "slope_feas", "r2_feas"),
                              ("obj_res", "slope_obj_res", "r2_obj_res")):
        try:
            est = fit_rate(trace, fld, (k_mid, k_last))
            out[s_key], out[r_key] = est.slope, est.r_squared
        except ValueError:
            pass
    for fld, key in (("feas", "witness_t2_feas"), ("obj_res",
                                                   "witness_t2_obj")):
        try:
            out[key] = littleo_witness(trace, fld, k_mid, k_last)
        except ValueError:
            pass
    return out


def run_experiment(config):
    """Execute an :class:`ExperimentConfig`; returns the summary rows.

    Per-solver failures are recorded in the ``status`` column without
    aborting the remaining solvers.  Outputs land in ``output_dir``
    (overridden by ``$AALM_OUTPUT_DIR`` when set).
    """
    out_dir = Path(os.environ.get("AALM_OUTPUT_DIR") or config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    instance = build_problem(config.problem, config.seed)
    seed = int(config.problem.get("seed",
                                  config.seed + INSTANCE_SEED_OFFSET)) \
        if "manifest" not in config.problem else -1
    try:
        kkt = cached_reference(
            instance, out_dir,
            compute=lambda inst: kkt_refine(inst,
                                            budget=config.reference_budget))
        ref_status = f"kkt_tol={kkt.kkt_tol:.3e}"
    except Exception as e:
        kkt = None
        ref_status = f"failed: {type(e).__name__}"
    rows = []
    x0 = np.zeros(instance.dim)
    lam0 = np.zeros(instance.n_constraints)
    for entry in config.solvers:
        nan = float("nan")
        row = {k: nan for k in SUMMARY_FIELDS}
        row.update(name=entry.name, method=entry.method, case="",
                   schedule=_schedule_label(entry), iterations=0, seed=seed,
                   rng=RNG_NAME, reference=ref_status, status="ok")
        try:
            if entry.method == "aalm":
                cfg = replace(entry.config,
                              stop=replace(entry.config.stop,
                                           max_iter=config.iterations))
                resolved = aalm_solver.resolve_config(instance, cfg)
                _, trace = run(instance, resolved, x0, lam0, kkt=kkt)
                row.update(case=resolved.case, gamma=resolved.gamma,
                           delta=resolved.delta, beta=resolved.beta,
                           rho=resolved.schedule.rho,
                           eta=resolved.schedule.eta)
            else:
                vcfg = entry.config
                if vcfg.gamma is None:
                    gamma = (1.0 / instance.objective.lipschitz
                             if vcfg.case == "explicit" else 1.0)
                    vcfg = replace(vcfg, gamma=float(gamma))
                _, trace = run_vanilla(instance, vcfg, config.iterations,
                                       x0, lam0, kkt=kkt)
                row.update(case=vcfg.case, gamma=vcfg.gamma,
                           delta=vcfg.delta, beta=vcfg.beta)
            write_trace_csv(out_dir / f"{entry.name}.trace.csv", trace)
            row.update(iterations=len(trace),
                       final_feas=trace[-1].feas,
                       final_obj_res=trace[-1].obj_res,
                       final_stat_res=trace[-1].stat_res,
                       **summarize_trace(trace))
        except Exception as e:  # record and continue with the next solver
            row["status"] = f"failed: {type(e).__name__}: {e}"
        rows.append(row)
    write_summary_csv(out_dir / "summary.csv", rows)
    if config.emit_gnuplot:
        write_gnuplot(out_dir / "plots.gp",
                      [e.name for e in config.solvers])
    return rows


GNUPLOT_PANELS = (
    ("objective residual", "1:4"),
    ("feasibility", "1:3"),
    ("stationarity", "1:5"),
    ("t^2 * objective residual", "1:($2**2*$4)"),
    ("t^2 * feasibility", "1:($2**2*$3)"),
    ("t * stationarity", "1:($2*$5)"),
)


def write_gnuplot(path, names):
    """Emit a gnuplot script with the six standard panels (2x3 grid)."""
    lines = [
        "# gnuplot script generated by the benchmark harness",
        "set datafile separator ','",
        "set terminal pngcairo size 1500,900",
        "set output 'panels.png'",
        "set multiplot layout 2,3",
        "set logscale xy",
        "set format y '%.0e'",
        "set key left bottom",
    ]
    for title, using in GNUPLOT_PANELS:
        lines.append(f"set title '{title}'")
        plots = ", ".join(
            f"'{n}.trace.csv' every ::1 using {using} with lines "
            f"title '{n}'" for n in names)
        lines.append("plot " + plots)
    lines.append("unset multiplot")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
