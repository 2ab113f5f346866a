"""Command-line front end.

Subcommands: ``solve``, ``compare``, ``verify`` and ``list-instances``.
Settings come from built-in defaults, then a JSON ``--config`` file, then
command-line flags; later sources win.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .core import adjoint_consistency_check
from .diagnostics import LyapunovUnderflowError, measure_rate, theoretical_rate
from .problems import INSTANCES, make_instance, recover_dual, taut_string_tv
from .solver import (COLUMNS, ConfigError, SolverConfig, SolveTrace, loris_verhoeven_step_solver,
                     nested_primal_dual, optimality_residuals, proximal_gradient, validate_config)

SOLVERS = ("nested", "lv17", "proxgrad")
ORACLE_RESIDUAL_TOL = 1e-8
CONVERGENCE_TOL = 1e-6
LYAPUNOV_RTOL = 1e-9
GRID_ALPHA = (0.5, 1.0, 1.9)
GRID_BETA = (0.3, 0.6, 0.95)
GRID_KMAX = (1, 2, 5, 20)
RATE_ALPHA = (0.5, 1.0, 1.5)
RATE_KMAX = (1, 3)
# rate runs continue well past the point where the Lyapunov value drops under 1e-14
RATE_RUN_TOL = 1e-10


# ---------------------------------------------------------------------------
# Run specification


@dataclass
class RunConfig:
    alpha: Optional[float] = None
    beta: Optional[float] = None
    alpha_scale: float = 1.0
    beta_scale: float = 0.9
    k_max: int = 3
    start_mode: str = "warm"
    max_outer: Optional[int] = None
    outer_tol: float = 1e-10
    trace_every: int = 1


@dataclass
class RunSpec:
    instance: dict = field(default_factory=lambda: {"name": "tv-1d", "params": {}, "seed": None})
    solver: str = "nested"
    config: RunConfig = field(default_factory=RunConfig)
    outputs: dict = field(default_factory=lambda: {"trace_path": "trace.csv",
                                                   "report_path": "report.json"})
    comparisons: list = field(default_factory=list)
    unsafe: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunSpec":
        data = dict(data)
        unknown = set(data) - {"instance", "solver", "config", "outputs", "comparisons", "unsafe"}
        if unknown:
            raise ValueError(f"unknown run-spec keys: {sorted(unknown)}")
        spec = cls()
        if "instance" in data:
            inst = {"name": "tv-1d", "params": {}, "seed": None}
            inst.update(data["instance"])
            inst["params"] = dict(inst.get("params") or {})
            spec.instance = inst
        if "solver" in data:
            spec.solver = data["solver"]
        if "config" in data:
            spec.config = RunConfig(**{**asdict(RunConfig()), **data["config"]})
        if "outputs" in data:
            spec.outputs = {**spec.outputs, **data["outputs"]}
        if "comparisons" in data:
            spec.comparisons = [dict(c) for c in data["comparisons"]]
        if "unsafe" in data:
            spec.unsafe = bool(data["unsafe"])
        return spec

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "RunSpec":
        return cls.from_dict(json.loads(text))


def build_instance(spec: RunSpec):
    params = dict(spec.instance.get("params") or {})
    if spec.instance.get("seed") is not None:
        params["seed"] = int(spec.instance["seed"])
    return make_instance(spec.instance["name"], **params)


def solver_config(spec: RunSpec, instance, variant: Optional[dict] = None) -> SolverConfig:
    c = spec.config
    variant = variant or {}
    L, nA = instance.constants.L, instance.problem.A.norm_bound
    alpha = c.alpha if c.alpha is not None else c.alpha_scale / L
    beta = c.beta if c.beta is not None else c.beta_scale / nA**2
    return SolverConfig(
        alpha=alpha, beta=beta,
        k_max=int(variant.get("k_max", c.k_max)),
        start_mode=variant.get("start_mode", c.start_mode),
        max_outer=int(c.max_outer if c.max_outer is not None else instance.documented_budget),
        outer_tol=float(c.outer_tol),
        trace_every=int(c.trace_every),
        unsafe=spec.unsafe,
    )


# ---------------------------------------------------------------------------
# Serialization


def fmt(x) -> str:
    """Shortest round-trip text for a float; empty for absent values."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


def trace_csv(trace: SolveTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for row in trace.rows():
        final_diverged = trace.diverged_at is not None and row[0] == trace.diverged_at
        cells = []
        for x in row:
            if x is not None and not final_diverged and not math.isfinite(float(x)):
                x = None
            cells.append(fmt(x))
        w.writerow(cells)
    return buf.getvalue()


def _write(path, text):
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _dump_json(path, data):
    _write(path, json.dumps(_json_safe(data), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Running


def run_solver(spec: RunSpec, instance, variant=None):
    """Run the configured solver; returns ``(outcome, config)``."""
    cfg = solver_config(spec, instance, variant)
    problem = instance.problem
    ref = instance.reference
    if spec.solver == "nested":
        return nested_primal_dual(problem, cfg, reference=ref), cfg
    if spec.solver == "lv17":
        if cfg.k_max != 1:
            raise ConfigError("solver lv17 needs k_max = 1")
        return loris_verhoeven_step_solver(problem, cfg, reference=ref), cfg
    if spec.solver == "proxgrad":
        if not problem.g.is_zero:
            raise ConfigError("solver proxgrad needs an instance with g = 0")
        validate_config(problem, cfg)
        return _proxgrad_outcome(problem, cfg), cfg
    raise ConfigError(f"unknown solver {spec.solver!r}; choose from {SOLVERS}")


def _proxgrad_outcome(problem, cfg):
    iterates = []

    def keep(n, u):
        if n == 0 or n % cfg.trace_every == 0:
            iterates.append((n, u.copy()))

    out = proximal_gradient(problem.f, problem.h, cfg.alpha, np.zeros(problem.dim) if cfg.u0 is None else cfg.u0,
                            max_iter=cfg.max_outer, tol=cfg.outer_tol, callback=keep)
    if iterates[-1][0] != out.outer_iterations:
        iterates.append((out.outer_iterations, out.u_final))
    trace = SolveTrace()
    zero_v = np.zeros(problem.dual_dim)
    obj = dict(zip(out.trace.n, out.trace.objective))
    for n, u in iterates:
        if not np.all(np.isfinite(u)):
            trace.diverged_at = n
            trace.append(n=n, objective=math.nan)
            continue
        r_p, r_d = optimality_residuals(problem, u, zero_v, cfg.alpha, cfg.beta)
        trace.append(n=n, objective=obj.get(n), r_p=r_p, r_d=r_d)
    out.trace = trace
    out.v_final = zero_v
    return out


def _rate_report(instance, cfg, trace):
    if not (instance.supports_rate_check and trace.has_reference):
        return None
    c = instance.constants
    try:
        eps = theoretical_rate(c.mu, c.L, cfg.alpha, cfg.beta, c.sigma, instance.problem.A.norm_bound)
        return measure_rate(trace, eps).as_dict()
    except (ValueError, LyapunovUnderflowError) as exc:
        return {"epsilon_bound": None, "max_measured": None, "satisfied": None, "note": str(exc)}


def summarize(instance, cfg, outcome, spec, wall):
    tr = outcome.trace
    dist = None
    if instance.oracle_solution is not None and np.all(np.isfinite(outcome.u_final)):
        dist = float(np.linalg.norm(outcome.u_final - instance.oracle_solution))
    return {
        "status": outcome.status,
        "iterations": outcome.outer_iterations,
        "final_residuals": {"r_p": tr.r_p[-1] if len(tr) else None,
                            "r_d": tr.r_d[-1] if len(tr) else None},
        "distance_to_oracle": dist,
        "rate": _rate_report(instance, cfg, tr) if spec.solver != "proxgrad" else None,
        "config_echo": {**asdict(spec.config), "solver": spec.solver, "alpha_used": cfg.alpha,
                        "beta_used": cfg.beta, "k_max_used": cfg.k_max,
                        "start_mode_used": cfg.start_mode, "max_outer_used": cfg.max_outer},
        "unsafe_used": bool(spec.unsafe),
        "instance": instance.describe(),
        "wall_time": wall,
    }


def cmd_solve(spec: RunSpec, out_dir: str = ".") -> dict:
    instance = build_instance(spec)
    t0 = time.perf_counter()
    outcome, cfg = run_solver(spec, instance)
    wall = time.perf_counter() - t0
    report = summarize(instance, cfg, outcome, spec, wall)
    _write(os.path.join(out_dir, spec.outputs["trace_path"]), trace_csv(outcome.trace))
    _dump_json(os.path.join(out_dir, spec.outputs["report_path"]), report)
    return report


def _variant_label(v):
    return f"{v.get('start_mode', 'warm')}_k{v.get('k_max')}"


def cmd_compare(spec: RunSpec, out_dir: str = ".") -> dict:
    if len(spec.comparisons) < 2:
        raise ConfigError("compare needs at least two variants")
    instance = build_instance(spec)
    runs = []
    for v in spec.comparisons:
        variant = {"start_mode": v.get("start_mode", spec.config.start_mode),
                   "k_max": int(v.get("k_max", spec.config.k_max))}
        t0 = time.perf_counter()
        outcome, cfg = run_solver(spec, instance, variant)
        runs.append((variant, outcome, cfg, time.perf_counter() - t0))

    labels = []
    for i, (variant, *_rest) in enumerate(runs):
        label = _variant_label(variant)
        labels.append(label if label not in labels else f"{label}_{i}")
    finals = [o.u_final for _, o, _, _ in runs]
    pairwise = {}
    for i in range(len(runs)):
        for j in range(i + 1, len(runs)):
            pairwise[f"{labels[i]}|{labels[j]}"] = float(np.linalg.norm(finals[i] - finals[j]))
    report = {
        "variants": {lab: summarize(instance, cfg, o, spec, wall)
                     for lab, (_, o, cfg, wall) in zip(labels, runs)},
        "pairwise_distances": pairwise,
        "unsafe_used": bool(spec.unsafe),
    }

    steps = sorted({n for _, o, _, _ in runs for n in o.trace.n})
    cols = [dict(zip(o.trace.n, o.trace.r_p)) for _, o, _, _ in runs]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", *[f"r_p[{lab}]" for lab in labels]])
    for n in steps:
        cells = []
        for c in cols:
            x = c.get(n)
            cells.append(fmt(x if x is not None and math.isfinite(x) else None))
        w.writerow([str(n), *cells])
    _write(os.path.join(out_dir, spec.outputs.get("compare_trace_path", "compare.csv")), buf.getvalue())
    _dump_json(os.path.join(out_dir, spec.outputs.get("compare_report_path", "compare.json")), report)
    return report


# ---------------------------------------------------------------------------
# Verification


def _check(results, name, passed, **detail):
    results.append({"check": name, "passed": bool(passed), **detail})


def load_oracle_file(path, dim):
    with open(path) as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"oracle file {path} is not valid JSON: {exc}") from None
    if isinstance(data, dict):
        data = data.get("u", data.get("oracle_solution"))
    arr = np.asarray(data, dtype=float)
    if arr.shape != (dim,):
        raise ValueError(f"oracle file {path} holds shape {arr.shape}, expected ({dim},)")
    return arr


def verification_runs(instance, alphas=GRID_ALPHA, betas=GRID_BETA, kmaxes=GRID_KMAX,
                      tol=CONVERGENCE_TOL, budget=None, reference=None):
    """Warm-start runs over a step-size grid with reference columns."""
    c = instance.constants
    nA = instance.problem.A.norm_bound
    budget = instance.documented_budget if budget is None else budget
    reference = instance.reference if reference is None else reference
    for a in alphas:
        for b in betas:
            for k in kmaxes:
                cfg = SolverConfig(alpha=a / c.L, beta=b / nA**2, k_max=k, max_outer=budget,
                                   outer_tol=tol)
                yield (a, b, k), cfg, nested_primal_dual(instance.problem, cfg, reference=reference)


def lyapunov_monotone(lyap, rtol=LYAPUNOV_RTOL):
    return all(b <= a * (1.0 + rtol) for a, b in zip(lyap[:-1], lyap[1:]))


def cmd_verify(name, params, oracle_path=None, quick=False):
    """Run the checks relevant to an instance; returns the list of check results."""
    instance = make_instance(name, **params)
    problem = instance.problem
    c = instance.constants
    results = []

    u_hat, v_hat = instance.oracle_solution, instance.oracle_dual
    if oracle_path is not None:
        try:
            u_hat = load_oracle_file(oracle_path, problem.dim)
        except (OSError, ValueError) as exc:
            _check(results, "oracle_residuals", False, error=str(exc))
            return results
        v_hat = recover_dual(problem, u_hat, max_iter=200_000)
    alpha, beta = 1.0 / c.L, 0.5 / problem.A.norm_bound**2
    r_p, r_d = optimality_residuals(problem, u_hat, v_hat, alpha, beta)
    _check(results, "oracle_residuals", max(r_p, r_d) <= ORACLE_RESIDUAL_TOL, r_p=r_p, r_d=r_d,
           tol=ORACLE_RESIDUAL_TOL)
    if oracle_path is not None and max(r_p, r_d) > ORACLE_RESIDUAL_TOL:
        return results

    disc = adjoint_consistency_check(problem.A, trials=100, seed=0)
    _check(results, "adjoint_consistency", disc <= 1e-10, discrepancy=disc)
    M = problem.A.to_dense()
    sv = np.linalg.svd(M, compute_uv=False)
    _check(results, "norm_bound", sv[0] <= problem.A.norm_bound * (1 + 1e-12),
           norm_bound=problem.A.norm_bound, svd_norm=float(sv[0]))
    if c.sigma is not None:
        _check(results, "sigma_matches_svd", abs(c.sigma - sv[-1]) <= 1e-10,
               declared=c.sigma, svd=float(sv[-1]))

    if name == "tv-1d":
        b = instance.data
        ts = taut_string_tv(b, instance.params["lam"])
        from .innerloop import dual_fixed_point_converged
        res = dual_fixed_point_converged(problem.h, problem.g, problem.A, b, 1.0,
                                         1.0 / problem.A.norm_bound**2, tol=1e-12)
        gap = float(np.max(np.abs(ts - res.prox_point)))
        _check(results, "taut_string_vs_converged_dual", gap <= 1e-8, max_abs_gap=gap)

    if quick:
        return results

    reference = (u_hat, v_hat)
    failures_conv, failures_lyap = [], []
    for key, cfg, out in verification_runs(instance, reference=reference):
        rp, rd = out.trace.r_p[-1], out.trace.r_d[-1]
        if out.status != "converged" or max(rp, rd) > CONVERGENCE_TOL:
            failures_conv.append(list(key))
        if not lyapunov_monotone(out.trace.lyapunov):
            failures_lyap.append(list(key))
    _check(results, "convergence_grid", not failures_conv, failing=failures_conv,
           budget=instance.documented_budget)
    _check(results, "lyapunov_monotone", not failures_lyap, failing=failures_lyap)

    if instance.supports_rate_check:
        worst, failing = 0.0, []
        nA = problem.A.norm_bound
        for key, cfg, out in verification_runs(instance, RATE_ALPHA, GRID_BETA, RATE_KMAX,
                                               tol=RATE_RUN_TOL, reference=reference):
            eps = theoretical_rate(c.mu, c.L, cfg.alpha, cfg.beta, c.sigma, nA)
            try:
                rep = measure_rate(out.trace, eps)
            except LyapunovUnderflowError:
                continue
            worst = max(worst, rep.max_measured - eps)
            if not rep.satisfied:
                failing.append(list(key))
        _check(results, "rate", not failing, failing=failing, worst_excess=worst)
    return results


# ---------------------------------------------------------------------------
# Argument parsing


def _parse_params(items):
    params = {}
    for item in items or []:
        if "=" not in item:
            raise ValueError(f"--param expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            params[k] = json.loads(v)
        except json.JSONDecodeError:
            params[k] = v
    return params


def _parse_variant(text):
    mode, _, k = text.partition(":")
    if mode not in ("warm", "cold") or not k:
        raise ValueError(f"--variant expects warm:K or cold:K, got {text!r}")
    return {"start_mode": mode, "k_max": int(k)}


def _spec_from_args(args) -> RunSpec:
    spec = RunSpec()
    if args.config:
        with open(args.config) as fh:
            spec = RunSpec.loads(fh.read())
    if args.instance:
        spec.instance = {"name": args.instance, "params": {}, "seed": None}
    if args.param:
        spec.instance["params"].update(_parse_params(args.param))
    if args.seed is not None:
        spec.instance["seed"] = args.seed
    if args.solver:
        spec.solver = args.solver
    for attr in ("alpha", "beta", "alpha_scale", "beta_scale", "k_max", "start_mode",
                 "max_outer", "outer_tol", "trace_every"):
        val = getattr(args, attr, None)
        if val is not None:
            setattr(spec.config, attr, val)
    if args.unsafe:
        spec.unsafe = True
    if getattr(args, "variant", None):
        spec.comparisons = [_parse_variant(v) for v in args.variant]
    return spec


def _add_run_options(p):
    p.add_argument("--config", help="JSON run specification")
    p.add_argument("--instance", choices=sorted(INSTANCES))
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="instance parameter")
    p.add_argument("--seed", type=int)
    p.add_argument("--solver", choices=SOLVERS)
    p.add_argument("--alpha", type=float, help="absolute step (overrides --alpha-scale)")
    p.add_argument("--beta", type=float, help="absolute dual step (overrides --beta-scale)")
    p.add_argument("--alpha-scale", type=float, help="alpha in units of 1/L")
    p.add_argument("--beta-scale", type=float, help="beta in units of 1/||A||^2")
    p.add_argument("--k-max", type=int)
    p.add_argument("--start-mode", choices=("warm", "cold"))
    p.add_argument("--max-outer", type=int)
    p.add_argument("--outer-tol", type=float)
    p.add_argument("--trace-every", type=int)
    p.add_argument("--unsafe", action="store_true",
                   help="allow step sizes outside the convergence conditions and cold starts")
    p.add_argument("--out", default=".", help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="nestedpd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_options(sub.add_parser("solve", help="run one solver and write trace + report"))
    pc = sub.add_parser("compare", help="run several (start_mode, k_max) variants")
    _add_run_options(pc)
    pc.add_argument("--variant", action="append", metavar="MODE:K", help="e.g. warm:2 or cold:2")
    pv = sub.add_parser("verify", help="check an instance's oracle, Lyapunov decrease and rate")
    pv.add_argument("instance", choices=sorted(INSTANCES))
    pv.add_argument("--param", action="append", metavar="KEY=VALUE")
    pv.add_argument("--seed", type=int)
    pv.add_argument("--oracle", help="JSON file with a candidate minimizer to check instead")
    pv.add_argument("--quick", action="store_true", help="skip the solver grids")
    pv.add_argument("--out", default=".")
    sub.add_parser("list-instances", help="print the registered instances")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "list-instances":
            for name, (_, defaults) in sorted(INSTANCES.items()):
                print(json.dumps({"name": name, "defaults": defaults}, sort_keys=True))
            return 0
        if args.command == "verify":
            params = _parse_params(args.param)
            if args.seed is not None:
                params["seed"] = args.seed
            results = cmd_verify(args.instance, params, args.oracle, quick=args.quick)
            _dump_json(os.path.join(args.out, "verify.json"),
                       {"instance": args.instance, "params": params, "checks": results})
            for r in results:
                print(f"{'PASS' if r['passed'] else 'FAIL'} {r['check']}")
            failing = [r["check"] for r in results if not r["passed"]]
            if failing:
                print("failing checks: " + ", ".join(failing), file=sys.stderr)
                return 1
            return 0
        spec = _spec_from_args(args)
        if args.command == "solve":
            report = cmd_solve(spec, args.out)
        else:
            report = cmd_compare(spec, args.out)
            report = {"status": {k: v["status"] for k, v in report["variants"].items()}}
        print(json.dumps(_json_safe({k: report[k] for k in ("status", "iterations", "final_residuals",
                                                            "distance_to_oracle") if k in report}),
                         sort_keys=True))
        return 0
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
