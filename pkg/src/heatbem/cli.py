"""Batch front end: configuration parsing, study orchestration, and
table emission.

A study is described by a flat ``key=value`` text file (optionally
overridden with repeated ``--set key=value`` flags), runs one solve per
refinement level, measures squared energy errors against a reference
two (or a configured number of) levels above the finest study level,
and writes a CSV whose trailing comment lines compare the fitted rate
with the predicted one.

Exit codes: 0 on success, 2 on configuration errors, 3 on numerical
failures.
"""

from __future__ import annotations

import argparse
import ast
import math
import os
import re
import sys
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .analysis import (
    ConvergenceRecord,
    RateModel,
    exact_flux_disk,
    general_full_rate,
    oracle_flux_projection,
    predicted_rate_full,
    predicted_rate_sparse,
    rate_report,
    records_to_csv,
    reference_error_sq,
)
from .assembly import assemble_single_layer
from .geometry import CIRCLE, BoundaryCurve
from .indexsets import (
    IndexSet,
    as_sigma2,
    dof_count,
    full_tensor_levels,
    sparse_set,
)
from .solve import (
    AdaptiveState,
    ProblemSpec,
    SolveCache,
    adaptive_grow,
    adaptive_history_csv,
    combination_plan,
    downset_combination_weights,
    full_grid_solution,
    solve_combination,
    solve_downset_combination,
    solve_full_grid,
    solve_sparse_galerkin,
)


class ConfigError(ValueError):
    """Invalid configuration; the CLI maps this to exit code 2."""


class StudyError(RuntimeError):
    """Numerical failure during a study; mapped to exit code 3."""


# ---------------------------------------------------------------------------
# configuration


_SCHEMES = ("full", "sparse", "combination", "sparse-galerkin", "adaptive")

_DEFAULTS = {
    "geometry": "circle",
    "data": "t2cos1",
    "method": "direct",
    "scheme": "full",
    "L_min": "1",
    "L_max": "5",
    "sigma2": "6/5",
    "px": "0",
    "pt": "0",
    "T": "4",
    "M0": "4",
    "error": "oracle",
    "output": "study.csv",
}


@dataclass(frozen=True)
class StudyConfig:
    """Resolved study description.

    ``data`` is the term list of the Dirichlet trace
    g(u, s) = sum amp * s^tpow * cos(2 pi mode u) in the parameter
    angle, ``error`` is ("oracle", 2) or ("reference", levels_above),
    and ``sigma2`` is the exact rational anisotropy.
    """

    geometry: BoundaryCurve
    data: tuple
    method: str
    scheme: str
    L_min: int
    L_max: int
    sigma2: Fraction
    px: int
    pt: int
    T: float
    m0: int
    error: tuple
    output: str


def parse_config_text(text: str) -> dict:
    """Read ``key = value`` lines; blank lines and #-comments skipped."""
    mapping = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        mapping[key.strip()] = value.strip()
    return mapping


def _parse_geometry(text: str) -> BoundaryCurve:
    if text == "circle":
        return BoundaryCurve.circle(1.0)
    m = re.fullmatch(r"ellipse\(\s*([^,()\s]+)\s*,\s*([^,()\s]+)\s*\)", text)
    if m:
        try:
            a, b = float(m.group(1)), float(m.group(2))
        except ValueError as exc:
            raise ConfigError(f"bad ellipse axes in {text!r}") from exc
        return BoundaryCurve.ellipse(a, b)
    raise ConfigError(f"geometry must be 'circle' or 'ellipse(a,b)', got {text!r}")


def _parse_data(text: str) -> tuple:
    if text == "t2cos1":
        return ((1.0, 2, 1.0),)
    if text == "t2cos2":
        return ((2.0, 2, 1.0),)
    m = re.fullmatch(r"fourier\((.*)\)", text)
    if not m:
        raise ConfigError(
            f"data must be 't2cos1', 't2cos2' or 'fourier((mode,tpow,amp),...)',"
            f" got {text!r}")
    try:
        items = ast.literal_eval(f"[{m.group(1)}]")
    except (SyntaxError, ValueError) as exc:
        raise ConfigError(f"cannot parse fourier term list {text!r}") from exc
    terms = []
    for item in items:
        if not (isinstance(item, tuple) and len(item) == 3):
            raise ConfigError(f"fourier terms are (mode, tpow, amp), got {item!r}")
        mode, tpow, amp = item
        if not isinstance(tpow, int) or not 1 <= tpow <= 3:
            raise ConfigError(f"time power must be an integer in 1..3, got {tpow!r}")
        mode, amp = float(mode), float(amp)
        if mode < 0 or not math.isfinite(mode) or not math.isfinite(amp):
            raise ConfigError(f"bad fourier term {item!r}")
        terms.append((mode, tpow, amp))
    if not terms:
        raise ConfigError("fourier data needs at least one term")
    return tuple(terms)


def _parse_error(text: str) -> tuple:
    if text == "oracle":
        return ("oracle", 2)
    m = re.fullmatch(r"reference\(\s*(\d+)\s*\)", text)
    if m:
        k = int(m.group(1))
        if k < 1:
            raise ConfigError("reference levels-above must be at least 1")
        return ("reference", k)
    raise ConfigError(f"error must be 'oracle' or 'reference(k)', got {text!r}")


def _parse_int(mapping, key, lo=None, hi=None) -> int:
    try:
        value = int(mapping[key])
    except ValueError as exc:
        raise ConfigError(f"{key} must be an integer, got {mapping[key]!r}") from exc
    if lo is not None and value < lo:
        raise ConfigError(f"{key} must be >= {lo}, got {value}")
    if hi is not None and value > hi:
        raise ConfigError(f"{key} must be <= {hi}, got {value}")
    return value


def build_config(mapping: dict) -> StudyConfig:
    """Validate a key=value mapping into a StudyConfig."""
    unknown = set(mapping) - set(_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    merged = dict(_DEFAULTS)
    merged.update(mapping)

    geometry = _parse_geometry(merged["geometry"])
    data = _parse_data(merged["data"])
    method = merged["method"]
    if method not in ("direct", "indirect"):
        raise ConfigError(f"method must be 'direct' or 'indirect', got {method!r}")
    scheme = merged["scheme"]
    if scheme not in _SCHEMES:
        raise ConfigError(f"scheme must be one of {', '.join(_SCHEMES)}, got {scheme!r}")
    L_min = _parse_int(merged, "L_min", lo=0)
    L_max = _parse_int(merged, "L_max", lo=0)
    if L_min > L_max:
        raise ConfigError(f"need L_min <= L_max, got {L_min} > {L_max}")
    try:
        sigma2 = as_sigma2(Fraction(merged["sigma2"]))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"sigma2 must be a positive rational, got "
                          f"{merged['sigma2']!r}") from exc
    px = _parse_int(merged, "px", lo=0, hi=1)
    pt = _parse_int(merged, "pt", lo=0, hi=1)
    try:
        T = float(merged["T"])
    except ValueError as exc:
        raise ConfigError(f"T must be a number, got {merged['T']!r}") from exc
    if not T > 0:
        raise ConfigError(f"T must be positive, got {T}")
    m0 = _parse_int(merged, "M0", lo=1)
    error = _parse_error(merged["error"])
    output = merged["output"]
    if not output:
        raise ConfigError("output path must be nonempty")

    if scheme in ("sparse-galerkin", "adaptive") and (px or pt):
        raise ConfigError(f"scheme '{scheme}' requires px = pt = 0")
    return StudyConfig(geometry, data, method, scheme, L_min, L_max, sigma2,
                       px, pt, T, m0, error, output)


def _check_error_metric(config: StudyConfig) -> None:
    """Config rules that only bind once the error metric is used."""
    if config.px or config.pt:
        raise ConfigError("study error measurement requires px = pt = 0")
    if config.error[0] != "oracle":
        return
    if config.geometry.kind != CIRCLE or config.geometry.p0 != 1.0:
        raise ConfigError("error=oracle requires the unit circle")
    if config.data != ((1.0, 2, 1.0),):
        raise ConfigError("error=oracle requires data=t2cos1")
    if config.method != "direct":
        raise ConfigError("error=oracle requires method=direct")


def _problem(config: StudyConfig) -> ProblemSpec:
    return ProblemSpec(config.geometry, config.data, config.method,
                       config.px, config.pt, config.T, config.m0)


# ---------------------------------------------------------------------------
# study orchestration


def _downset_closure(pairs) -> IndexSet:
    out = set()
    for lx, lt in pairs:
        out.update((i, j) for i in range(lx + 1) for j in range(lt + 1))
    return IndexSet.from_pairs(out)


def _scheme_parts(config: StudyConfig, L: int) -> list:
    """Level pairs the scheme solves at study level L (reference sizing)."""
    s2 = config.sigma2
    if config.scheme == "full":
        return [full_tensor_levels(L, s2)]
    if config.scheme == "sparse":
        return sorted(downset_combination_weights(sparse_set(L, s2)))
    if config.scheme == "combination":
        return [pair for pair, _ in combination_plan(L, s2).terms]
    if config.scheme == "sparse-galerkin":
        return [sparse_set(L, s2).max_levels()]
    raise ValueError(f"no static parts for scheme {config.scheme!r}")


def _build_reference(config: StudyConfig, problem: ProblemSpec, levels):
    """Reference density and single-layer operator on a dominating grid.

    error=oracle uses the exact-flux projection (no solve); otherwise the
    reference is a fine Galerkin solve with the configured method.
    """
    space = problem.space(*levels)
    t0 = time.perf_counter()
    operator = assemble_single_layer(space)
    if config.error[0] == "oracle":
        reference = oracle_flux_projection(space)
    else:
        rhs = problem.assemble_rhs(space)
        reference = solve_full_grid(operator, rhs, space)
    print(f"reference ready at levels {tuple(levels)}, "
          f"N={space.full_dof_count()} "
          f"({time.perf_counter() - t0:.1f}s)", flush=True)
    return reference, operator


def _run_level(config: StudyConfig, problem: ProblemSpec, L: int,
               reference, operator) -> ConvergenceRecord:
    s2 = config.sigma2
    if config.scheme == "full":
        lx, lt = full_tensor_levels(L, s2)
        psi, t_assemble, t_solve = full_grid_solution(problem, lx, lt)
        n = psi.space.dof_count()
    elif config.scheme == "sparse":
        iset = sparse_set(L, s2)
        psi = solve_downset_combination(iset, problem)
        t_assemble, t_solve = psi.assemble_seconds, psi.solve_seconds
        n = dof_count(iset, config.m0)
    elif config.scheme == "combination":
        plan = combination_plan(L, s2)
        psi = solve_combination(plan, problem)
        t_assemble, t_solve = psi.assemble_seconds, psi.solve_seconds
        n = dof_count(_downset_closure(p for p, _ in plan.terms), config.m0)
    elif config.scheme == "sparse-galerkin":
        t0 = time.perf_counter()
        psi = solve_sparse_galerkin(L, s2, problem)
        t_assemble, t_solve = time.perf_counter() - t0, 0.0
        n = psi.space.dof_count()
    else:
        raise ValueError(f"unsupported scheme {config.scheme!r}")
    err2 = reference_error_sq(psi, reference, operator)
    return ConvergenceRecord(L, n, err2, t_assemble, t_solve)


def _level_records(config: StudyConfig, problem: ProblemSpec) -> list:
    levels_above = config.error[1]
    parts = [p for L in range(config.L_min, config.L_max + 1)
             for p in _scheme_parts(config, L)]
    need_lx = max(p[0] for p in parts)
    need_lt = max(p[1] for p in parts)
    base = full_tensor_levels(config.L_max + levels_above, config.sigma2)
    ref_levels = (max(base[0], need_lx), max(base[1], need_lt))
    reference, operator = _build_reference(config, problem, ref_levels)
    records = []
    for L in range(config.L_min, config.L_max + 1):
        try:
            rec = _run_level(config, problem, L, reference, operator)
        except Exception as exc:
            raise StudyError(f"study failed at level L={L}: {exc}") from exc
        print(f"L={rec.L} N={rec.N} err2={rec.err2:.6e} "
              f"assemble_s={rec.t_assemble:.2g} solve_s={rec.t_solve:.2g}",
              flush=True)
        records.append(rec)
    return records


def _adaptive_records(config: StudyConfig, problem: ProblemSpec) -> list:
    """Greedy growth for L_max steps, then per-step errors against one
    dominating reference; also dumps the final index set and the step
    history next to the output CSV."""
    cache = SolveCache(problem)
    state = AdaptiveState.initial()
    snapshots = []
    for step in range(1, config.L_max + 1):
        try:
            state = adaptive_grow(state, 1, problem, cache)
        except Exception as exc:
            raise StudyError(f"adaptive step {step} failed: {exc}") from exc
        if len(state.history) < step:
            break  # grow() printed the early-stop notice
        pair = state.history[-1][1:3]
        print(f"step {step}: accepted {pair}", flush=True)
        snapshots.append((step, state.accepted))
    if not snapshots:
        raise StudyError("adaptive growth accepted no indices")

    root, _ = os.path.splitext(config.output)
    set_path = root + ".indexset.txt"
    steps_path = root + ".steps.csv"
    with open(set_path, "w", encoding="utf-8") as fh:
        fh.write(state.accepted.to_text())
    with open(steps_path, "w", encoding="utf-8") as fh:
        fh.write(adaptive_history_csv(state))
    print(f"wrote {set_path} and {steps_path}", flush=True)

    levels_above = config.error[1]
    final = snapshots[-1][1]
    ref_levels = (max(lx for lx, _ in final.pairs) + levels_above,
                  max(lt for _, lt in final.pairs) + levels_above)
    reference, operator = _build_reference(config, problem, ref_levels)
    records = []
    for step, accepted in snapshots:
        if step < config.L_min:
            continue
        try:
            sol = solve_downset_combination(accepted, problem, cache)
            err2 = reference_error_sq(sol, reference, operator)
        except Exception as exc:
            raise StudyError(
                f"adaptive error at step {step} failed: {exc}") from exc
        rec = ConvergenceRecord(step, dof_count(accepted, config.m0), err2,
                                0.0, 0.0)
        print(f"L={rec.L} N={rec.N} err2={rec.err2:.6e}", flush=True)
        records.append(rec)
    return records


def run_study(config: StudyConfig) -> list:
    """Run one convergence study and write its CSV.

    Returns the ConvergenceRecord list.  The CSV rows are followed by
    '#'-prefixed lines comparing the fitted squared-error rate with the
    prediction for the configured scheme and anisotropy.
    """
    _check_error_metric(config)
    problem = _problem(config)
    print(f"study: scheme={config.scheme} sigma2={config.sigma2} "
          f"L={config.L_min}..{config.L_max} method={config.method}",
          flush=True)
    if config.scheme == "adaptive":
        records = _adaptive_records(config, problem)
    else:
        records = _level_records(config, problem)

    model = RateModel(config.px, config.pt, 2, config.sigma2)
    if config.scheme == "full":
        predicted = general_full_rate(model, config.sigma2)
    else:
        predicted = predicted_rate_sparse(model)
    label = f"{config.scheme} scheme, sigma2={config.sigma2}"
    if len(records) >= 3:
        report = rate_report(label, predicted, records)
    else:
        report = (f"{label}: predicted squared-error rate {predicted}, "
                  f"rate fit skipped (needs at least 3 levels)\n")
    text = records_to_csv(records)
    text += "".join(f"# {line}\n" for line in report.strip().splitlines())
    with open(config.output, "w", encoding="utf-8") as fh:
        fh.write(text)
    print(report, end="", flush=True)
    print(f"wrote {config.output}", flush=True)
    return records


# ---------------------------------------------------------------------------
# oracle table


def _cos_two_pi(num: int, den: int) -> float:
    """cos(2 pi num/den) with exact values on the quarter grid."""
    r = Fraction(num % den, den)
    if r in (Fraction(1, 4), Fraction(3, 4)):
        return 0.0
    if r == 0:
        return 1.0
    if r == Fraction(1, 2):
        return -1.0
    return math.cos(2.0 * math.pi * float(r))


def run_oracle(config: StudyConfig, phi_samples: int, t_samples: int,
               n_terms: int = 50) -> str:
    """CSV table 'phi,t,flux' of the exact boundary flux on the disk.

    phi runs over phi_samples equispaced angles in [0, 2 pi); t over
    t_samples equispaced times in [0, T].  The angular factor is
    evaluated exactly on the quarter grid so symmetry zeros are exact.
    """
    if config.geometry.kind != CIRCLE or config.geometry.p0 != 1.0:
        raise ConfigError("the flux oracle is defined on the unit disk only")
    if phi_samples < 1 or t_samples < 1:
        raise ConfigError("need at least one phi and one t sample")
    times = [config.T * j / (t_samples - 1) if t_samples > 1 else 0.0
             for j in range(t_samples)]
    radial = [exact_flux_disk(0.0, t, config.T, n_terms) for t in times]
    lines = ["phi,t,flux"]
    for k in range(phi_samples):
        phi = 2.0 * math.pi * k / phi_samples
        cosfac = _cos_two_pi(k, phi_samples)
        for t, f in zip(times, radial):
            flux = f * cosfac + 0.0  # normalise -0.0
            lines.append(f"{phi:.17g},{t:.17g},{flux:.17g}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# rate tables


_FULL_TABLE_DEGREES = ((0, 0), (1, 0), (0, 1), (1, 1), (3, 1))
_SPARSE_TABLE_DEGREES = ((0, 0), (1, 0), (1, 1), (3, 1))


def rate_tables_text() -> str:
    """Exact-rational reconstruction of the predicted-rate tables."""
    lines = ["full tensor-product method at the balancing anisotropy:"
             " energy rate gamma, squared-error rate 2*gamma"]
    for d in (2, 3):
        for px, pt in _FULL_TABLE_DEGREES:
            gamma, s2 = predicted_rate_full(RateModel(px, pt, d))
            lines.append(f"d={d} px={px} pt={pt} gamma={gamma} "
                         f"squared={2 * gamma} sigma2_opt={s2}")
    lines.append("sparse-grid method: energy rate gamma"
                 " (the squared error is observed at the same slope)")
    for d in (2, 3):
        for px, pt in _SPARSE_TABLE_DEGREES:
            model = RateModel(px, pt, d)
            gamma = predicted_rate_sparse(model)
            lines.append(f"d={d} sigma2={model.sigma2} px={px} pt={pt} "
                         f"gamma={gamma} squared={gamma}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# command-line interface


def _add_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE",
                        help="flat key=value configuration file")
    parser.add_argument("--set", action="append", default=[],
                        metavar="KEY=VALUE", dest="overrides",
                        help="override one configuration key")


def _load_config(args) -> StudyConfig:
    mapping = {}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        mapping.update(parse_config_text(text))
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        mapping[key.strip()] = value.strip()
    return build_config(mapping)


def _cmd_solve(args) -> int:
    config = _load_config(args)
    lx, lt = args.levels
    if lx < 0 or lt < 0:
        raise ConfigError("levels must be nonnegative")
    problem = _problem(config)
    psi, t_assemble, t_solve = full_grid_solution(problem, lx, lt)
    print(f"levels=({lx},{lt}) N={psi.space.dof_count()} "
          f"assemble_s={t_assemble:.2g} solve_s={t_solve:.2g} "
          f"residual_ok=1")
    return 0


def _cmd_study(args) -> int:
    run_study(_load_config(args))
    return 0


def _cmd_adaptive(args) -> int:
    config = _load_config(args)
    if config.px or config.pt:
        raise ConfigError("adaptive growth requires px = pt = 0")
    if args.steps < 1:
        raise ConfigError("need at least one growth step")
    if args.budget is not None and args.budget < 1:
        raise ConfigError("budget must be a positive index count")
    problem = _problem(config)
    state = AdaptiveState.initial(budget=args.budget)
    state = adaptive_grow(state, args.steps, problem, SolveCache(problem),
                          prefer_cheap=args.prefer_cheap)
    root, _ = os.path.splitext(config.output)
    set_path = root + ".indexset.txt"
    with open(set_path, "w", encoding="utf-8") as fh:
        fh.write(state.accepted.to_text())
    with open(config.output, "w", encoding="utf-8") as fh:
        fh.write(adaptive_history_csv(state))
    mx = state.accepted.max_levels()
    print(f"accepted {len(state.accepted)} indices, max levels {mx}")
    print(f"wrote {set_path} and {config.output}")
    return 0


def _cmd_rates(args) -> int:
    print(rate_tables_text(), end="")
    return 0


def _cmd_oracle(args) -> int:
    config = _load_config(args)
    table = run_oracle(config, args.phi_samples, args.t_samples, args.terms)
    path = args.output or config.output
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(table)
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heatbem",
        description="Space-time Galerkin boundary element solver for the"
                    " 2D heat equation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="one full-tensor solve at given levels")
    _add_config_args(p)
    p.add_argument("--levels", nargs=2, type=int, required=True,
                   metavar=("LX", "LT"))
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("study", help="convergence study per the config")
    _add_config_args(p)
    p.set_defaults(func=_cmd_study)

    p = sub.add_parser("adaptive", help="greedy index-set growth")
    _add_config_args(p)
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--budget", type=int, default=None,
                   help="stop once this many indices are accepted")
    p.add_argument("--prefer-cheap", action="store_true",
                   help="rank candidates by cost/benefit instead")
    p.set_defaults(func=_cmd_adaptive)

    p = sub.add_parser("rates", help="print the predicted-rate tables")
    p.set_defaults(func=_cmd_rates)

    p = sub.add_parser("oracle", help="tabulate the exact disk flux")
    _add_config_args(p)
    p.add_argument("--phi-samples", type=int, default=8)
    p.add_argument("--t-samples", type=int, default=9)
    p.add_argument("--terms", type=int, default=50,
                   help="number of series terms")
    p.add_argument("--output", default=None,
                   help="CSV path (defaults to the config output)")
    p.set_defaults(func=_cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (StudyError, RuntimeError, ValueError, FloatingPointError,
            np.linalg.LinAlgError, OSError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
