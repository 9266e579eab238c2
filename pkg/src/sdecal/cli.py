"""Command line front end.

Subcommands: ``run`` (one experiment, CSV/JSONL trajectory plus an
acceptance report), ``sweep`` (a grid of overrides, one output per cell
plus an index), ``oracle`` (closed-form and simulation reference values
as JSON), ``validate`` (learning-rate schedule admissibility) and
``list`` (the experiment registry).

Every output is written atomically, and every run writes a TOML echo of
its fully resolved configuration next to the output, so re-running the
echo reproduces the artifact byte for byte.  Exit codes: 0 success (and
acceptance pass), 1 acceptance fail, 2 usage or config error,
3 numerical divergence.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import itertools
import json
import os
import sys
import time
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .backend import BackendError, active_backend
from .integrator import (
    IntegrationDivergedError,
    RunConfig,
    _atomic_write,
    _json_ready,
    run,
)
from .objective import KIND_CODES, KIND_NAMES, ObjectiveSpec, TargetStatistic
from .schedule import LearningRateSchedule, describe_violation, validate
from .experiments import evaluate_acceptance, get_entry, list_experiments

OUT_DIR_ENV = "SDECAL_OUT_DIR"

_RUN_KEYS = {
    "experiment": str, "seed": int, "n_particles": int, "t_end": float,
    "dt": float, "record_every": int, "format": str, "out": str,
    "backend": str, "check": bool, "theta0": list, "x0": list,
    "freeze_theta": bool, "warmup_steps": int, "hold_until_ready": bool,
    "divergence_threshold": float, "moment_ceiling": float,
}
_SCHED_KEYS = {"a": float, "b": float, "gamma": float}
_STAT_KEYS = {"kind": str, "target": float, "lag": float}

_INT_PARAMS = {"seed", "n_particles", "record_every", "warmup_steps"}
_FLOAT_PARAMS = {"t_end", "dt", "a", "b", "gamma",
                 "divergence_threshold", "moment_ceiling"}


class UsageError(Exception):
    pass


def _fail(msg: str) -> "UsageError":
    return UsageError(msg)


# ---------------------------------------------------------------------------
# TOML emission (the stdlib parses TOML but does not write it)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, dict):
        items = ", ".join(f"{k} = {_toml_value(x)}" for k, x in v.items())
        return "{ " + items + " }"
    raise TypeError(f"cannot serialize {type(v).__name__} to TOML")


def _toml_dump(sections: Dict[str, Dict[str, object]]) -> str:
    lines: List[str] = []
    for name, table in sections.items():
        if not table:
            continue
        lines.append(f"[{name}]")
        for k, v in table.items():
            lines.append(f"{k} = {_toml_value(v)}")
        lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Config assembly


def _coerce(key: str, value, want, where: str):
    if want is bool:
        if isinstance(value, bool):
            return value
        raise _fail(f"{where}.{key} must be a boolean, got {value!r}")
    if want is int:
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
            raise _fail(f"{where}.{key} must be an integer, got {value!r}")
        return int(value)
    if want is float:
        if isinstance(value, bool) or not isinstance(value, (int, float, np.floating)):
            raise _fail(f"{where}.{key} must be a number, got {value!r}")
        return float(value)
    if want is str:
        if not isinstance(value, str):
            raise _fail(f"{where}.{key} must be a string, got {value!r}")
        return value
    if want is list:
        if not isinstance(value, (list, tuple)):
            raise _fail(f"{where}.{key} must be an array, got {value!r}")
        return [float(x) for x in value]
    raise _fail(f"{where}.{key}: unsupported type")


def _check_table(table: dict, allowed: dict, where: str) -> dict:
    out = {}
    for k, v in table.items():
        if k not in allowed:
            raise _fail(
                f"unknown key {where}.{k}; known keys: {', '.join(sorted(allowed))}"
            )
        out[k] = _coerce(k, v, allowed[k], where)
    return out


def _load_config_file(path: str) -> Dict[str, dict]:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as e:
        raise _fail(f"cannot read config file {path}: {e}")
    except tomllib.TOMLDecodeError as e:
        raise _fail(f"malformed TOML in {path}: {e}")
    known = {"run", "model", "objective", "schedule"}
    unknown = set(data) - known
    if unknown:
        raise _fail(
            f"unknown config section(s) {sorted(unknown)}; expected {sorted(known)}"
        )
    cfg = {
        "run": _check_table(data.get("run", {}), _RUN_KEYS, "run"),
        "model": data.get("model", {}),
        "schedule": _check_table(data.get("schedule", {}), _SCHED_KEYS, "schedule"),
        "objective": data.get("objective", {}),
    }
    for k, v in cfg["model"].items():
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise _fail(f"model.{k} must be a number, got {v!r}")
    obj = cfg["objective"]
    if obj:
        stats = obj.get("stats")
        if set(obj) != {"stats"} or not isinstance(stats, list) or not stats:
            raise _fail("objective section must contain a non-empty 'stats' array")
        for i, st in enumerate(stats):
            if not isinstance(st, dict):
                raise _fail(f"objective.stats[{i}] must be a table")
            _check_table(st, _STAT_KEYS, f"objective.stats[{i}]")
            if "kind" not in st or "target" not in st:
                raise _fail(f"objective.stats[{i}] needs 'kind' and 'target'")
    return cfg


def _build_objective(obj_cfg: dict) -> ObjectiveSpec:
    stats = []
    for st in obj_cfg["stats"]:
        kind = st["kind"]
        if kind not in KIND_CODES:
            raise _fail(
                f"unknown statistic kind {kind!r}; "
                f"choose from {sorted(KIND_CODES)}"
            )
        code = KIND_CODES[kind]
        stats.append(TargetStatistic(
            kind=code, target=float(st["target"]), lag=float(st.get("lag", 0.0)),
        ))
    return ObjectiveSpec(stats=tuple(stats))


def _resolve_run(args, overrides: Optional[dict] = None):
    """Merge config file, CLI flags and sweep overrides into run pieces."""
    source = args.experiment
    file_cfg: Dict[str, dict] = {"run": {}, "model": {}, "schedule": {}, "objective": {}}
    if source.endswith(".toml") or os.path.sep in source or os.path.isfile(source):
        file_cfg = _load_config_file(source)
        if "experiment" not in file_cfg["run"]:
            raise _fail(f"config file {source} is missing run.experiment")
        name = file_cfg["run"]["experiment"]
    else:
        name = source

    try:
        entry = get_entry(name)
    except KeyError as e:
        raise _fail(str(e.args[0]))

    rc = dict(file_cfg["run"])
    rc.pop("experiment", None)
    user_model = dict(file_cfg["model"])
    sched = dict(file_cfg["schedule"])

    for key in ("seed", "n_particles", "t_end", "dt", "record_every",
                "format", "out", "backend"):
        v = getattr(args, key.replace("-", "_"), None)
        if v is not None:
            rc[key] = v
    if getattr(args, "no_check", False):
        rc["check"] = False
    for key in ("a", "b", "gamma"):
        v = getattr(args, key, None)
        if v is not None:
            sched[key] = v
    for k, v in (overrides or {}).items():
        if k in _SCHED_KEYS:
            sched[k] = v
        elif k in entry.model_params:
            user_model[k] = v
        else:
            rc[k] = v

    unknown = set(user_model) - set(entry.model_params)
    if unknown:
        known = sorted(entry.model_params) or ["(none)"]
        raise _fail(
            f"model parameter(s) {sorted(unknown)} not accepted by {name}; "
            f"known: {', '.join(known)}"
        )
    model_params = dict(entry.model_params)
    model_params.update(user_model)
    model = entry.model(**model_params)
    objective = entry.objective()
    config = entry.config(**model_params)

    custom_objective = False
    if file_cfg["objective"]:
        new_obj = _build_objective(file_cfg["objective"])
        custom_objective = new_obj != objective
        objective = new_obj

    sched_eff = dataclasses.replace(config.schedule, **sched) if sched else config.schedule
    cfg_fields = {k: v for k, v in rc.items()
                  if k in _RUN_KEYS and k not in ("format", "out", "backend", "check")}
    if "theta0" in cfg_fields:
        cfg_fields["theta0"] = np.asarray(cfg_fields["theta0"], dtype=np.float64)
    if "x0" in cfg_fields:
        cfg_fields["x0"] = np.asarray(cfg_fields["x0"], dtype=np.float64)
    config = dataclasses.replace(config, schedule=sched_eff, **cfg_fields)

    backend_req = rc.get("backend", "auto")
    if backend_req not in ("auto", "numba", "numpy"):
        raise _fail(f"unknown backend {backend_req!r}; choose auto, numba or numpy")
    backend = active_backend() if backend_req == "auto" else backend_req

    fmt = rc.get("format", "csv")
    if fmt not in ("csv", "jsonl"):
        raise _fail(f"unknown format {fmt!r}; choose csv or jsonl")
    check = rc.get("check", True) and not custom_objective

    out = rc.get("out")
    if out is None:
        out_dir = os.environ.get(OUT_DIR_ENV, ".")
        out = os.path.join(out_dir, f"{name}_seed{config.seed}.{fmt}")
    return name, entry, model, objective, config, model_params, backend, fmt, check, out


def _echo_sections(name, config, model_params, objective, backend, fmt, check, out):
    run_tbl = {
        "experiment": name,
        "seed": config.seed,
        "n_particles": config.n_particles,
        "t_end": config.t_end,
        "dt": config.dt,
        "record_every": config.record_every,
        "format": fmt,
        "out": out,
        "backend": backend,
        "check": check,
        "theta0": [float(v) for v in np.atleast_1d(config.theta0)],
        "x0": [float(v) for v in np.atleast_1d(config.x0)],
        "freeze_theta": config.freeze_theta,
        "warmup_steps": config.warmup_steps,
        "hold_until_ready": config.hold_until_ready,
        "divergence_threshold": config.divergence_threshold,
        "moment_ceiling": config.moment_ceiling,
    }
    sched_tbl = {
        "a": config.schedule.a, "b": config.schedule.b, "gamma": config.schedule.gamma,
    }
    obj_tbl = {
        "stats": [
            {"kind": KIND_NAMES[s.kind], "target": s.target, "lag": s.lag}
            for s in objective.stats
        ]
    }
    return {
        "run": run_tbl,
        "model": dict(model_params),
        "objective": obj_tbl,
        "schedule": sched_tbl,
    }


def _echo_path(out: str) -> str:
    stem, _ = os.path.splitext(out)
    return stem + ".config.toml"


def _report_path(out: str) -> str:
    stem, _ = os.path.splitext(out)
    return stem + ".acceptance.json"


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_run(args, overrides: Optional[dict] = None, quiet: bool = False) -> Tuple[int, dict]:
    name, entry, model, objective, config, model_params, backend, fmt, check, out = \
        _resolve_run(args, overrides)

    sections = _echo_sections(
        name, config, model_params, objective, backend, fmt, check, out
    )
    parent = os.path.dirname(os.path.abspath(out))
    os.makedirs(parent, exist_ok=True)
    _atomic_write(_echo_path(out), _toml_dump(sections))

    cell: Dict[str, object] = {
        "experiment": name, "seed": config.seed, "out": out,
        "config": _echo_path(out), "acceptance": None, "passed": None,
    }
    t0 = time.perf_counter()
    try:
        record = run(model, objective, config, backend=backend)
    except IntegrationDivergedError as e:
        if e.record is not None:
            _write_record(e.record, out, fmt)
        if not quiet:
            print(f"{name}: {e}", file=sys.stderr)
        cell["error"] = str(e)
        return 3, cell
    elapsed = time.perf_counter() - t0
    _write_record(record, out, fmt)

    status = 0
    if check and entry.acceptance is not None:
        report = evaluate_acceptance(name, model, objective, record, entry.acceptance)
        _atomic_write(_report_path(out), report.to_json() + "\n")
        cell["acceptance"] = _report_path(out)
        cell["passed"] = bool(report.passed)
        status = 0 if report.passed else 1
        verdict = "pass" if report.passed else "FAIL"
        if not quiet:
            print(f"{name} seed={config.seed} [{backend}] {elapsed:.2f}s "
                  f"theta_T={np.round(record.theta_final, 4).tolist()} "
                  f"acceptance {verdict} ({report.value:.6g} vs {report.threshold:g})")
    elif not quiet:
        print(f"{name} seed={config.seed} [{backend}] {elapsed:.2f}s "
              f"theta_T={np.round(record.theta_final, 4).tolist()}")
    return status, cell


def _write_record(record, out: str, fmt: str):
    if fmt == "csv":
        record.to_csv(out)
    else:
        record.to_jsonl(out)


def _parse_grid(specs: Sequence[str]) -> List[Tuple[str, List[object]]]:
    grid = []
    for axis in specs:
        if "=" not in axis:
            raise _fail(f"grid axis {axis!r} must look like name=v1,v2 or name=lo..hi")
        key, _, rhs = axis.partition("=")
        key = key.strip()
        if key in _INT_PARAMS:
            cast = int
        elif key in _FLOAT_PARAMS:
            cast = float
        elif key in ("m",):
            cast = int
        elif key in ("kappa", "lam"):
            cast = float
        else:
            raise _fail(
                f"cannot sweep {key!r}; sweepable: "
                f"{sorted(_INT_PARAMS | _FLOAT_PARAMS | {'m', 'kappa', 'lam'})}"
            )
        rhs = rhs.strip()
        if ".." in rhs and cast is int:
            lo, _, hi = rhs.partition("..")
            try:
                values: List[object] = list(range(int(lo), int(hi) + 1))
            except ValueError:
                raise _fail(f"bad integer range in {axis!r}")
            if not values:
                raise _fail(f"empty range in {axis!r}")
        else:
            try:
                values = [cast(tok) for tok in rhs.split(",") if tok.strip() != ""]
            except ValueError:
                raise _fail(f"bad value list in {axis!r}")
            if not values:
                raise _fail(f"empty value list in {axis!r}")
        grid.append((key, values))
    return grid


def _fmt_cell_value(v) -> str:
    return str(int(v)) if isinstance(v, (int, np.integer)) else repr(float(v))


def _cmd_sweep(args) -> int:
    grid = _parse_grid(args.grid)
    if not grid:
        raise _fail("sweep needs at least one --grid name=values")
    out_dir = args.out_dir or os.environ.get(OUT_DIR_ENV, ".")
    os.makedirs(out_dir, exist_ok=True)
    fmt = args.format or "csv"

    cells = []
    for combo in itertools.product(*(vals for _, vals in grid)):
        overrides = {k: v for (k, _), v in zip(grid, combo)}
        label = "__".join(f"{k}={_fmt_cell_value(v)}" for k, v in overrides.items())
        cells.append((label, overrides))

    base = args.experiment
    if base.endswith(".toml") or os.path.sep in base or os.path.isfile(base):
        stem = os.path.splitext(os.path.basename(base))[0]
    else:
        stem = base

    def run_cell(label_overrides):
        label, overrides = label_overrides
        cell_args = argparse.Namespace(**vars(args))
        cell_args.out = os.path.join(out_dir, f"{stem}__{label}.{fmt}")
        cell_args.format = fmt
        status, cell = _cmd_run(cell_args, overrides=overrides, quiet=True)
        cell["overrides"] = overrides
        cell["status"] = status
        return label, status, cell

    workers = args.threads if args.threads and args.threads > 0 else (os.cpu_count() or 1)
    results = {}
    if workers == 1:
        for item in cells:
            label, status, cell = run_cell(item)
            results[label] = (status, cell)
            print(f"[{status}] {label}")
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(run_cell, item): item[0] for item in cells}
            for fut in concurrent.futures.as_completed(futures):
                label, status, cell = fut.result()
                results[label] = (status, cell)
                print(f"[{status}] {label}")

    index = [results[label][1] for label, _ in cells]
    _atomic_write(
        os.path.join(out_dir, f"{stem}__index.json"),
        json.dumps(_json_ready(index), indent=2) + "\n",
    )
    statuses = [results[label][0] for label, _ in cells]
    if any(s == 3 for s in statuses):
        return 3
    if any(s == 1 for s in statuses):
        return 1
    return 0


def _parse_json_array(text: str, label: str) -> np.ndarray:
    try:
        return np.asarray(json.loads(text), dtype=np.float64)
    except (json.JSONDecodeError, ValueError):
        raise _fail(f"--{label} must be a number or JSON array, got {text!r}")


def _parse_theta(text: str) -> np.ndarray:
    try:
        return np.array([float(tok) for tok in text.split(",")], dtype=np.float64)
    except ValueError:
        raise _fail(f"--theta must be a comma list of numbers, got {text!r}")


def _cmd_oracle(args) -> int:
    from . import oracle

    kind = args.report
    if kind == "ou-stationary":
        mean, cov = oracle.ou_stationary(
            _parse_json_array(args.h, "h"), _parse_json_array(args.g, "g"), args.sigma
        )
        payload = {"mean": mean, "cov": cov}
    elif kind == "ou-transition":
        if args.t is None:
            raise _fail("ou-transition needs --t")
        x0 = _parse_json_array(args.x0, "x0") if args.x0 is not None else 0.0
        mean, cov = oracle.ou_transition(
            _parse_json_array(args.h, "h"), _parse_json_array(args.g, "g"),
            args.sigma, args.t, x0,
        )
        payload = {"t": args.t, "mean": mean, "cov": cov}
    elif kind == "distribution-check":
        times = [float(tok) for tok in args.times.split(",")]
        payload = oracle.empirical_distribution_check(
            _parse_json_array(args.h, "h"), _parse_json_array(args.g, "g"),
            args.sigma, times, n_paths=args.paths, dt=args.dt, seed=args.seed,
        )
    elif kind == "autocov-minimizer":
        targets = [float(tok) for tok in args.targets.split(",")]
        if len(targets) != 3:
            raise _fail("--targets needs exactly three values")
        theta = oracle.autocov_minimizer(targets, args.tau)
        payload = {"theta": theta, "targets": targets, "tau": args.tau}
    elif kind in ("ergodic-j", "fd-gradient"):
        if args.theta is None:
            raise _fail(f"{kind} needs --theta")
        try:
            entry = get_entry(args.experiment_name)
        except KeyError as e:
            raise _fail(str(e.args[0]))
        model, objective, _ = entry.build()
        theta = _parse_theta(args.theta)
        if kind == "ergodic-j":
            est = oracle.ergodic_objective(
                model, theta, objective, args.t_end, dt=args.dt,
                burn_in=args.burn_in, seed=args.seed,
            )
            payload = {
                "experiment": args.experiment_name, "theta": theta,
                "j": est.value, "stderr": est.stderr,
                "stat_means": est.stat_means, "n_batches": est.n_batches,
            }
        else:
            grad = oracle.finite_difference_gradient(
                model, objective, theta, eps=args.eps, t_end=args.t_end,
                dt=args.dt, burn_in=args.burn_in, seed=args.seed,
            )
            payload = {
                "experiment": args.experiment_name, "theta": theta,
                "gradient": grad, "eps": args.eps,
            }
    else:  # pragma: no cover - argparse restricts choices
        raise _fail(f"unknown oracle report {kind!r}")

    text = json.dumps(_json_ready(payload), indent=2) + "\n"
    if args.out:
        _atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_validate(args) -> int:
    try:
        schedule = LearningRateSchedule(a=args.a, b=args.b, gamma=args.gamma)
    except ValueError as e:
        raise _fail(str(e))
    violations = validate(schedule)
    if not violations:
        print(f"admissible: a={args.a:g}, b={args.b:g}, gamma={args.gamma:g}")
    else:
        for cond in violations:
            print(f"violated {cond}: {describe_violation(cond)}")
    return 0


def _cmd_list(args) -> int:
    for name in list_experiments():
        entry = get_entry(name)
        print(f"{name:22s} {entry.description}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="sdecal",
        description="online calibration of SDE models to stationary targets",
    )
    sub = p.add_subparsers(dest="subcommand", required=True)

    def add_run_flags(sp):
        sp.add_argument("experiment", help="registry name or TOML config path")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--n-particles", type=int, dest="n_particles")
        sp.add_argument("--t-end", type=float, dest="t_end")
        sp.add_argument("--dt", type=float)
        sp.add_argument("--record-every", type=int, dest="record_every")
        sp.add_argument("--a", type=float, help="schedule scale a")
        sp.add_argument("--b", type=float, help="schedule offset b")
        sp.add_argument("--gamma", type=float, help="schedule decay exponent")
        sp.add_argument("--backend", choices=("auto", "numba", "numpy"))
        sp.add_argument("--no-check", action="store_true",
                        help="skip the acceptance evaluation")

    rp = sub.add_parser("run", help="run one experiment")
    add_run_flags(rp)
    rp.add_argument("--out", help="output path (default under $%s)" % OUT_DIR_ENV)
    rp.add_argument("--format", choices=("csv", "jsonl"))

    sp = sub.add_parser("sweep", help="run a grid of overrides")
    add_run_flags(sp)
    sp.add_argument("--grid", action="append", default=[],
                    metavar="NAME=V1,V2|NAME=LO..HI",
                    help="sweep axis; repeatable")
    sp.add_argument("--threads", type=int, default=0,
                    help="worker cap, 0 = one per CPU")
    sp.add_argument("--out-dir", dest="out_dir")
    sp.add_argument("--format", choices=("csv", "jsonl"))

    op = sub.add_parser("oracle", help="closed-form and simulation references")
    op.add_argument("report", choices=(
        "ou-stationary", "ou-transition", "distribution-check",
        "autocov-minimizer", "ergodic-j", "fd-gradient"))
    op.add_argument("--h", default="1.0", help="rate matrix (number or JSON)")
    op.add_argument("--g", default="0.0", help="drift offset (number or JSON)")
    op.add_argument("--sigma", type=float, default=1.0)
    op.add_argument("--t", type=float, help="transition horizon")
    op.add_argument("--x0", help="initial state (number or JSON)")
    op.add_argument("--times", default="0.5,1,5", help="checkpoints, comma list")
    op.add_argument("--paths", type=int, default=10000)
    op.add_argument("--dt", type=float, default=0.01)
    op.add_argument("--seed", type=int, default=0)
    op.add_argument("--targets", default="1,2,1.6")
    op.add_argument("--tau", type=float, default=0.1)
    op.add_argument("--experiment", dest="experiment_name",
                    help="registry name for ergodic-j / fd-gradient")
    op.add_argument("--theta", help="comma list of parameter values")
    op.add_argument("--t-end", type=float, default=2000.0, dest="t_end")
    op.add_argument("--burn-in", type=float, default=50.0, dest="burn_in")
    op.add_argument("--eps", type=float, default=0.05)
    op.add_argument("--out", help="write JSON here instead of stdout")

    vp = sub.add_parser("validate", help="check a learning-rate schedule")
    vp.add_argument("--a", type=float, default=1.0)
    vp.add_argument("--b", type=float, default=1.0)
    vp.add_argument("--gamma", type=float, required=True)

    lp = sub.add_parser("list", help="list registered experiments")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        if args.subcommand == "run":
            status, _ = _cmd_run(args)
            return status
        if args.subcommand == "sweep":
            return _cmd_sweep(args)
        if args.subcommand == "oracle":
            return _cmd_oracle(args)
        if args.subcommand == "validate":
            return _cmd_validate(args)
        if args.subcommand == "list":
            return _cmd_list(args)
        raise _fail(f"unknown subcommand {args.subcommand!r}")
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except BackendError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ValueError, TypeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
