"""Command-line interface: tracing, density profiles, modes, OM scans, validation,
and the two figure-reproduction pipelines.

Every run resolves its configuration (defaults < config file < flags), writes a
``manifest.json`` echoing the fully resolved config into the output directory,
and emits CSV/JSON with fixed formatting, so identical configs produce
byte-identical outputs and any run can be reproduced from its manifest alone
(``fibercond rerun --manifest <path>``).

Exit codes: 0 ok, 1 usage error, 2 numerical failure, 3 validation failure.
Structured errors go to stderr as JSON; stdout carries a human summary.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import validate as val
from .density import (AmbientDensity, density_from_spec, normalize_on_fiber,
                      write_profiles_csv)
from .errors import FiberCondError
from .fiber import find_seed, trace_fiber, write_trace_csv
from .geometry import ObservationOperator, operator_from_spec
from .ioutil import write_csv_atomic, write_json_atomic, write_jsonl_atomic
from .modes import ModeProblem, local_minima_of_series, scan_fiber, solve
from .om import om_values_on_trace
from .validate import standard_predicates


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); usage errors must exit 1
        raise UsageError(message)


# Per-command configuration schema: key -> (parser, default). The manifest
# echoes exactly these keys after resolution; unknown keys are rejected.
def _parse_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


_COMMON = {
    "out": (str, "out"),
    "op": (str, "ellipse:1,0.5"),
    "density": (str, "gauss"),
    "step": (float, 1e-3),
    "corrector_tol": (float, 1e-10),
    "max_nodes": (int, 1_000_000),
    "rank_tol": (float, 1e-8),
}

SCHEMAS: dict[str, dict] = {
    "trace": {**_COMMON, "y": (str, "1.01"), "x0": (str, "")},
    "density": {**_COMMON, "y": (str, "1.01"), "y_grid": (str, "")},
    "modes": {**_COMMON, "y": (str, "1.01"), "variant": (str, "disintegration"),
              "p": (str, ""), "starts": (str, ""), "opt_tol": (float, 1e-6)},
    "om": {**_COMMON, "y": (str, "1.01"), "p_list": (str, "1,1.5,2,4,inf"),
           "recenter": (_parse_bool, False), "variant": (str, "disintegration")},
    "validate": {**_COMMON, "check": (str, "all"), "samples": (int, 2000),
                 "seed": (int, 0), "mc_step": (float, 0.01)},
    "reproduce": {**_COMMON, "figure": (str, "fig1"), "samples": (int, 0),
                  "seed": (int, 0)},
}


def _resolve_config(command: str, config_file: str | None, flag_values: dict) -> dict:
    schema = SCHEMAS[command]
    resolved = {k: default for k, (_, default) in schema.items()}
    if config_file:
        for lineno, raw in enumerate(Path(config_file).read_text().splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{config_file}:{lineno}: expected key=value, got {raw!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in schema:
                raise UsageError(f"{config_file}:{lineno}: unknown key {key!r} "
                                 f"for command {command!r}")
            parse, _ = schema[key]
            try:
                resolved[key] = parse(value.strip())
            except ValueError as exc:
                raise UsageError(f"{config_file}:{lineno}: bad value for {key}: {exc}")
    for key, value in flag_values.items():
        if value is None:
            continue
        if key not in schema:
            raise UsageError(f"unknown config key {key!r} for command {command!r}")
        parse, _ = schema[key]
        try:
            resolved[key] = parse(value) if not isinstance(value, (int, float, bool)) else value
        except ValueError as exc:
            raise UsageError(f"bad value for --{key.replace('_', '-')}: {exc}")
    return resolved


def _parse_floats(text: str) -> list[float]:
    vals = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        vals.append(math.inf if part in ("inf", "Inf") else float(part))
    return vals


def _parse_y_list(config: dict) -> list[float]:
    if config.get("y_grid"):
        a, b, k = config["y_grid"].split(",")
        return [float(v) for v in np.linspace(float(a), float(b), int(k))]
    return _parse_floats(config["y"])


def _load_problem(config: dict) -> tuple[ObservationOperator, AmbientDensity]:
    try:
        op = operator_from_spec(config["op"])
        mu = density_from_spec(config["density"], op.dim_ambient)
    except ValueError as exc:
        raise UsageError(str(exc))
    return op, mu


def _trace_at(op, mu, y: float, config: dict, x0=None):
    if x0 is None:
        # Canonical guess on the positive first axis; for the catalog operators
        # this lands the seed (and s = 0) on the fiber's first-axis crossing.
        x0 = np.zeros(op.dim_ambient)
        x0[0] = 2.0 * max(1.0, math.sqrt(abs(y)))
    seed_pt = find_seed(op, [y], x0, tol=config["corrector_tol"],
                        rank_tol=config["rank_tol"])
    return trace_fiber(op, [y], seed_pt, step=config["step"],
                       corrector_tol=config["corrector_tol"],
                       max_nodes=config["max_nodes"],
                       truncate_log_density=mu.log_density,
                       rank_tol=config["rank_tol"])


def _write_manifest(outdir: Path, command: str, config: dict) -> None:
    write_json_atomic(outdir / "manifest.json", {"command": command, "config": config})


def _ystr(y: float) -> str:
    return repr(float(y))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_trace(config: dict) -> int:
    op, mu = _load_problem(config)
    outdir = Path(config["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    x0 = np.asarray(_parse_floats(config["x0"]), float) if config["x0"] else None
    rows = []
    for y in _parse_y_list(config):
        tr = _trace_at(op, mu, y, config, x0)
        path = outdir / f"trace_y{_ystr(y)}.csv"
        write_trace_csv(path, tr, op)
        rows.append((y, tr.n_nodes, tr.total_length, tr.closed, path.name))
    _write_manifest(outdir, "trace", config)
    print(f"{'y':>10} {'nodes':>8} {'length':>12} {'closed':>7}  file")
    for y, n, length, closed, name in rows:
        print(f"{y:>10.4g} {n:>8d} {length:>12.6f} {str(closed):>7}  {name}")
    return 0


def cmd_density(config: dict) -> int:
    op, mu = _load_problem(config)
    outdir = Path(config["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    for y in _parse_y_list(config):
        tr = _trace_at(op, mu, y, config)
        path = outdir / f"density_y{_ystr(y)}.csv"
        write_profiles_csv(path, tr, mu, op)
        print(f"y={y:g}: {tr.n_nodes} nodes -> {path.name}")
    _write_manifest(outdir, "density", config)
    return 0


def cmd_modes(config: dict) -> int:
    op, mu = _load_problem(config)
    outdir = Path(config["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    y = _parse_floats(config["y"])[0]
    p = _parse_floats(config["p"])[0] if config["p"] else None
    starts = []
    if config["starts"]:
        for chunk in config["starts"].split(";"):
            starts.append(np.asarray(_parse_floats(chunk), float))
    problem = ModeProblem(density=mu, operator=op, y=[y], variant=config["variant"],
                          p=p, starts=starts, opt_tol=config["opt_tol"])
    result = solve(problem)
    tr = _trace_at(op, mu, y, config)
    scan = scan_fiber(problem, tr)
    payload = result.to_dict()
    payload["scan_minima"] = [
        {"index": i, "s": float(tr.arclen[i]), "x": [float(v) for v in tr.nodes[i]],
         "objective": obj}
        for i, obj in scan
    ]
    write_json_atomic(outdir / "modes.json", payload)
    _write_manifest(outdir, "modes", config)
    print(f"variant={config['variant']} y={y:g}: "
          f"{len(result.minimizers)} minimizer(s), {len(scan)} scan minima")
    for m in result.minimizers:
        print(f"  x={np.array2string(m.x, precision=6)}  objective={m.objective:.6f}  "
              f"residual={m.residual:.2e}")
    return 0


def _write_om_outputs(outdir: Path, tag: str, trace, mu, op, p_list, variant: str,
                      recenter: bool) -> dict[float, int]:
    s_col, p_col, v_col = [], [], []
    minima_rows = []
    counts = {}
    for p in p_list:
        vals = om_values_on_trace(mu, op, trace, base=variant, p=p)
        if recenter:
            vals = vals - vals[0]
        idx = local_minima_of_series(vals, closed=trace.closed)
        counts[p] = len(idx)
        s_col.append(trace.arclen)
        p_col.append(np.full(trace.n_nodes, p))
        v_col.append(vals)
        for i in idx:
            minima_rows.append((p, len(idx), trace.arclen[i], vals[i]))
    suffix = f"_{tag}" if tag else ""
    write_csv_atomic(outdir / f"om_scan{suffix}.csv", ["s", "p", "om_value"],
                     [np.concatenate(s_col), np.concatenate(p_col), np.concatenate(v_col)])
    cols = list(zip(*minima_rows)) if minima_rows else [[], [], [], []]
    write_csv_atomic(outdir / f"om_minima{suffix}.csv", ["p", "count", "s", "om_value"],
                     [np.asarray(c, float) for c in cols])
    return counts


def cmd_om(config: dict) -> int:
    op, mu = _load_problem(config)
    outdir = Path(config["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    y = _parse_floats(config["y"])[0]
    p_list = _parse_floats(config["p_list"])
    tr = _trace_at(op, mu, y, config)
    counts = _write_om_outputs(outdir, "", tr, mu, op, p_list, config["variant"],
                               config["recenter"])
    _write_manifest(outdir, "om", config)
    for p, c in counts.items():
        print(f"p={p:g}: {c} local minima")
    return 0


def cmd_validate(config: dict) -> int:
    op, mu = _load_problem(config)
    outdir = Path(config["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    name = config["check"]
    reports = []
    deterministic = {
        "product_slice": lambda: val.product_slice_suite(step=config["step"]),
        "pushforward": lambda: val.pushforward_suite(mu, op, step=config["step"]),
        "equivalent_observations": lambda: val.equivalent_observations_suite(
            mu, op, step=config["step"]),
        "dominated": lambda: val.dominated_suite(mu, op, step=config["step"]),
        "restriction": lambda: val.restriction_suite(mu, op, step=config["step"]),
        "bayes_gaussian": lambda: val.bayes_suite(step=config["step"]),
    }
    mc = {
        "total_probability": "disintegration",
        "total_probability_restricted": "restricted",
    }
    if name == "all":
        for fn in deterministic.values():
            reports.extend(fn())
        reports.extend(val.run_total_probability(
            mu, op, standard_predicates(), config["samples"], config["seed"],
            profile_variant="disintegration", step=config["mc_step"]))
    elif name in deterministic:
        reports.extend(deterministic[name]())
    elif name in mc:
        reports.extend(val.run_total_probability(
            mu, op, standard_predicates(), config["samples"], config["seed"],
            profile_variant=mc[name], step=config["mc_step"]))
    else:
        raise UsageError(f"unknown check {name!r}; choose one of "
                         f"{sorted(list(deterministic) + list(mc) + ['all'])}")
    write_jsonl_atomic(outdir / "reports.jsonl", [r.to_dict() for r in reports])
    _write_manifest(outdir, "validate", config)
    n_fail = sum(not r.passed for r in reports)
    width = max(len(r.check) for r in reports)
    for r in reports:
        print(f"{r.check:<{width}}  {r.verdict:<4}  lhs={r.lhs:.6g} rhs={r.rhs:.6g}"
              + (f" se={r.se_diff:.3g}" if r.se_diff is not None else ""))
    print(f"{len(reports) - n_fail}/{len(reports)} checks passed")
    return 3 if n_fail else 0


def cmd_reproduce(config: dict) -> int:
    op, mu = _load_problem(config)
    outdir = Path(config["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    if config["figure"] == "fig1":
        grid = np.linspace(-2.2, 2.2, 81)
        xx, yy = np.meshgrid(grid, grid, indexing="ij")
        pts = np.stack([xx.ravel(), yy.ravel()], axis=-1)
        density_vals = np.exp(np.asarray(mu.log_density(pts), float))
        write_csv_atomic(outdir / "prior_grid.csv", ["x1", "x2", "density"],
                         [pts[:, 0], pts[:, 1], density_vals])
        fiber_dir = outdir / "fibers"
        fiber_dir.mkdir(parents=True, exist_ok=True)
        y_values = [0.25 * k for k in range(1, 13)]
        for y in y_values:
            tr = _trace_at(op, mu, y, config)
            write_profiles_csv(fiber_dir / f"density_y{_ystr(y)}.csv", tr, mu, op)
        tr = _trace_at(op, mu, 1.01, config)
        write_profiles_csv(outdir / "density_y1.01.csv", tr, mu, op)
        print(f"fig1 data: prior grid {len(pts)} cells, {len(y_values)} fibers, "
              f"singled-out fiber y=1.01 ({tr.n_nodes} nodes)")
    elif config["figure"] == "fig2":
        p_list = [1.0, 1.5, 2.0, 4.0, math.inf]
        tr = _trace_at(op, mu, 1.01, config)
        for variant in ("restricted", "disintegration"):
            counts = _write_om_outputs(outdir, variant, tr, mu, op, p_list,
                                       variant, recenter=False)
            summary = ", ".join(f"p={p:g}:{c}" for p, c in counts.items())
            print(f"fig2 {variant}: minima counts {summary}")
    else:
        raise UsageError(f"unknown figure {config['figure']!r} (expected fig1|fig2)")
    _write_manifest(outdir, "reproduce", config)
    return 0


COMMANDS = {
    "trace": cmd_trace,
    "density": cmd_density,
    "modes": cmd_modes,
    "om": cmd_om,
    "validate": cmd_validate,
    "reproduce": cmd_reproduce,
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="fibercond",
                     description="Disintegration vs. restriction of densities on "
                                 "observation fibers: tracing, profiles, modes, OM "
                                 "scans, and validation.")
    sub = parser.add_subparsers(dest="command")
    flag_help = {
        "out": "output directory", "op": "operator spec (catalog name:params)",
        "density": "density spec (gauss | diag:... | mix:...)",
        "y": "observation value(s), comma separated", "y_grid": "start,stop,count",
        "step": "tracer step", "corrector_tol": "on-fiber residual tolerance",
        "max_nodes": "tracer node budget", "rank_tol": "regular-point threshold",
        "x0": "initial guess coordinates", "variant": "objective/profile variant",
        "p": "l_p exponent", "starts": "extra starts x1,x2;x1,x2;...",
        "opt_tol": "projected-gradient tolerance", "p_list": "l_p exponents",
        "recenter": "shift OM scan to 0 at the seed node", "check": "check name or 'all'",
        "samples": "Monte-Carlo sample count", "seed": "RNG seed",
        "mc_step": "tracer step for Monte-Carlo fibers", "figure": "fig1 | fig2",
    }
    for name, schema in SCHEMAS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="flat key=value config file")
        for key, (parse, _) in schema.items():
            flag = "--" + key.replace("_", "-")
            if parse is _parse_bool:
                p.add_argument(flag, dest=key, nargs="?", const=True, default=None,
                               type=_parse_bool, help=flag_help.get(key))
            else:
                p.add_argument(flag, dest=key, default=None, type=str,
                               help=flag_help.get(key))
    rerun = sub.add_parser("rerun")
    rerun.add_argument("--manifest", required=True, help="manifest.json of a previous run")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("no command given (expected one of "
                             + ", ".join(list(COMMANDS) + ["rerun"]) + ")")
        if args.command == "rerun":
            manifest = json.loads(Path(args.manifest).read_text())
            command = manifest["command"]
            if command not in COMMANDS:
                raise UsageError(f"manifest names unknown command {command!r}")
            config = _resolve_config(command, None, manifest["config"])
            return COMMANDS[command](config)
        flag_values = {k: getattr(args, k) for k in SCHEMAS[args.command]}
        config = _resolve_config(args.command, args.config, flag_values)
        return COMMANDS[args.command](config)
    except UsageError as exc:
        print(json.dumps({"error": "UsageError", "message": str(exc)}), file=sys.stderr)
        return 1
    except FiberCondError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
