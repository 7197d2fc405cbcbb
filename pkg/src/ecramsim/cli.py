"""Command-line interface.

    ecramsim run CONFIG.json | --scenario NAME [--out DIR]
    ecramsim project-retention --t-ref SECONDS --temp-ref K --temp-target K --ea EV
    ecramsim fit-arrhenius DATA.csv
    ecramsim phasefield CONFIG.json [--out DIR]
    ecramsim sweep CONFIG.json --param KEY=V1,V2 [--param ...] [--workers N]
    ecramsim list-scenarios

Exit status is 0 on success, 1 for configuration or input errors and 2 when
the simulation itself fails.  Output directories default to
``$ECRAMSIM_OUTPUT_ROOT/<name>`` (``./runs/<name>`` when unset).
"""

from __future__ import annotations

import argparse
import copy
import csv
import itertools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .analysis import arrhenius_fit, dump_json, retention_report
from .config import list_scenarios, load_config, parse_config, parse_phasefield_config, scenario_dict
from .errors import ConfigError, EcramError, StabilityFailure
from .phasefield import simulate, write_diagnostics_csv, write_profile_csv
from .protocol import execute
from .reports import run_analyses
from .thermo import common_tangent

OUTPUT_ENV = "ECRAMSIM_OUTPUT_ROOT"


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "runs"))


def _out_dir(explicit, resolved) -> Path:
    if explicit:
        return Path(explicit)
    if resolved.get("output"):
        out = Path(resolved["output"])
        return out if out.is_absolute() else output_root() / out
    return output_root() / resolved["name"]


def _fail(code, message):
    print(f"error: {message}", file=sys.stderr)
    return code


def _config_message(exc: ConfigError):
    msg = str(exc)
    return msg if not exc.key or exc.key in msg else f"{msg} (key: {exc.key})"


# -- run ------------------------------------------------------------------------

def run_setup(setup, out: Path) -> dict:
    """Execute ``setup`` and write record.csv, reads.csv, meta.json and analysis.json into ``out``."""
    meta = {"artifact_version": __version__, "name": setup.name, "seed": setup.seed, "config": setup.resolved}
    record = execute(setup.protocol, setup.initial, setup.models, setup.circuit, setup.sampling, setup.read,
                     meta=meta)
    out.mkdir(parents=True, exist_ok=True)
    record.write_csv(out / "record.csv")
    if record.reads:
        record.write_reads_csv(out / "reads.csv")
    meta = {**meta, "n_samples": len(record), "n_reads": len(record.reads)}
    dump_json(out / "meta.json", meta)
    summary = {"out": str(out), "n_samples": len(record), "n_reads": len(record.reads)}
    if setup.analyses:
        analysis = run_analyses(record, setup)
        dump_json(out / "analysis.json", analysis)
        summary["analyses"] = sorted(analysis)
    return summary


def cmd_run(args) -> int:
    try:
        if args.scenario and args.config:
            raise ConfigError("give either a config file or --scenario, not both", key="scenario")
        if args.scenario:
            setup = parse_config({"scenario": args.scenario})
        elif args.config:
            setup = load_config(args.config)
        else:
            raise ConfigError("a config file or --scenario is required", key="config")
    except ConfigError as exc:
        return _fail(1, _config_message(exc))
    except OSError as exc:
        return _fail(1, f"cannot read config: {exc}")
    try:
        summary = run_setup(setup, _out_dir(args.out, setup.resolved))
    except EcramError as exc:
        return _fail(2, f"simulation failed: {exc}")
    print(json.dumps(summary))
    return 0


# -- retention and Arrhenius ------------------------------------------------------

def cmd_project_retention(args) -> int:
    if (args.t_ref is None) == (args.t_ref_hours is None):
        return _fail(1, "give exactly one of --t-ref (seconds) or --t-ref-hours")
    t_ref = args.t_ref if args.t_ref is not None else args.t_ref_hours * 3600.0
    if args.ea < 0:
        return _fail(1, "--ea must be non-negative")
    try:
        report = retention_report(t_ref, args.temp_ref, args.temp_target, args.ea)
    except EcramError as exc:
        return _fail(1, str(exc))
    print(json.dumps(report))
    return 0


def read_arrhenius_csv(path):
    """Temperatures and currents from a two-column CSV; a non-numeric first row is a header."""
    temps, amps = [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row) or row[0].lstrip().startswith("#"):
                continue
            if len(row) < 2:
                raise ConfigError(f"{path}:{lineno}: expected two columns 'T,I'", key=f"line {lineno}")
            try:
                t, i = float(row[0]), float(row[1])
            except ValueError:
                if lineno == 1:
                    continue
                raise ConfigError(f"{path}:{lineno}: cannot parse {row[:2]} as numbers", key=f"line {lineno}")
            if not i > 0:
                raise ConfigError(f"{path}:{lineno}: current must be positive, got {row[1].strip()}",
                                  key=f"line {lineno}")
            temps.append(t)
            amps.append(i)
    return temps, amps


def cmd_fit_arrhenius(args) -> int:
    try:
        temps, amps = read_arrhenius_csv(args.data)
        fit = arrhenius_fit(temps, amps)
    except ConfigError as exc:
        return _fail(1, str(exc))
    except OSError as exc:
        return _fail(1, f"cannot read data: {exc}")
    except EcramError as exc:
        return _fail(1, str(exc))
    print(json.dumps(fit.to_dict()))
    return 0


# -- phase field ------------------------------------------------------------------

def cmd_phasefield(args) -> int:
    try:
        raw = json.loads(Path(args.config).read_text())
        setup = parse_phasefield_config(raw, base_dir=Path(args.config).parent)
    except json.JSONDecodeError as exc:
        return _fail(1, f"{args.config}: invalid JSON at line {exc.lineno}: {exc.msg}")
    except ConfigError as exc:
        return _fail(1, _config_message(exc))
    except OSError as exc:
        return _fail(1, f"cannot read config: {exc}")
    resolved = dict(setup.resolved)
    if "output" in raw:
        resolved["output"] = raw["output"]
    try:
        gap = common_tangent(setup.model, setup.temperature)
        run = simulate(setup.profile, setup.model, setup.temperature, setup.dt, setup.n_steps,
                       sample_every=setup.sample_every, gap=gap, boundary_flux=setup.boundary_flux,
                       scheme=setup.scheme, keep_snapshots=True)
    except StabilityFailure as exc:
        return _fail(2, f"unstable step dt={exc.dt!r}: {exc}")
    except EcramError as exc:
        return _fail(2, f"simulation failed: {exc}")
    out = _out_dir(args.out, resolved)
    out.mkdir(parents=True, exist_ok=True)
    written = 0
    last = len(run.snapshots) - 1
    for k, (t, profile) in enumerate(run.snapshots):
        step = round(t / setup.dt) if setup.dt else 0
        if step % setup.snapshot_every == 0 or k == last:
            write_profile_csv(out / f"profile_t{written:03d}.csv", profile)
            written += 1
    write_diagnostics_csv(out / "diagnostics.csv", run)
    dump_json(out / "meta.json", {"artifact_version": __version__, "config": resolved, "n_snapshots": written})
    print(json.dumps({"out": str(out), "n_snapshots": written, "final_energy": float(run.energy[-1])}))
    return 0


# -- sweep ----------------------------------------------------------------------------

def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_param(spec: str):
    """``block.key=v1,v2`` -> (["block", "key"], [v1, v2])."""
    if "=" not in spec:
        raise ConfigError(f"--param expects KEY=V1,V2,..., got {spec!r}", key=spec)
    key, values = spec.split("=", 1)
    path = key.strip().split(".")
    vals = [_parse_value(v.strip()) for v in values.split(",") if v.strip()]
    if not path[0] or not vals:
        raise ConfigError(f"--param {spec!r} needs a key and at least one value", key=key)
    return path, vals


def _set_path(raw, path, value):
    node = raw
    for part in path[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {'.'.join(path)}: {part} is not an object", key=part)
    node[path[-1]] = value


def _sweep_one(job):
    raw, out = job
    try:
        setup = parse_config(raw)
        summary = run_setup(setup, Path(out))
        return {"out": out, "status": "ok", **summary}
    except ConfigError as exc:
        return {"out": out, "status": "config_error", "error": _config_message(exc)}
    except EcramError as exc:
        return {"out": out, "status": "simulation_error", "error": str(exc)}


def cmd_sweep(args) -> int:
    try:
        if args.scenario:
            raw = {"scenario": args.scenario}
        else:
            raw = json.loads(Path(args.config).read_text())
        params = [parse_param(p) for p in args.param]
        if not params:
            raise ConfigError("sweep needs at least one --param", key="param")
        base = parse_config(raw)
    except json.JSONDecodeError as exc:
        return _fail(1, f"{args.config}: invalid JSON at line {exc.lineno}: {exc.msg}")
    except ConfigError as exc:
        return _fail(1, _config_message(exc))
    except OSError as exc:
        return _fail(1, f"cannot read config: {exc}")
    root = _out_dir(args.out, {**base.resolved, "name": base.name + "_sweep"})
    jobs, combos = [], []
    for k, values in enumerate(itertools.product(*(v for _, v in params))):
        cfg = copy.deepcopy(raw)
        try:
            for (path, _), value in zip(params, values):
                _set_path(cfg, path, value)
        except ConfigError as exc:
            return _fail(1, _config_message(exc))
        cfg.pop("output", None)
        combo = {".".join(p): v for (p, _), v in zip(params, values)}
        combos.append(combo)
        jobs.append((cfg, str(root / f"run_{k:03d}")))
    if args.workers == 1:
        results = [_sweep_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_sweep_one, jobs))
    root.mkdir(parents=True, exist_ok=True)
    runs = [{"params": c, **r} for c, r in zip(combos, results)]
    dump_json(root / "sweep.json", {"artifact_version": __version__, "base": base.resolved, "runs": runs})
    print(json.dumps({"out": str(root), "runs": len(runs),
                      "failed": sum(r["status"] != "ok" for r in runs)}))
    statuses = {r["status"] for r in runs}
    if "config_error" in statuses:
        return 1
    return 2 if "simulation_error" in statuses else 0


def cmd_list_scenarios(args) -> int:
    for name in list_scenarios():
        print(f"{name}\t{scenario_dict(name).get('description', '')}")
    return 0


# -- entry point -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ecramsim", description="ECRAM cell simulator")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario or a JSON config (a previous meta.json replays that run)")
    r.add_argument("config", nargs="?", help="config JSON file or meta.json")
    r.add_argument("--scenario", help="run a shipped scenario by name")
    r.add_argument("--out", help="output directory")
    r.set_defaults(func=cmd_run)

    pr = sub.add_parser("project-retention", help="Arrhenius projection of a retention time")
    pr.add_argument("--t-ref", type=float, help="reference retention time, seconds")
    pr.add_argument("--t-ref-hours", type=float, help="reference retention time, hours")
    pr.add_argument("--temp-ref", type=float, required=True, help="temperature of the reference time, K")
    pr.add_argument("--temp-target", type=float, required=True, help="target temperature, K")
    pr.add_argument("--ea", type=float, required=True, help="activation energy, eV")
    pr.set_defaults(func=cmd_project_retention)

    fa = sub.add_parser("fit-arrhenius", help="fit ln I against 1/T from a CSV of T,I rows")
    fa.add_argument("data")
    fa.set_defaults(func=cmd_fit_arrhenius)

    pf = sub.add_parser("phasefield", help="run a Cahn-Hilliard film simulation from a JSON config")
    pf.add_argument("config")
    pf.add_argument("--out", help="output directory")
    pf.set_defaults(func=cmd_phasefield)

    sw = sub.add_parser("sweep", help="run a config over a grid of parameter values")
    sw.add_argument("config", nargs="?")
    sw.add_argument("--scenario")
    sw.add_argument("--param", action="append", default=[], metavar="KEY=V1,V2",
                    help="dotted config key and comma-separated JSON values, e.g. circuit.c_dl=0,1e-4")
    sw.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    sw.add_argument("--out", help="output directory for the sweep")
    sw.set_defaults(func=cmd_sweep)

    ls = sub.add_parser("list-scenarios", help="list shipped scenarios")
    ls.set_defaults(func=cmd_list_scenarios)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "sweep" and bool(args.config) == bool(args.scenario):
        return _fail(1, "give either a config file or --scenario")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
