"""Command-line entry point: ``periodic-clt <command> --config cfg.json --out dir``.

Every command reads one JSON config, runs one module operation and writes
canonical JSON reports (sorted keys, floats with 17 significant digits,
rationals as strings) plus optional CSV plot data.  Exit status: 0 on
success, 1 on a failed validation, 2 on a configuration error, 3 when an
enumeration budget is exceeded.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping

import numpy as np

from .exceptions import BudgetExceeded, ConfigError, PeriodicCLTError, ValidationFailure

COMMANDS = (
    "periodic", "indep", "clt-global", "clt-local", "clt-weighted", "mme",
    "concentration", "mixture", "vardecomp", "oscillation-check",
)
EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_BUDGET = 0, 1, 2, 3


# ----------------------------------------------------------------------
# canonical JSON
# ----------------------------------------------------------------------
def _encode(obj) -> str:
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return '"nan"'
        if math.isinf(x):
            return '"inf"' if x > 0 else '"-inf"'
        return format(x, ".17g")
    if isinstance(obj, Fraction):
        return json.dumps(str(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, Mapping):
        items = sorted((str(k), v) for k, v in obj.items())
        return "{" + ", ".join(f"{json.dumps(k)}: {_encode(v)}" for k, v in items) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    if hasattr(obj, "to_dict"):
        return _encode(obj.to_dict())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def canonical_json(obj) -> str:
    """Deterministic JSON text for ``obj``."""
    return _encode(obj) + "\n"


# ----------------------------------------------------------------------
# configuration
# ----------------------------------------------------------------------
@dataclass
class RunConfig:
    command: str
    payload: dict
    out: Path
    seed: int | None = None
    workers: int | None = None
    emit_plot_data: bool = False
    base_dir: Path = field(default_factory=Path.cwd)


def _load_json(path: Path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def load_config(command: str, config_path, out, seed=None, workers=None,
                emit_plot_data=False) -> RunConfig:
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    path = Path(config_path)
    payload = _load_json(path)
    system = payload.get("system")
    if isinstance(system, str):
        payload["system"] = _load_json((path.parent / system).resolve())
    if "system" not in payload:
        raise ConfigError("config needs a 'system'")
    if workers is not None and workers < 1:
        raise ConfigError("--workers must be positive")
    if seed is not None and seed < 0:
        raise ConfigError("--seed must be nonnegative")
    return RunConfig(command, payload, Path(out), seed, workers, emit_plot_data, path.parent)


def _with_overrides(cfg: RunConfig, data: dict) -> dict:
    data = dict(data)
    if cfg.seed is not None:
        data["seed"] = cfg.seed
    if cfg.workers is not None:
        data["workers"] = cfg.workers
    return data


def _system(cfg: RunConfig):
    from .systems import SymbolicSystem

    return SymbolicSystem.from_dict(cfg.payload["system"])


# ----------------------------------------------------------------------
# commands; each returns (files, ok) with files = {relative name: text}
# ----------------------------------------------------------------------
def _cmd_periodic(cfg):
    from .systems import count_periodic, periodic_words

    system = _system(cfg)
    ns = [int(n) for n in cfg.payload.get("ns", range(1, 7))]
    if any(n < 1 for n in ns):
        raise ConfigError("periods must be positive")
    rows = []
    for n in ns:
        row = {"n": n, "count": count_periodic(system, n)}
        if cfg.payload.get("enumerate", False):
            words = periodic_words(system, n, budget=int(cfg.payload.get("budget", 1 << 16)))
            row["words"] = ["".join(map(str, w)) for w in words.tolist()]
        rows.append(row)
    return {"periodic.json": canonical_json({"system": system.to_dict(), "rows": rows})}, True


def _cmd_indep(cfg):
    from .indep import CylinderSchedule, GlobalIndependentSet, LocalIndependentSet

    system = _system(cfg)
    p = cfg.payload
    mode = p.get("mode", "global")
    kw = {"validation_budget": int(p.get("validation_budget", 1 << 12))}
    if "budget" in p:
        kw["budget"] = int(p["budget"])
    if mode == "global":
        est = GlobalIndependentSet(p["epsilon"], int(p["k"]), int(p["n"]), p.get("M"), **kw)
    elif mode == "local":
        est = LocalIndependentSet(p["epsilon"], CylinderSchedule.from_dict(p["schedule"]), p.get("m"),
                                  int(p.get("candidate_offset", 0)), **kw)
    else:
        raise ConfigError("mode must be 'global' or 'local'")
    est.fit(system)
    manifest = est.manifest()
    return {"indep.json": canonical_json(manifest)}, all(est.report_.values())


def _plan(cfg):
    from .harness import ExperimentPlan

    return ExperimentPlan.from_dict(_with_overrides(cfg, cfg.payload))


def _clt_files(cfg, plan, results):
    from .stats import write_cdf_csv

    files = {}
    for res in results:
        files[f"clt_l{res.l}.json"] = canonical_json(res.to_dict())
        if cfg.emit_plot_data and res.normalized is not None:
            files[f"cdf_l{res.l}.csv"] = (write_cdf_csv, res.normalized, None)
    summary = {
        "plan": plan.summary(),
        "ks": [None if r.ks is None else r.ks.ks_statistic for r in results],
        "s_l": [r.s_l for r in results],
        "degenerate": [r.degenerate for r in results],
    }
    files["summary.json"] = canonical_json(summary)
    return files


def _cmd_clt(runner):
    def cmd(cfg):
        plan = _plan(cfg)
        return _clt_files(cfg, plan, runner(plan)), True
    return cmd


def _cmd_mme(cfg):
    from .harness import mme_table, run_mme_convergence

    plan = _plan(_strip(cfg, ("mme_ns", "max_len")))
    rows = run_mme_convergence(plan, max_len=int(cfg.payload.get("max_len", 3)))
    table = mme_table(plan.system, [int(n) for n in cfg.payload.get("mme_ns", range(4, 41, 4))])
    return {"mme.json": canonical_json({"plan": plan.summary(), "independent_sets": rows,
                                        "periodic": table})}, True


def _strip(cfg, keys):
    return RunConfig(cfg.command, {k: v for k, v in cfg.payload.items() if k not in keys},
                     cfg.out, cfg.seed, cfg.workers, cfg.emit_plot_data, cfg.base_dir)


def _cmd_concentration(cfg):
    from .harness import run_birkhoff_concentration

    plan = _plan(_strip(cfg, ("orbit_points",)))
    rows = run_birkhoff_concentration(plan, int(cfg.payload.get("orbit_points", 8)))
    return {"concentration.json": canonical_json({"plan": plan.summary(), "rows": rows})}, True


def _cmd_mixture(cfg):
    from .harness import MixturePlan, run_mixture_clt
    from .stats import NormalMixture, write_cdf_csv

    plan = MixturePlan.from_dict(_with_overrides(cfg, cfg.payload))
    rows = run_mixture_clt(plan, keep_samples=cfg.emit_plot_data)
    files = {}
    for row in rows:
        z = row.pop("normalized", None)
        if z is not None:
            ref = NormalMixture(tuple(row["mixture"]["sigmas"]), tuple(row["mixture"]["probs"]))
            files[f"cdf_l{row['l']}.csv"] = (write_cdf_csv, z, ref)
    files["mixture.json"] = canonical_json({"name": plan.name, "seed": plan.seed, "rows": rows})
    return files, True


def _cmd_vardecomp(cfg):
    from .indep import CylinderSchedule
    from .observables import observable_from_dict
    from .vardecomp import find_clt_admissible, variance_components

    system = _system(cfg)
    p = cfg.payload
    h = observable_from_dict(p["observable"], system)
    schedule = CylinderSchedule.from_dict(p["schedule"])
    choice = find_clt_admissible(h, schedule, system, p.get("epsilon", "1/4"),
                                 int(p.get("generator_budget", 8)), p.get("m"))
    d = variance_components(h, choice)
    tol = 1e-9 * max(1.0, d.var_tot)
    ok = abs(d.residual) <= tol and d.cs_slack >= -1e-9
    report = {"choice": choice.to_dict(), "decomposition": d.to_dict(),
              "identity_holds": abs(d.residual) <= tol, "cauchy_schwarz_holds": d.cs_slack >= -1e-9}
    return {"vardecomp.json": canonical_json(report)}, ok


def _cmd_oscillation(cfg):
    from .harness import WildStep, check_wildly_oscillating
    from .observables import observable_from_dict

    system = _system(cfg)
    p = cfg.payload
    h = observable_from_dict(p["observable"], system)
    data = [WildStep(int(d), e, int(W), int(n)) for d, e, W, n in p["data"]]
    rep = check_wildly_oscillating(h, data, system, float(p.get("threshold", 0.1)))
    return {"oscillation.json": canonical_json(rep)}, True


def _handlers():
    from .harness import run_global_clt, run_local_clt, run_weighted_clt

    return {
        "periodic": _cmd_periodic,
        "indep": _cmd_indep,
        "clt-global": _cmd_clt(run_global_clt),
        "clt-local": _cmd_clt(run_local_clt),
        "clt-weighted": _cmd_clt(run_weighted_clt),
        "mme": _cmd_mme,
        "concentration": _cmd_concentration,
        "mixture": _cmd_mixture,
        "vardecomp": _cmd_vardecomp,
        "oscillation-check": _cmd_oscillation,
    }


def _write(out: Path, files: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for name, content in files.items():
        path = out / name
        if isinstance(content, tuple):
            writer, samples, ref = content
            writer(path, samples, ref)
        else:
            path.write_text(content)


def run(cfg: RunConfig) -> int:
    """Run one configured command; returns the exit status."""
    try:
        files, ok = _handlers()[cfg.command](cfg)
    except ValidationFailure as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (PeriodicCLTError, KeyError, TypeError, ValueError) as exc:
        print(f"configuration error: {exc!r}", file=sys.stderr)
        return EXIT_CONFIG
    _write(cfg.out, files)
    return EXIT_OK if ok else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="periodic-clt", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON config file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--workers", type=int, default=None, help="worker threads")
    parser.add_argument("--emit-plot-data", action="store_true", help="also write CDF CSV files")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.command, args.config, args.out, args.seed, args.workers,
                          args.emit_plot_data)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
