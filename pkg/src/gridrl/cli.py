"""Command-line scenario runner.

Subcommands ``simulate``, ``covariation``, ``converge``, ``td0`` and
``selftest`` write CSV tables and a JSON manifest into ``--out``.  Settings
come from an optional JSON config file, overridden by flags.  Exit codes: 0
success, 2 configuration error, 3 numerical failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .characteristics import BUILTIN_BUNDLES, builtin_bundle, convergence_report, moment_compare
from .errors import ConfigError, GridRLError, NumericalError
from .identities import run_identity_suite
from .rng import resolve_seed
from .scenarios import SCENARIOS, build_scenario
from .sde import realized_covariation, simulate
from .td import TDConfig, ValueModel, martingale_loss, run_td0

__all__ = ["main", "build_parser", "load_config"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
FMT = "%.12g"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FMT % float(v)
    return str(v)


class _Writer:
    """Collects output files under one directory and checksums them."""

    def __init__(self, out: Path):
        self.out = out
        self.files: dict = {}
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create output directory {out}: {exc}") from exc

    def write(self, rel: str, text: str) -> None:
        path = self.out / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        data = text.encode("utf-8")
        path.write_bytes(data)
        self.files[rel] = hashlib.sha256(data).hexdigest()

    def csv(self, rel: str, header, rows, comment: Optional[str] = None) -> None:
        lines = [] if comment is None else [f"# {comment}"]
        lines.append(",".join(header))
        lines.extend(",".join(_fmt(v) for v in row) for row in rows)
        self.write(rel, "\n".join(lines) + "\n")

    def json(self, rel: str, obj) -> None:
        self.write(rel, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def manifest(self, command: str, config: dict, seed: int, started: float) -> None:
        obj = {
            "command": command,
            "config": config,
            "seed": seed,
            "version": __version__,
            "wall_clock": {
                "started_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(started)),
                "elapsed_s": round(time.time() - started, 3),
            },
            "outputs": dict(sorted(self.files.items())),
        }
        (self.out / "manifest.json").write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def load_config(path: Optional[str]) -> dict:
    """Read a JSON config file (empty dict when ``path`` is None)."""
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    return cfg


_KNOWN_KEYS = {
    "scenario", "params", "paths", "seed", "threads", "out", "solver", "n", "refine",
    "meshes", "bundles", "td", "moment_meshes", "loss_paths",
}


def _settings(args, defaults: dict) -> dict:
    cfg = load_config(args.config)
    unknown = set(cfg) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    s = dict(defaults)
    s.update(cfg)
    for key in ("scenario", "paths", "threads", "out", "solver", "n", "refine"):
        val = getattr(args, key, None)
        if val is not None:
            s[key] = val
    for key in ("episodes", "alpha0", "temperature"):
        val = getattr(args, key, None)
        if val is not None:
            s["td"] = dict(s.get("td") or {}, **{key: val})
    s["seed"] = resolve_seed(args.seed, cfg.get("seed"))
    if int(s.get("paths", 1)) < 1:
        raise ConfigError("--paths must be a positive integer")
    if int(s.get("threads", 1)) < 1:
        raise ConfigError("--threads must be a positive integer")
    if s.get("scenario") is not None and s["scenario"] not in SCENARIOS:
        raise ConfigError(f"unknown scenario {s['scenario']!r}; choose from {', '.join(SCENARIOS)}")
    return s


def _echo(s: dict) -> dict:
    """JSON-safe copy of the settings for the manifest (thread count excluded)."""
    return {k: v for k, v in sorted(s.items()) if k != "threads"}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(s: dict, out: _Writer) -> None:
    sc = build_scenario(s["scenario"], s.get("params"))
    cfg = sc.solver_config(s.get("n"), s.get("refine"))
    kind = s.get("solver", "grid")
    pols = list(sc.policies)
    if kind == "classical":
        pols = [lambda t, x, p=p: p.h(t, x, np.full(x.shape[:-1] + (p.d,), 0.5)) for p in pols]
    batch = simulate(kind, sc.model, pols, cfg, int(s["paths"]), s["seed"], threads=int(s["threads"]))
    m = sc.model.dims.m
    header = ["t"] + [f"x_{j + 1}" for j in range(m)] + ["jump_flag"]
    for i, row in enumerate(batch.records()):
        for k, rec in enumerate(row):
            rows = (
                [t] + list(v) + [f] for t, v, f in zip(rec.times, rec.values, rec.jump_flag)
            )
            comment = f"seed={s['seed']} scenario={sc.name} solver={kind} policy={sc.policies[k].name} path={i}"
            out.csv(f"paths/policy{k + 1}_path{i:05d}.csv", header, rows, comment)


def cmd_covariation(s: dict, out: _Writer) -> None:
    sc = build_scenario(s.get("scenario") or "two_controls", s.get("params"))
    if len(sc.policies) != 2:
        raise ConfigError("covariation needs a scenario with two policies")
    ex = sc.extras
    paths, seed, threads = int(s["paths"]), s["seed"], int(s["threads"])
    rows = []

    def row(solver, n, qc, target):
        est = float(np.mean(qc))
        se = float(np.std(qc, ddof=1) / math.sqrt(qc.size)) if qc.size > 1 else float("nan")
        rows.append([solver, n, est, target, abs(est - target), se])

    for n in s.get("meshes", [4, 16, 64, 256]):
        cfg = sc.solver_config(int(n), s.get("refine"))
        v = simulate("grid", sc.model, list(sc.policies), cfg, paths, seed, threads=threads, purpose=f"grid{n}").values
        row("grid", int(n), realized_covariation(v[:, :, 0], v[:, :, 1]), ex.get("target_grid", float("nan")))
    n = int(s.get("n") or sc.n_intervals)
    cfg = sc.solver_config(n, s.get("refine"))
    for kind in ("limit", "exploratory"):
        v = simulate(kind, sc.model, list(sc.policies), cfg, paths, seed, threads=threads, purpose=kind).values
        row(kind, n, realized_covariation(v[:, :, 0], v[:, :, 1]), ex.get(f"target_{kind}", float("nan")))
    out.csv(
        "covariation.csv",
        ["solver", "mesh_n", "estimate", "target", "abs_error", "se"],
        rows,
        f"seed={seed} scenario={sc.name} paths={paths}",
    )


def cmd_converge(s: dict, out: _Writer) -> None:
    paths, seed = int(s["paths"]), s["seed"]
    meshes = [int(n) for n in s.get("meshes", [4, 16, 64, 256])]
    summary = {}
    for name in s.get("bundles", list(BUILTIN_BUNDLES)):
        if name not in BUILTIN_BUNDLES:
            raise ConfigError(f"unknown bundle {name!r}")
        bundle, g = builtin_bundle(name)
        rep = convergence_report(bundle, g, meshes, n_paths=paths, seed=seed)
        out.write(f"convergence_{name}.csv", f"# seed={seed} bundle={name} paths={paths}\n" + rep.to_csv())
        summary[name] = {"trend_ok": rep.trend_ok, "final_abs_error": float(rep.errors[-1]), "final_se": float(rep.ses[-1])}
    # finite-dimensional moments of the two-policy scenario, pre-limit versus limit
    sc = build_scenario(s.get("scenario") or "two_controls", s.get("params"))
    threads = int(s["threads"])
    lim_cfg = sc.solver_config(sc.n_intervals, s.get("refine"))
    lim = simulate("limit", sc.model, list(sc.policies), lim_cfg, paths, seed, threads=threads, purpose="mlimit")
    funcs = _moment_functionals(sc)
    rows = []
    for n in s.get("moment_meshes", [2, 64]):
        cfg = sc.solver_config(int(n), max(1, (sc.n_intervals * sc.refine) // int(n)))
        pre = simulate("grid", sc.model, list(sc.policies), cfg, paths, seed, threads=threads, purpose=f"mgrid{n}")
        for r in moment_compare(pre.values, pre.grid, lim.values, lim.grid, [sc.T], funcs):
            rows.append([int(n), r.t, r.functional, r.pre_mean, r.limit_mean, r.abs_diff, r.pooled_se])
    out.csv(
        "moments.csv",
        ["mesh_n", "t", "functional", "pre_mean", "limit_mean", "abs_diff", "pooled_se"],
        rows,
        f"seed={seed} scenario={sc.name} paths={paths}",
    )
    out.json("converge_summary.json", summary)


def _moment_functionals(sc) -> dict:
    funcs = {
        "x1": lambda v: v[:, -1, 0, 0],
        "x1^2": lambda v: v[:, -1, 0, 0] ** 2,
    }
    if v_target := sc.extras.get("target_limit"):
        funcs["(qc-target)^2"] = lambda v: (realized_covariation(v[:, :, 0], v[:, :, 1]) - v_target) ** 2
    return funcs


def cmd_td0(s: dict, out: _Writer) -> None:
    sc = build_scenario(s.get("scenario") or "td0_bench", s.get("params"))
    if "theta_star" not in sc.extras:
        raise ConfigError(f"scenario {sc.name} has no TD(0) benchmark")
    ex = dict(sc.extras)
    ex.update({k: v for k, v in (s.get("td") or {}).items() if k in ("temperature", "alpha0", "k0", "episodes")})
    unknown = set(s.get("td") or {}) - {"temperature", "alpha0", "k0", "episodes", "tolerance"}
    if unknown:
        raise ConfigError(f"unknown td keys: {', '.join(sorted(unknown))}")
    tol = float((s.get("td") or {}).get("tolerance", 0.01))
    cfg = TDConfig(
        temperature=float(ex["temperature"]),
        alpha0=float(ex["alpha0"]),
        k0=float(ex["k0"]),
        episodes=int(ex["episodes"]),
        partition=sc.partition(s.get("n")),
        refine=int(s.get("refine") or sc.refine),
    )
    theta_star = -cfg.temperature * 0.5 * math.log(2 * math.pi * math.e * sc.params["sigma"] ** 2)
    value = ValueModel.time_to_go(ex["terminal_reward"], [lambda x: np.ones(x.shape[:-1])], sc.T)
    res = run_td0(sc.model, sc.policies[0], value, cfg, s["seed"], threads=int(s["threads"]))
    out.write("theta.csv", f"# seed={s['seed']} scenario={sc.name}\n" + res.to_csv())
    theta_hat = float(res.tail_average(100)[0])
    report = {
        "theta_hat": theta_hat,
        "theta_final": float(res.theta[0]),
        "theta_star": theta_star,
        "abs_error": abs(theta_hat - theta_star),
        "tolerance": tol,
        "pass": abs(theta_hat - theta_star) < tol,
        "episodes": cfg.episodes,
        "alpha0": cfg.alpha0,
        "k0": cfg.k0,
        "temperature": cfg.temperature,
    }
    loss_paths = int(s.get("loss_paths", 0))
    if loss_paths:
        lcfg = TDConfig(cfg.temperature, cfg.alpha0, cfg.k0, 1, cfg.partition, refine=max(cfg.refine, 8))
        for key, th in (("theta_star", theta_star), ("theta_hat", theta_hat), ("theta_star_plus_1", theta_star + 1)):
            est = martingale_loss(value.with_theta([th]), sc.model, sc.policies[0], lcfg, loss_paths, master_seed=s["seed"])
            report[f"loss_{key}"] = est.loss
            report[f"loss_se_{key}"] = est.se
    out.json("report.json", report)


def cmd_selftest(s: dict, out: _Writer) -> bool:
    results = run_identity_suite(int(s.get("paths", 20)), s["seed"])
    rows = [[r.measure, r.instances, r.max_rel_gap, r.tol, r.passed] for r in results]
    out.csv("selftest.csv", ["measure", "instances", "max_rel_gap", "tolerance", "pass"], rows, f"seed={s['seed']}")
    return all(r.passed for r in results)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridrl", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario_default=None):
        p.add_argument("--scenario", default=None, help=f"built-in scenario ({', '.join(SCENARIOS)})")
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides GRIDRL_SEED and config)")
        p.add_argument("--paths", type=int, default=None, help="number of paths per cell")
        p.add_argument("--threads", type=int, default=None, help="worker threads")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--n", type=int, default=None, help="number of partition intervals")
        p.add_argument("--refine", type=int, default=None, help="Euler steps per interval")
        return p

    p = common(sub.add_parser("simulate", help="write sample paths"))
    p.add_argument("--solver", choices=["classical", "grid", "limit", "exploratory"], default=None)
    common(sub.add_parser("covariation", help="realized covariation of the two-policy scenario"))
    common(sub.add_parser("converge", help="triangular-array convergence tables"))
    p = common(sub.add_parser("td0", help="TD(0) policy evaluation"))
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--alpha0", type=float, default=None, help="initial step size")
    p.add_argument("--temperature", type=float, default=None, help="entropy temperature lambda")
    common(sub.add_parser("selftest", help="integration identity suite"))
    return parser


_DEFAULTS = {
    "simulate": {"scenario": None, "paths": 10, "threads": 1, "out": "out/simulate", "solver": "grid"},
    "covariation": {"scenario": "two_controls", "paths": 1000, "threads": 1, "out": "out/covariation"},
    "converge": {"scenario": "two_controls", "paths": 10000, "threads": 1, "out": "out/converge"},
    "td0": {"scenario": "td0_bench", "paths": 1, "threads": 1, "out": "out/td0"},
    "selftest": {"paths": 20, "threads": 1, "out": "out/selftest"},
}

_COMMANDS = {
    "simulate": cmd_simulate,
    "covariation": cmd_covariation,
    "converge": cmd_converge,
    "td0": cmd_td0,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.time()
    try:
        s = _settings(args, _DEFAULTS[args.command])
        if args.command == "simulate" and s.get("scenario") is None:
            raise ConfigError("simulate needs --scenario")
        out = _Writer(Path(s["out"]))
        ok = _COMMANDS[args.command](s, out)
        out.manifest(args.command, _echo(s), s["seed"], started)
    except ConfigError as exc:
        print(f"gridrl: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"gridrl: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"gridrl: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except GridRLError as exc:
        print(f"gridrl: error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if ok is False:
        print("gridrl: self-test failed", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
