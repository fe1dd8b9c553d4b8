"""Command-line front end: ``xdiff {check,simulate,twin,sweep} --config FILE``.

Exit codes: 0 all checks pass / run completed, 1 configuration or I/O
error, 2 a check failed, 3 a check was inconclusive, 4 the solver diverged.
"""

import argparse
import datetime
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .config import load
from .diagnostics import twin_experiment
from .exceptions import ConfigError, ConfigMismatch, NewtonDiverged, XdiffError
from .hypotheses import Verdict, run_check
from .io import atomic_write_text, csv_text, dumps, format_float
from .models import REACTIONS, build_model, with_reaction
from .solver import SolverConfig, prolong, profile_field, simulate

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAIL = 2
EXIT_INCONCLUSIVE = 3
EXIT_SOLVER = 4


def thread_cap():
    """Worker count from ``XDIFF_THREADS`` (default: CPU count)."""
    raw = os.environ.get("XDIFF_THREADS")
    if raw is None or raw == "":
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"XDIFF_THREADS must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise ConfigError(f"XDIFF_THREADS must be a positive integer, got {raw!r}")
    return value


def _fan_out(func, items):
    """Map ``func`` over ``items`` on a thread pool; results keep input order."""
    items = list(items)
    workers = min(thread_cap(), max(1, len(items)))
    if workers == 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def make_model(block):
    try:
        model = build_model(block["name"], **block.get("params", {}))
        reaction = block.get("reaction")
        if reaction is not None:
            factory = REACTIONS[reaction["kind"]]
            model = with_reaction(model, factory(reaction.get("rate", 1.0)))
    except (TypeError, XdiffError) as exc:
        raise ConfigError(f"model: {exc}") from None
    return model


def make_solver_config(block, **changes):
    kw = dict(block)
    kw.update(changes)
    try:
        return SolverConfig(**kw)
    except XdiffError as exc:
        raise ConfigError(f"solver: {exc}") from None


def make_initial(model, solver_cfg, exp):
    init = exp["initial"]
    try:
        return profile_field(
            model.n,
            solver_cfg.cells,
            solver_cfg.length,
            init.get("profile", "cosine"),
            init.get("amplitude", 0.1),
            init.get("base"),
        )
    except XdiffError as exc:
        raise ConfigError(f"experiment.initial: {exc}") from None


class Run:
    """Resolved config plus output plumbing for one CLI invocation."""

    def __init__(self, command, config, seed, out, formats):
        self.command = command
        self.config = config
        self.seed = seed
        self.out = out
        self.formats = formats

    def header(self):
        return {
            "xdiff_version": __version__,
            "command": self.command,
            "seed": self.seed,
            "config": self.config,
            # the only field that differs between identical runs
            "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        }

    def comments(self):
        return [
            f"xdiff {__version__} {self.command}",
            f"seed: {self.seed}",
            "config: " + json.dumps(self.config, sort_keys=True, separators=(",", ":")),
        ]

    def path(self, name):
        return os.path.join(self.out, name)

    def write_json(self, name, doc):
        full = dict(self.header())
        full.update(doc)
        atomic_write_text(self.path(name), dumps(full))

    def want(self, fmt):
        return fmt in self.formats


def _verdict_exit(verdicts):
    if any(v is Verdict.FAIL for v in verdicts):
        return EXIT_FAIL
    if any(v is Verdict.INCONCLUSIVE for v in verdicts):
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def cmd_check(run):
    cfg = run.config
    model = make_model(cfg["model"])
    exp = cfg["experiment"]
    options = {}
    if "gamma" in exp:
        options["gamma"] = exp["gamma"]

    def one(name):
        return run_check(model, name, samples=exp["samples"], seed=run.seed, **options)

    try:
        reports = _fan_out(one, exp["checks"])
    except (ValueError, XdiffError) as exc:
        if isinstance(exc, (NewtonDiverged,)):
            raise
        raise ConfigError(f"experiment.checks: {exc}") from None
    for name, rep in zip(exp["checks"], reports):
        run.write_json(f"check_{name}.json", {"report": rep.to_dict()})
        print(f"{name:9s} {rep.verdict.value:12s} statistic={format_float(rep.statistic)}")
    if run.want("csv"):
        rows = [[r.hypothesis.value, r.verdict.value, float(r.statistic), r.samples] for r in reports]
        atomic_write_text(
            run.path("checks.csv"),
            csv_text(["check", "verdict", "statistic", "samples"], rows, run.comments()),
        )
    return _verdict_exit([r.verdict for r in reports])


def cmd_simulate(run):
    cfg = run.config
    model = make_model(cfg["model"])
    scfg = make_solver_config(cfg["solver"])
    init = make_initial(model, scfg, cfg["experiment"])
    code = EXIT_OK
    try:
        traj = simulate(model, init, scfg)
    except NewtonDiverged as exc:
        traj = exc.trajectory
        print(f"solver diverged at step {exc.step_index}: {exc}", file=sys.stderr)
        code = EXIT_SOLVER
    if run.want("csv"):
        traj.to_csv(run.path("trajectory.csv"), run.comments())
    if run.want("json") or code == EXIT_SOLVER:
        run.write_json("ledger.json", {"model": traj.model, "ledger": traj.ledger.to_dict()})
    if code == EXIT_OK:
        print(f"{len(traj) - 1} steps, final entropy {format_float(traj.ledger.entropy[-1])}")
    return code


def _twin(run, model, scfg, exp, delta, reference=None):
    init = make_initial(model, scfg, exp)
    if exp["identical_reference"]:
        fine = scfg
    else:
        fine = scfg.replace(tau=scfg.tau / exp["tau_refine"], cells=scfg.cells * exp["cells_refine"])
    try:
        return twin_experiment(model, init, delta, scfg, fine, reference=reference)
    except ConfigMismatch as exc:
        raise ConfigError(f"experiment: {exc}") from None


def cmd_twin(run):
    cfg = run.config
    model = make_model(cfg["model"])
    scfg = make_solver_config(cfg["solver"])
    res = _twin(run, model, scfg, cfg["experiment"], cfg["experiment"]["delta"])
    if run.want("json"):
        run.write_json("twin.json", {"result": res.to_dict()})
    if run.want("csv"):
        res.to_csv(run.path("twin.csv"), run.comments())
    c = "not-applicable" if res.fitted_C is None else format_float(res.fitted_C)
    print(f"H(0)={format_float(res.H0)} max H={format_float(max(res.H))} C*={c} violations={res.envelope_violations}")
    return EXIT_OK


SWEEP_COLUMNS = ["H0", "max_H", "C_star", "entropy_drift", "terminal_error"]


def cmd_sweep(run):
    cfg = run.config
    exp = cfg["experiment"]
    axis = exp["axis"]
    name, values = axis["name"], axis["values"]

    def point(value):
        model_block = json.loads(json.dumps(cfg["model"]))
        solver_block = dict(cfg["solver"])
        delta = exp["delta"]
        if name == "delta":
            if value < 0:
                raise ConfigError("experiment.axis.values: delta must be non-negative")
            delta = value
        elif name in ("tau", "eps", "T"):
            solver_block[name] = value
        else:
            model_block.setdefault("params", {})[name] = value
        model = make_model(model_block)
        scfg = make_solver_config(solver_block)
        return _twin(run, model, scfg, exp, delta)

    results = _fan_out(point, values)
    rows = []
    for value, res in zip(values, results):
        C = float("nan") if res.fitted_C is None else res.fitted_C
        rows.append([float(value), res.H0, max(res.H), C, res.entropy_drift, res.terminal_error])
    if run.want("csv"):
        atomic_write_text(run.path("sweep.csv"), csv_text([name] + SWEEP_COLUMNS, rows, run.comments()))
    if run.want("json"):
        run.write_json(
            "sweep.json",
            {"axis": name, "rows": [dict(zip([name] + SWEEP_COLUMNS, r)) for r in rows]},
        )
    for r in rows:
        print(" ".join(format_float(v) for v in r))
    return EXIT_OK


COMMAND_FUNCS = {"check": cmd_check, "simulate": cmd_simulate, "twin": cmd_twin, "sweep": cmd_sweep}


def build_parser():
    parser = argparse.ArgumentParser(prog="xdiff", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"xdiff {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMAND_FUNCS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON or TOML run configuration")
        p.add_argument("--seed", type=int, default=None, help="override experiment.seed (u64)")
        p.add_argument("--out", default=None, help="output directory (created if missing)")
        p.add_argument("--format", choices=["csv", "json", "both"], default=None)
    return parser


def _prepare_output(directory):
    try:
        os.makedirs(directory, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {directory!r}: {exc.strerror}") from None
    if not os.access(directory, os.W_OK):
        raise ConfigError(f"output directory {directory!r} is not writable")


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config, _, _ = load(args.config, args.command)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            config["experiment"]["seed"] = args.seed
        if args.out is not None:
            config["output"]["directory"] = args.out
        if args.format is not None:
            config["output"]["formats"] = ["csv", "json"] if args.format == "both" else [args.format]
        thread_cap()
        out = config["output"]["directory"]
        _prepare_output(out)
        run = Run(args.command, config, config["experiment"]["seed"], out, config["output"]["formats"])
        return COMMAND_FUNCS[args.command](run)
    except ConfigError as exc:
        where = f"{args.config}:{exc.line}: " if exc.line else f"{args.config}: "
        print(f"config error: {where}{exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NewtonDiverged as exc:
        print(f"solver diverged at step {exc.step_index}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
