"""Command-line entry point: ``nsbandit tune | verify | synth``.

Exit codes: 0 success, 2 usage error, 3 infeasible budget, 4 counterexample
found by ``verify``.

Config files are INI with an optional ``[tune]`` section using the long flag
names (``budget = 400``, ``strategy = uniform,sh``, ...) and an optional
``[hyperparams]`` section, one spec per key::

    [hyperparams]
    lambda = 1e-6 1 log 10
    d = 2 50 linear 4 int

Values given on the command line override the file, which overrides the
built-in defaults.
"""

from __future__ import annotations

import argparse
import configparser
import json
import multiprocessing
import os
import sys
from functools import partial
from pathlib import Path

import numpy as np

from . import __version__
from . import dataio
from .core import CostLedger
from .learners import (
    HyperparamSpec,
    MatrixCompletionArm,
    PegasosArm,
    RidgeSGDArm,
    make_split,
    prepare,
    sample_configs,
    split_ratings,
)
from .strategies import STRATEGIES, InfeasibleBudget, doubling, min_budget
from .theory import (
    LimitProfile,
    adversarial_instance,
    exponential_envelope,
    power_envelope,
    uniform_sufficient_budget,
)
from .verification import SELECTORS, run_suites

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_COUNTEREXAMPLE = 4

LEARNERS = ("ridge", "pegasos", "matcomp")

DEFAULT_SPECS = {
    "ridge": [HyperparamSpec("lambda", 1e-6, 1.0, "log", 10)],
    "pegasos": [HyperparamSpec("lambda", 1e-6, 1.0, "log", 10),
                HyperparamSpec("gamma", 1.0, 1e3, "log", 10)],
    "matcomp": [HyperparamSpec("d", 2, 50, "linear", 4, integer=True),
                HyperparamSpec("sigma", 0.01, 3.0, "linear", 4),
                HyperparamSpec("lambda", 1e-6, 1.0, "log", 4)],
}
# matrix completion uses an evenly spaced grid, the others random draws
DEFAULT_MODE = {"ridge": "random", "pegasos": "random", "matcomp": "grid"}

TUNE_DEFAULTS = {
    "learner": "ridge",
    "data": None,
    "strategy": "uniform,sh",
    "budget": None,
    "doublings": None,
    "trials": 1,
    "seed": None,
    "workers": None,
    "warm_start": False,
    "out": None,
    "format": "csv",
    "samples": None,
    "mode": None,
    "clock": "modeled",
}
_INT_KEYS = {"budget", "doublings", "trials", "seed", "workers", "samples"}
_BOOL_KEYS = {"warm_start"}

# modeled clock: one abstract operation costs one nanosecond
_MS_PER_OP = 1e-6


class UsageError(Exception):
    pass


# --- configuration -------------------------------------------------------------------

def parse_spec(name: str, text: str) -> HyperparamSpec:
    """``"lo hi [log|linear] [samples] [int]"`` -> HyperparamSpec."""
    parts = text.split()
    if len(parts) < 2:
        raise UsageError(f"hyperparameter {name!r}: need at least 'lo hi'")
    try:
        lo, hi = float(parts[0]), float(parts[1])
        scale = parts[2] if len(parts) > 2 else "log"
        samples = int(parts[3]) if len(parts) > 3 else 10
        integer = len(parts) > 4 and parts[4] in ("int", "integer")
        return HyperparamSpec(name, lo, hi, scale, samples, integer)
    except ValueError as exc:
        raise UsageError(f"hyperparameter {name!r}: {exc}") from None


def read_config(path) -> tuple[dict, list[HyperparamSpec] | None]:
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    values = {}
    if parser.has_section("tune"):
        for key, raw in parser.items("tune"):
            key = key.replace("-", "_")
            if key not in TUNE_DEFAULTS:
                raise UsageError(f"config {path}: unknown key {key!r}")
            values[key] = _coerce(key, raw)
    specs = None
    if parser.has_section("hyperparams"):
        specs = [parse_spec(k, v) for k, v in parser.items("hyperparams")]
    return values, specs


def _coerce(key: str, raw: str):
    if key in _INT_KEYS:
        try:
            return int(raw)
        except ValueError:
            raise UsageError(f"{key} must be an integer, got {raw!r}") from None
    if key in _BOOL_KEYS:
        lowered = raw.strip().lower()
        if lowered not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
            raise UsageError(f"{key} must be a boolean, got {raw!r}")
        return lowered in ("1", "true", "yes", "on")
    return raw


def resolve_tune(args: argparse.Namespace) -> dict:
    """Merge defaults, config file and flags into one plain dict."""
    cfg = dict(TUNE_DEFAULTS)
    specs = None
    if args.config:
        file_values, specs = read_config(args.config)
        cfg.update(file_values)
    for key in TUNE_DEFAULTS:
        value = getattr(args, key, None)
        if value is not None and value is not False:
            cfg[key] = value
    if cfg["learner"] not in LEARNERS:
        raise UsageError(f"unknown learner {cfg['learner']!r}; choose from {', '.join(LEARNERS)}")
    strategies = [s.strip() for s in str(cfg["strategy"]).split(",") if s.strip()]
    unknown = [s for s in strategies if s not in STRATEGIES]
    if not strategies or unknown:
        raise UsageError(f"unknown strategy {','.join(unknown) or '(none)'}; "
                         f"choose from {', '.join(STRATEGIES)}")
    cfg["strategy"] = ",".join(strategies)
    if cfg["seed"] is None:
        raise UsageError("--seed is required")
    if cfg["budget"] is None and cfg["doublings"] is None:
        raise UsageError("give --budget, --doublings, or both")
    if cfg["trials"] < 1:
        raise UsageError("--trials must be positive")
    if cfg["doublings"] is not None and cfg["doublings"] < 1:
        raise UsageError("--doublings must be positive")
    if cfg["format"] not in ("csv", "json"):
        raise UsageError("--format must be csv or json")
    if cfg["clock"] not in ("modeled", "measured"):
        raise UsageError("--clock must be modeled or measured")
    if cfg["data"] is not None and not Path(cfg["data"]).exists():
        raise UsageError(f"data file not found: {cfg['data']}")
    mode = cfg["mode"] or DEFAULT_MODE[cfg["learner"]]
    if mode not in ("random", "grid"):
        raise UsageError("--mode must be random or grid")
    cfg["mode"] = mode
    if specs is None:
        specs = DEFAULT_SPECS[cfg["learner"]]
    if cfg["samples"] is not None:
        specs = [HyperparamSpec(s.name, s.lo, s.hi, s.scale, cfg["samples"], s.integer)
                 for s in specs]
    cfg["hyperparams"] = [
        {"name": s.name, "lo": s.lo, "hi": s.hi, "scale": s.scale,
         "samples": s.samples, "integer": s.integer} for s in specs]
    return cfg


def manifest(cfg: dict) -> dict:
    """Everything that determines the output; worker count and destination do not."""
    keep = {k: v for k, v in cfg.items() if k not in ("workers", "out")}
    return {"tool": "nsbandit", "version": __version__, "command": "tune", "config": keep}


# --- tune ------------------------------------------------------------------------------

def trial_seeds(seed: int, trial: int) -> dict:
    """Independent seeds for one trial, derived from the base seed."""
    ss = np.random.SeedSequence([seed, trial])
    split, configs, arms = (int(s.generate_state(1)[0]) for s in ss.spawn(3))
    return {"split": split, "configs": configs, "arms": arms}


def load_data(cfg: dict):
    learner, path, seed = cfg["learner"], cfg["data"], cfg["seed"]
    if learner == "matcomp":
        if path:
            return dataio.load_ratings(path)
        return dataio.synth_lowrank(60, 50, 2, 0.3, seed, noise=0.1)
    if path:
        ds = dataio.load_sparse(path) if path.endswith((".svm", ".libsvm")) else dataio.load_dense(path)
    elif learner == "ridge":
        ds = dataio.synth_regression(500, 10, 0.5, seed)
    else:
        ds = dataio.synth_classification(300, 2, seed)
    return ds


def build_arms(cfg: dict, data, split, configs: list[dict], arm_seed: int) -> list:
    learner = cfg["learner"]
    if learner == "ridge":
        prepared = prepare(data, split, normalize_labels=True)
        return [RidgeSGDArm(prepared, c["lambda"], arm_id=i, seed=arm_seed)
                for i, c in enumerate(configs)]
    if learner == "pegasos":
        prepared = prepare(data, split)
        return [PegasosArm(prepared, c["lambda"], c["gamma"], arm_id=i, seed=arm_seed)
                for i, c in enumerate(configs)]
    parts = split_ratings(data, split)
    return [MatrixCompletionArm(parts, c["d"], c["lambda"], c["sigma"], arm_id=i, seed=arm_seed)
            for i, c in enumerate(configs)]


def _specs(cfg: dict) -> list[HyperparamSpec]:
    return [HyperparamSpec(**h) for h in cfg["hyperparams"]]


def _winner_label(config: dict) -> str:
    return json.dumps(config, sort_keys=True, separators=(",", ":"))


def _wall_ms(cfg: dict, ledger) -> float:
    if cfg["clock"] == "measured":
        return round(ledger.elapsed * 1000.0, 3)
    return ledger.cost * _MS_PER_OP


def run_trial(cfg: dict, trial: int) -> list[dataio.ResultRecord]:
    """All strategies on one trial: same split, same configs, fresh arms each."""
    seeds = trial_seeds(cfg["seed"], trial)
    data = load_data(cfg)
    split = make_split(data, seeds["split"])
    configs = sample_configs(_specs(cfg), seeds["configs"], mode=cfg["mode"])
    records = []
    for name in cfg["strategy"].split(","):
        arms = build_arms(cfg, data, split, configs, seeds["arms"])
        if cfg["doublings"] is None:
            result = STRATEGIES[name](arms, cfg["budget"])
            steps = [(cfg["budget"], result.winner, result.ledger,
                      arms[result.winner].test_loss())]
        else:
            steps = []
            for step in doubling(name, arms, cfg["doublings"], cfg["warm_start"],
                                 start_budget=cfg["budget"]):
                # test loss now, before the next run resets or advances the arm
                ledger = _running_ledger(steps, step.result.ledger)
                steps.append((step.budget, step.recommendation, ledger,
                              arms[step.recommendation].test_loss()))
        for budget, winner, ledger, test_loss in steps:
            records.append(dataio.ResultRecord(
                trial=trial, strategy=name, budget=budget,
                winner=_winner_label(configs[winner]), test_loss=float(test_loss),
                pulls=ledger.total_pulls, loss_observations=ledger.loss_observations,
                wall_ms=_wall_ms(cfg, ledger)))
    return records


def _running_ledger(steps, latest):
    """Cumulative ledger across doubling steps so far."""
    total = CostLedger()
    if steps:
        total.merge(steps[-1][2])
    total.merge(latest)
    return total


def check_budgets(cfg: dict) -> None:
    n = len(sample_configs(_specs(cfg), 0, mode=cfg["mode"]))
    budget = cfg["budget"]
    if budget is None:
        return
    for name in cfg["strategy"].split(","):
        minimum = min_budget(name, n)
        if budget < minimum:
            raise InfeasibleBudget(name, budget, minimum, n)


def cmd_tune(cfg: dict) -> list[dataio.ResultRecord]:
    """Run every (trial, strategy) pair; records come back sorted."""
    check_budgets(cfg)
    workers = cfg["workers"] or os.cpu_count() or 1
    trials = range(cfg["trials"])
    job = partial(run_trial, cfg)
    if workers <= 1 or cfg["trials"] == 1:
        chunks = [job(t) for t in trials]
    else:
        with multiprocessing.get_context("spawn").Pool(min(workers, cfg["trials"])) as pool:
            chunks = pool.map(job, trials)
    records = [r for chunk in chunks for r in chunk]
    return sorted(records, key=dataio.ResultRecord.sort_key)


# --- verify & synth -------------------------------------------------------------------

def cmd_verify(selector: str, count: int, seed: int) -> dict:
    return run_suites(selector, count, seed)


def _parse_beta(text: str):
    kind, _, rest = text.partition(":")
    try:
        params = [float(v) for v in rest.split(",")] if rest else []
    except ValueError:
        raise UsageError(f"bad --beta parameters {rest!r}") from None
    if kind == "power":
        return power_envelope(*params)
    if kind == "exponential":
        return exponential_envelope(*params)
    raise UsageError(f"unknown --beta family {kind!r}; use power:c,p or exponential:c,rho")


def cmd_synth(args: argparse.Namespace) -> list[Path]:
    out = Path(args.out)
    header = json.dumps({"tool": "nsbandit", "version": __version__, "command": "synth",
                         "config": _synth_config(args)}, sort_keys=True)
    if args.kind == "adversarial":
        if args.nu:
            nus = [float(v) for v in args.nu.split(",")]
            if len(nus) != args.n:
                raise UsageError(f"--nu has {len(nus)} values for n={args.n}")
        else:
            nus = [a / args.n for a in range(args.n)]
        try:
            profile = LimitProfile(tuple(nus))
            beta = _parse_beta(args.beta)
            seqs = adversarial_instance(profile, beta)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for i, seq in enumerate(seqs):
            path = out / f"arm{i}.csv"
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(f"# {header}\n")
                for v in seq.values(args.horizon):
                    fh.write(f"{v!r}\n")
            written.append(path)
        boundary = uniform_sufficient_budget(profile, beta).z
        doc = {"meta": json.loads(header), "nu": list(nus), "beta": beta.describe(),
               "boundary_budget": boundary, "horizon": args.horizon,
               "files": [p.name for p in written]}
        path = out / "manifest.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return written + [path]
    if args.kind == "regression":
        ds = dataio.synth_regression(args.examples, args.dims, args.noise, args.seed)
        dataio.write_dense(ds, out, header=header)
    elif args.kind == "classification":
        ds = dataio.synth_classification(args.examples, args.dims, args.seed)
        dataio.write_dense(ds, out, header=header)
    else:
        r = dataio.synth_lowrank(args.users, args.items, args.rank, args.density, args.seed,
                                 noise=args.noise)
        dataio.write_ratings(r, out, header=header)
    return [out]


def _synth_config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items())
            if k not in ("func", "command", "out")}


# --- argument parsing -------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nsbandit", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    tune = sub.add_parser("tune", help="hyperparameter search with bandit strategies")
    tune.add_argument("--config", help="INI config file (see module docs)")
    tune.add_argument("--learner", choices=LEARNERS)
    tune.add_argument("--data", help="dataset file; synthetic data when omitted")
    tune.add_argument("--strategy", help="comma-separated subset of " + ",".join(STRATEGIES))
    tune.add_argument("--budget", type=int, help="total pulls (start budget with --doublings)")
    tune.add_argument("--doublings", type=int, help="number of budget doublings")
    tune.add_argument("--trials", type=int)
    tune.add_argument("--seed", type=int)
    tune.add_argument("--workers", type=int, help="parallel trials (default: CPU count)")
    tune.add_argument("--warm-start", dest="warm_start", action="store_true", default=False,
                      help="keep arm progress across doublings")
    tune.add_argument("--samples", type=int, help="values per hyperparameter")
    tune.add_argument("--mode", choices=("random", "grid"))
    tune.add_argument("--clock", choices=("modeled", "measured"),
                      help="wall_ms from modeled op counts (default, reproducible) or timers")
    tune.add_argument("--out", help="output file (default: stdout)")
    tune.add_argument("--format", choices=("csv", "json"))

    verify = sub.add_parser("verify", help="run the theorem property suites")
    verify.add_argument("--theorem", choices=SELECTORS, default="all")
    verify.add_argument("--instances", type=int, default=100)
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--out", help="JSON report path (default: stdout)")

    synth = sub.add_parser("synth", help="write synthetic datasets or adversarial sequences")
    kinds = synth.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    adv = kinds.add_parser("adversarial")
    adv.add_argument("--n", type=int, required=True)
    adv.add_argument("--nu", help="comma-separated sorted limits (default a/n)")
    adv.add_argument("--beta", default="power:1,1", help="power:c,p or exponential:c,rho")
    adv.add_argument("--horizon", type=int, default=64)
    adv.add_argument("--out", required=True, help="output directory")
    for kind in ("regression", "classification"):
        p = kinds.add_parser(kind)
        p.add_argument("--examples", type=int, required=True)
        p.add_argument("--dims", type=int, required=True)
        p.add_argument("--out", required=True)
        if kind == "regression":
            p.add_argument("--noise", type=float, default=0.1)
    low = kinds.add_parser("lowrank")
    low.add_argument("--users", type=int, required=True)
    low.add_argument("--items", type=int, required=True)
    low.add_argument("--rank", type=int, required=True)
    low.add_argument("--density", type=float, default=0.3)
    low.add_argument("--noise", type=float, default=0.0)
    low.add_argument("--out", required=True)
    for p in (adv, low, *[kinds.choices[k] for k in ("regression", "classification")]):
        p.add_argument("--seed", type=int, default=0)
    return parser


def _write(text: str, out) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "tune":
            cfg = resolve_tune(args)
            records = cmd_tune(cfg)
            _write(dataio.format_results(records, cfg["format"], manifest(cfg)), cfg["out"])
            return EXIT_OK
        if args.command == "verify":
            if args.instances < 1:
                raise UsageError("--instances must be positive")
            report = cmd_verify(args.theorem, args.instances, args.seed)
            _write(json.dumps(report, indent=2, sort_keys=True) + "\n", args.out)
            return EXIT_COUNTEREXAMPLE if report["counterexamples"] else EXIT_OK
        for path in cmd_synth(args):
            print(path)
        return EXIT_OK
    except UsageError as exc:
        print(f"nsbandit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleBudget as exc:
        print(f"nsbandit: error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ValueError, OSError) as exc:
        print(f"nsbandit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
