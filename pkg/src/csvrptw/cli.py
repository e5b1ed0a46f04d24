"""Command-line entry point: ``csvrptw {gen,solve,experiment,oracle,demo,report}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .core import QUADRATIC, ScenarioSet, SolomonParseError, InstanceError, load_solomon
from .datagen import DimensionError, GenerativeModel, canonical_kind, make_dataset, make_testset
from .harness import (ExperimentConfig, ResultRow, cell_seeds, evaluate_test_cost, read_rows, report_csv,
                      rows_to_csv, run_experiment, run_illustrative_example)
from .methods import ConfigError, MethodConfig, MethodContext, canonical_method
from .oracle import OracleTooLarge, brute_force_optimum
from .solver import ScenarioObjective, SolverLimits

EXIT_OK, EXIT_CONFIG, EXIT_LIMIT = 0, 2, 3
MODEL_CHOICES = {"linear": "linear", "exp": "exponential", "sigmoid": "sigmoidal"}


def _model(name: str) -> str:
    try:
        return canonical_kind(MODEL_CHOICES.get(name, name))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _common(p: argparse.ArgumentParser, instance=True):
    if instance:
        p.add_argument("--instance", default="R101")
        p.add_argument("--n-customers", type=int, default=10)
    p.add_argument("--model", default="linear", help="linear, exp or sigmoid")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="csvrptw", description="Contextual stochastic VRPTW solver and experiments")
    sub = ap.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen", help="generate a training dataset and test set")
    _common(g)
    g.add_argument("--n", type=int, default=100)
    g.add_argument("--p", type=int, default=10)
    g.add_argument("--n-x", type=int, default=10)
    g.add_argument("--n-t", type=int, default=50)

    s = sub.add_parser("solve", help="solve one method on one instance and evaluate it on a test set")
    _common(s)
    s.add_argument("--method", default="SAA")
    s.add_argument("--time-limit", type=float, default=600.0)
    s.add_argument("--n", type=int, default=50)
    s.add_argument("--p", type=int, default=10)
    s.add_argument("--n-x", type=int, default=1)
    s.add_argument("--n-t", type=int, default=50)
    s.add_argument("--gap-threshold", type=float, default=1e-6)

    e = sub.add_parser("experiment", help="run a grid described by a JSON config file")
    e.add_argument("config")
    e.add_argument("--out", default=None)
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--time-limit", type=float, default=None)

    o = sub.add_parser("oracle", help="brute-force optimum of the sample-average problem (at most 8 customers)")
    _common(o)
    o.add_argument("--n", type=int, default=5)
    o.add_argument("--method", default=None, help="also run branch-and-price with this label and compare")
    o.add_argument("--time-limit", type=float, default=600.0)

    d = sub.add_parser("demo", help="two-context illustrative example")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--budget", type=int, default=20)
    d.add_argument("--out", default=None)

    r = sub.add_parser("report", help="aggregate results.csv files into a gap table")
    r.add_argument("paths", nargs="+", help="results.csv files or experiment directories")
    r.add_argument("--out", default=None)
    return ap


def _emit(text: str, out):
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _setup(args):
    inst = load_solomon(args.instance, args.n_customers)
    kind = _model(args.model)
    seeds = cell_seeds(args.seed)
    model = GenerativeModel.create(kind, inst, args.p - 1, seeds["model"])
    return inst, kind, seeds, model


def cmd_gen(args) -> int:
    inst, kind, seeds, model = _setup(args)
    data = make_dataset(model, inst, args.n, args.p, seeds["data"])
    test = make_testset(model, inst, args.n_x, args.n_t, seeds["test"])
    out = Path(args.out or f"data_{inst.name}_{kind}_{args.seed}")
    data.save(out)
    np.savetxt(out / "test_features.csv", test.features, delimiter=",", fmt="%.17g")
    np.save(out / "test_times.npy", test.times)
    (out / "instance.json").write_text(inst.to_json())
    print(f"wrote {out}")
    return EXIT_OK


def cmd_solve(args) -> int:
    method = canonical_method(args.method)
    inst, kind, seeds, model = _setup(args)
    data = make_dataset(model, inst, args.n, args.p, seeds["data"])
    test = make_testset(model, inst, args.n_x, args.n_t, seeds["test"])
    limits = SolverLimits(time_limit=args.time_limit)
    ctx = MethodContext(inst, data, QUADRATIC, MethodConfig(csaa_seed=seeds["csaa"]), limits)
    pres = [ctx.prescribe(method, test.features[k], test.times[k]) for k in range(test.n_x)]
    if any(p.solution is None for p in pres):
        print("no feasible solution within the limits", file=sys.stderr)
        return EXIT_LIMIT
    ev = evaluate_test_cost(pres, test, inst)
    gap = max(p.report.gap for p in pres)
    row = ResultRow(inst.name, inst.n_customers, kind, args.seed, method, ev["test_cost"], ev["first_stage"],
                    ev["second_stage"], float("nan"), gap, float("nan"),
                    "optimal" if all(p.report.status == "optimal" for p in pres) else "limit",
                    sum(p.report.wall_time for p in pres))
    payload = {"reports": [p.report.to_dict() for p in pres], "row": row.__dict__}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(payload, indent=2, sort_keys=True, default=str))
        (out / "results.csv").write_text(rows_to_csv([row]))
    else:
        print(rows_to_csv([row]), end="")
    return EXIT_LIMIT if gap > args.gap_threshold else EXIT_OK


def cmd_experiment(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    if args.time_limit is not None:
        cfg.time_limit = args.time_limit
    rows = run_experiment(cfg, args.out, args.workers, progress=lambda m: print(m, file=sys.stderr))
    print(f"wrote {len(rows)} rows to {args.out or cfg.out_dir}")
    return EXIT_LIMIT if any(r.status != "optimal" for r in rows) else EXIT_OK


def cmd_oracle(args) -> int:
    inst = load_solomon(args.instance, args.n_customers)
    kind = _model(args.model)
    seeds = cell_seeds(args.seed)
    model = GenerativeModel.create(kind, inst, 1, seeds["model"])
    data = make_dataset(model, inst, args.n, 2, seeds["data"])
    obj = ScenarioObjective(ScenarioSet.uniform(data.scenario_times(inst)), QUADRATIC)
    sol = brute_force_optimum(inst, obj)
    out = {"oracle": sol.to_dict(), "objective": sol.objective}
    code = EXIT_OK
    if args.method:
        from .solver import branch_and_price

        rep = branch_and_price(obj, inst, SolverLimits(time_limit=args.time_limit), method=args.method)
        out["branch_and_price"] = rep.to_dict()
        out["agree"] = abs(rep.objective - sol.objective) <= 1e-6
        code = EXIT_OK if rep.status == "optimal" else EXIT_LIMIT
    _emit(json.dumps(out, indent=2, sort_keys=True), args.out)
    return code


def cmd_demo(args) -> int:
    res = run_illustrative_example(args.seed, args.budget)
    out = args.out or f"demo_{args.seed}.json"
    _emit(json.dumps(res, indent=2, sort_keys=True), out)
    print(f"pattern found: {res['pattern_found']} (seed {res['matching_seed']}); wrote {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    rows = []
    for p in args.paths:
        path = Path(p)
        rows += read_rows(path / "results.csv" if path.is_dir() else path)
    _emit(report_csv(rows), args.out)
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "experiment": cmd_experiment, "oracle": cmd_oracle,
            "demo": cmd_demo, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.cmd](args)
    except (ConfigError, DimensionError, SolomonParseError, InstanceError, OracleTooLarge, FileNotFoundError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
