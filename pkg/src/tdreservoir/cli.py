"""``tdreservoir`` command-line entry point.

Exit codes: 0 success, 1 runtime error, 2 usage error, 3 configuration error.
Every long option may also be given in a ``--config`` file as
``option-name = value``; command-line flags take precedence.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from ._engine import BACKENDS
from .config import ExperimentConfig, read_config_file, write_config_file
from .neuron import CurveParams, InvalidParamsError, default_curves, load_curves, save_curves
from .reservoir import ConfigError, GridTopology, Reservoir, ReservoirConfig, write_state_dump

log = logging.getLogger("tdreservoir")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_CONFIG = 0, 1, 2, 3
COMMANDS = ("stm", "xor", "digits", "simulate", "export-states", "gen-synthetic-digits", "curves")


class UsageError(Exception):
    pass


# -- argument parsing ----------------------------------------------------

def _grid(text: str) -> tuple[int, int]:
    try:
        r, c = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 10x10, got {text!r}") from None
    return r, c


def _curve_kv(text: str) -> tuple[str, float]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    k, v = (s.strip() for s in text.split("=", 1))
    names = {f.name for f in fields(CurveParams)}
    if k not in names:
        raise argparse.ArgumentTypeError(f"unknown curve parameter {k!r}")
    try:
        return k, (int(v) if k == "n_points" else float(v))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad value for {k}: {v!r}") from None


def _add_reservoir_args(p: argparse.ArgumentParser, grid=(10, 10)) -> None:
    g = p.add_argument_group("reservoir")
    g.add_argument("--grid", type=_grid, default=grid, help=f"grid size RxC (default {grid[0]}x{grid[1]})")
    g.add_argument("--boundary", choices=("open", "toroidal"), default="open")
    g.add_argument("--variation", type=float, default=0.0, help="std of per-neuron variation factors")
    g.add_argument("--variation-seed", type=int, default=None,
                   help="seed for variation draws (default: the run seed); weights stay tied to --seed")
    g.add_argument("--single-vco", action="store_true", help="read only the positive-VCO counter")
    g.add_argument("--input-word", type=int, default=None, help="weight word of the input pulses")
    g.add_argument("--sigma-max", type=float, default=None, help="|g| mapped to the largest weight word")
    g.add_argument("--curve-file", default=None, help="load behavioral curves from a file")
    g.add_argument("--curve", type=_curve_kv, action="append", default=[], metavar="KEY=VALUE",
                   help="override a default-curve parameter (repeatable)")
    g.add_argument("--backend", choices=sorted(BACKENDS), default=None)
    g.add_argument("--workers", type=int, default=1, help="threads inside the compiled kernel")


def _add_common(p: argparse.ArgumentParser, seeds: bool = False) -> None:
    p.add_argument("--config", default=None, help="key = value config file")
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--seed", type=int, default=0, help="base seed")
    if seeds:
        p.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds from --seed")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tdreservoir", description="Time-domain spiking reservoir simulator")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    for kind in ("stm", "xor"):
        p = sub.add_parser(kind, help=f"{'delay' if kind == 'stm' else 'temporal XOR'} capacity task")
        _add_common(p, seeds=True)
        _add_reservoir_args(p)
        pr = p.add_argument_group("protocol")
        pr.add_argument("--total", type=int, default=15000)
        pr.add_argument("--washout", type=int, default=1500)
        pr.add_argument("--train", type=int, default=10500)
        pr.add_argument("--test", type=int, default=3000)
        pr.add_argument("--k-max", type=int, default=10 if kind == "stm" else 7)
        pr.add_argument("--input-seed", type=int, default=None,
                        help="fixed input-bit seed (default: each run's seed)")
        pr.add_argument("--lambda", dest="ridge_lambda", type=float, default=None,
                        help="ridge term (default: relative 1e-6 * trace/N)")

    p = sub.add_parser("digits", help="spoken-digit classification with 5-fold cross-validation")
    _add_common(p)
    _add_reservoir_args(p, grid=(20, 20))
    p.add_argument("--data", default=None, help="directory of feature files")
    p.add_argument("--synthetic", action="store_true", help="use the built-in synthetic set")
    p.add_argument("--per-class", type=int, default=50, help="synthetic instances per class")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--lambda", dest="ridge_lambda", type=float, default=None)
    p.add_argument("--no-baseline", action="store_true", help="skip the linear baseline")
    p.add_argument("--decision", choices=("mean", "last"), default="mean",
                   help="per-instance rule: argmax of time-averaged or final-step outputs")
    p.add_argument("--no-reset-between", dest="reset_between", action="store_false",
                   help="carry reservoir state across instances instead of resetting")

    for name, helptext in (("simulate", "run a random binary input and dump c_n/c_p per neuron"),
                           ("export-states", "dump state vectors with the 4-step input-history label")):
        p = sub.add_parser(name, help=helptext)
        _add_common(p)
        _add_reservoir_args(p)
        p.add_argument("--steps", type=int, default=1000)
        p.add_argument("--input", default=None, help="text file with one input value per line")

    p = sub.add_parser("gen-synthetic-digits", help="write the synthetic digit set to a directory")
    _add_common(p)
    p.add_argument("--per-class", type=int, default=50)

    p = sub.add_parser("curves", help="write (or check) a behavioral-curve file")
    _add_common(p)
    p.add_argument("--curve", type=_curve_kv, action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--check", default=None, help="validate an existing curve file instead")
    return ap


def _subparser(ap: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for a in ap._actions:
        if isinstance(a, argparse._SubParsersAction):
            return a.choices[command]
    raise KeyError(command)


def _apply_config_file(sp: argparse.ArgumentParser, path: str) -> dict:
    values = read_config_file(path)
    actions = {a.dest: a for a in sp._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, raw in values.items():
        a = actions.get(key)
        if a is None:
            raise ConfigError(f"{path}: unknown key {key!r}")
        try:
            if isinstance(a, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
                if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(raw)
                val = raw.lower() in ("true", "1", "yes")
            elif isinstance(a, argparse._AppendAction):
                val = [a.type(s) if a.type else s for s in (x.strip() for x in raw.split(",")) if s]
            else:
                val = a.type(raw) if a.type else raw
                if a.choices is not None and val not in a.choices:
                    raise ValueError(f"{raw!r} not in {sorted(a.choices)}")
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise ConfigError(f"{path}: bad value for {key}: {exc}") from None
        defaults[key] = val
    sp.set_defaults(**defaults)
    return defaults


def parse_args(argv):
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "config", None):
        _apply_config_file(_subparser(ap, args.command), args.config)
        args = ap.parse_args(argv)
    return args


# -- helpers -------------------------------------------------------------

def reservoir_config(args, seed: int | None = None) -> ReservoirConfig:
    base = ReservoirConfig()
    cp = replace(base.curve_params, **dict(args.curve)) if args.curve else base.curve_params
    kw = dict(
        topology=GridTopology(args.grid[0], args.grid[1], args.boundary),
        seed=args.seed if seed is None else seed,
        variation_std=args.variation,
        variation_seed=args.variation_seed,
        curve_params=cp,
        curve_file=args.curve_file,
        single_vco_mode=args.single_vco,
    )
    if args.input_word is not None:
        kw["input_word"] = args.input_word
    if args.sigma_max is not None:
        kw["sigma_max"] = args.sigma_max
    cfg = replace(base, **kw)
    cp.validate()
    return cfg


def _resolved_options(args) -> dict:
    skip = {"config", "out", "verbose", "command", "curve", "grid", "workers", "backend"}
    d = {k: v for k, v in vars(args).items() if k not in skip}
    if hasattr(args, "grid"):
        d["grid"] = f"{args.grid[0]}x{args.grid[1]}"
    if getattr(args, "curve", None):
        d["curve"] = ",".join(f"{k}={v!r}" for k, v in args.curve)
    return d


def _write_provenance(out: Path, args, exp: ExperimentConfig) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_config_file(out / "resolved_config.txt", {k.replace("_", "-"): v for k, v in _resolved_options(args).items()})
    doc = exp.to_dict()
    doc["config_hash"] = exp.config_hash
    doc["version"] = __version__
    _atomic_write(out / "config.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _read_inputs(path, steps: int | None) -> np.ndarray:
    vals = np.array([float(x) for x in Path(path).read_text().split()], dtype=np.float64)
    return vals if steps is None else vals[:steps]


def _binary_input(args) -> np.ndarray:
    from .tasks import gen_binary_sequence

    if args.input:
        return _read_inputs(args.input, args.steps)
    return gen_binary_sequence(args.steps, args.seed).astype(np.float64)


# -- commands ------------------------------------------------------------

def cmd_capacity(args) -> int:
    from .tasks import CapacityProtocol, run_capacity_task, write_reports_csv, write_reports_json

    protocol = CapacityProtocol(total=args.total, washout=args.washout, train=args.train, test=args.test,
                                k_max_stm=args.k_max, k_max_xor=args.k_max, seed=args.input_seed)
    seeds = list(range(args.seed, args.seed + args.seeds))
    if not seeds:
        raise ConfigError("--seeds must be at least 1")
    cfgs = [reservoir_config(args, s) for s in seeds]
    exp = ExperimentConfig(args.command, cfgs[0], tuple(seeds), protocol.to_dict(), args.ridge_lambda,
                           {"variation_seed": args.variation_seed}, {"out": args.out})
    out = Path(args.out)
    _write_provenance(out, args, exp)
    reports = []
    for cfg in cfgs:
        rep = run_capacity_task(args.command, cfg, protocol, args.ridge_lambda, args.backend, args.workers)
        log.info("seed %d: C_%s = %.3f", cfg.seed, args.command.upper(), rep.capacity)
        reports.append(rep)
    caps = np.array([r.capacity for r in reports])
    summary = {"kind": args.command, "n_runs": len(reports), "mean": float(caps.mean()),
               "std": float(caps.std(ddof=1)) if len(caps) > 1 else 0.0,
               "config_hash": exp.config_hash, "version": __version__}
    write_reports_json(out / f"{args.command}_report.json", reports, summary)
    write_reports_csv(out / f"{args.command}_r2.csv", reports)
    print(f"C_{args.command.upper()} mean={summary['mean']:.3f} std={summary['std']:.3f} "
          f"over {len(reports)} seed(s); config_hash={exp.config_hash[:12]}")
    return EXIT_OK


def cmd_digits(args) -> int:
    from . import digits

    if bool(args.data) == bool(args.synthetic):
        raise UsageError("digits needs exactly one of --data DIR or --synthetic")
    if args.synthetic:
        instances = digits.synthetic_digits(args.per_class, args.seed)
    else:
        instances = digits.load_dataset(args.data)
    cfg = replace(reservoir_config(args), n_channels=digits.N_CHANNELS)
    labels = np.array([i.label for i in instances])
    folds = digits.make_folds(labels, args.folds, args.seed)
    exp = ExperimentConfig("digits", cfg, (args.seed,), {"folds": args.folds, "data": args.data or "synthetic",
                                                          "per_class": args.per_class if args.synthetic else None,
                                                          "decision": args.decision,
                                                          "reset_between": args.reset_between},
                           args.ridge_lambda, {}, {"out": args.out})
    out = Path(args.out)
    _write_provenance(out, args, exp)
    rep = digits.classify_run(instances, cfg, folds, args.ridge_lambda, args.backend, args.workers,
                              args.decision, args.reset_between)
    rep.config_hash = exp.config_hash
    rep.write_json(out / "digits_report.json")
    rep.write_confusion_csv(out / "digits_confusion.csv")
    print(f"reservoir accuracy {rep.mean_accuracy:.4f} (folds: "
          + ", ".join(f"{a:.3f}" for a in rep.fold_accuracy) + ")")
    if not args.no_baseline:
        base = digits.baseline_linear(instances, folds, args.ridge_lambda, args.seed, args.decision)
        base.config_hash = exp.config_hash
        base.write_json(out / "baseline_report.json")
        base.write_confusion_csv(out / "baseline_confusion.csv")
        print(f"baseline accuracy  {base.mean_accuracy:.4f}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = reservoir_config(args)
    u = _binary_input(args)
    exp = ExperimentConfig("simulate", cfg, (args.seed,), {"steps": int(u.size)}, None, {}, {"out": args.out})
    out = Path(args.out)
    _write_provenance(out, args, exp)
    res = Reservoir(cfg, backend=args.backend, workers=args.workers)
    c_n, c_p = res.run_sequence_counts(u)
    write_state_dump(out / "states_long.csv", c_n, c_p)
    print(f"wrote {u.size} steps x {res.n_neurons} neurons to {out / 'states_long.csv'}")
    return EXIT_OK


def input_history(u: np.ndarray, depth: int = 4) -> np.ndarray:
    """(T, depth) matrix of u(n), u(n-1), ...; -1 where the history is undefined."""
    u = np.asarray(u)
    H = -np.ones((u.size, depth), dtype=np.int64)
    for j in range(depth):
        if j < u.size:
            H[j:, j] = np.rint(u[:u.size - j]).astype(np.int64)
    return H


def export_states(cfg: ReservoirConfig, u, path, backend=None, workers: int = 1) -> Path:
    """Wide CSV: step, u(n)..u(n-3), then one column per neuron."""
    u = np.asarray(u, dtype=np.float64)
    X = Reservoir(cfg, backend=backend, workers=workers).run_sequence(u)
    H = input_history(u)
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "u_n", "u_n1", "u_n2", "u_n3"] + [f"c{i}" for i in range(X.shape[0])])
        for t in range(u.size):
            w.writerow([t, *H[t].tolist(), *X[:, t].tolist()])
    os.replace(tmp, path)
    return path


def cmd_export_states(args) -> int:
    cfg = reservoir_config(args)
    u = _binary_input(args)
    exp = ExperimentConfig("export-states", cfg, (args.seed,), {"steps": int(u.size)}, None, {}, {"out": args.out})
    out = Path(args.out)
    _write_provenance(out, args, exp)
    path = export_states(cfg, u, out / "states.csv", args.backend, args.workers)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_gen_synthetic(args) -> int:
    from .digits import save_dataset, synthetic_digits

    paths = save_dataset(args.out, synthetic_digits(args.per_class, args.seed))
    print(f"wrote {len(paths)} instances to {args.out}")
    return EXIT_OK


def cmd_curves(args) -> int:
    if args.check:
        load_curves(args.check).validate()
        print(f"{args.check}: ok")
        return EXIT_OK
    params = replace(CurveParams(), **dict(args.curve))
    out = Path(args.out)
    if out.suffix == "":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "curves.txt"
    save_curves(default_curves(params), out)
    print(f"wrote {out}")
    return EXIT_OK


HANDLERS = {
    "stm": cmd_capacity,
    "xor": cmd_capacity,
    "digits": cmd_digits,
    "simulate": cmd_simulate,
    "export-states": cmd_export_states,
    "gen-synthetic-digits": cmd_gen_synthetic,
    "curves": cmd_curves,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:  # argparse: usage errors exit 2, --help/--version exit 0
        return int(exc.code or 0)
    except (ConfigError, InvalidParamsError) as exc:
        print(f"tdreservoir: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return HANDLERS[args.command](args)
    except UsageError as exc:
        print(f"tdreservoir: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, InvalidParamsError) as exc:
        print(f"tdreservoir: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - report and map to the runtime exit code
        log.debug("traceback", exc_info=True)
        print(f"tdreservoir: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
