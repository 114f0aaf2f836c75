"""Command-line entry point: ``forced-rom <verb> [options]``.

Verbs: generate, train, rollout, evaluate, compare, grid. Exit codes: 0 success,
2 configuration error, 3 training divergence, 4 evaluation mismatch. The log level
comes from the ``FORCED_ROM_LOG`` environment variable (default WARNING).
"""
import argparse
import logging
import os
import sys

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_MISMATCH = 0, 2, 3, 4
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "BLIS_NUM_THREADS")

log = logging.getLogger("forced_rom.cli")


def _common(p):
    p.add_argument("--config", help="JSON config document")
    p.add_argument("--seed", type=int, help="override the run or generator seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--force", action="store_true", help="overwrite an existing output directory")
    p.add_argument("--threads", type=int, help="BLAS thread count (set before numpy loads)")


def build_parser():
    parser = argparse.ArgumentParser(prog="forced-rom", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset bundle")
    _common(p)

    p = sub.add_parser("train", help="train one surrogate and score it on the test period")
    _common(p)
    p.add_argument("--data", help="dataset bundle (overrides the config's dataset section)")

    p = sub.add_parser("rollout", help="roll a surrogate bundle out over a dataset")
    _common(p)
    p.add_argument("--bundle", required=True, help="surrogate bundle directory")
    p.add_argument("--data", required=True, help="dataset bundle directory")
    p.add_argument("--start", default="test", help="start column, or 'test' / 'val' for the split starts")
    p.add_argument("--horizon", type=int, help="number of steps (default: to the end of the series)")
    p.add_argument("--decode", choices=("end", "step"), default="end")

    p = sub.add_parser("evaluate", help="score a prediction bundle against a truth bundle")
    _common(p)
    p.add_argument("--pred", required=True, help="prediction bundle")
    p.add_argument("--truth", required=True, help="truth dataset bundle")
    p.add_argument("--reference", help="reference-model prediction bundle for skill retention")
    p.add_argument("--percentiles", type=float, nargs=2, default=(2.0, 98.0))
    p.add_argument("--csv", action="store_true", help="also write per-element errors as CSV")

    p = sub.add_parser("compare", help="run several configs and tabulate them")
    _common(p)

    p = sub.add_parser("grid", help="deterministic sweep over config values, scored on validation")
    _common(p)
    return parser


def _configure(args):
    if args.threads is not None:
        if args.threads < 1:
            raise SystemExit("--threads must be >= 1")
        for var in _THREAD_VARS:
            os.environ[var] = str(args.threads)
    level = os.environ.get("FORCED_ROM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _require(args, *names):
    for name in names:
        if getattr(args, name) is None:
            from .errors import ConfigError

            raise ConfigError(f"--{name} is required for '{args.verb}'")


def cmd_generate(args):
    from .config import generate, read_json
    from .data import save_dataset
    from .errors import ConfigError

    _require(args, "config", "out")
    doc = read_json(args.config)
    if not isinstance(doc, dict) or set(doc) - {"generator", "params"} or "generator" not in doc:
        raise ConfigError("generator config needs 'generator' and optional 'params' only")
    d = generate(doc["generator"], doc.get("params", {}), args.seed, path="")
    save_dataset(d, args.out, force=args.force)
    print(f"wrote {args.out}: {', '.join(f'{b.name}{list(b.values.shape)}' for b in d.blocks)}")
    return EXIT_OK


def _load_run(args):
    from dataclasses import replace

    from .config import DatasetSource, parse_run, read_json
    from .pipeline import seeded

    cfg = seeded(parse_run(read_json(args.config)), args.seed)
    if getattr(args, "data", None):
        cfg = replace(cfg, dataset=DatasetSource(path=args.data))
    return cfg


def cmd_train(args):
    from pathlib import Path

    from .bundle import save_surrogate
    from .data import dump_json
    from .errors import ConfigError
    from .pipeline import run_experiment

    _require(args, "config")
    cfg = _load_run(args)
    out = Path(args.out or cfg.output or cfg.name)
    if out.exists() and not args.force:
        raise ConfigError(f"{out} exists; pass --force to overwrite")
    s, row = run_experiment(cfg)
    save_surrogate(s, out / "surrogate", force=True)
    dump_json(out / "run_config.json", cfg.to_json())
    dump_json(out / "scores.json", {k: v for k, v in row.items() if not k.endswith("seconds")
                                    and k != "steps_per_second"})
    dump_json(out / "timing.json", {k: row[k] for k in ("train_seconds", "inference_seconds", "steps_per_second")})
    print(f"{cfg.name}: {s.family} trained for {row['epochs']} epochs; "
          f"test rel_rmse {row['rel_rmse']:.4g} ({row['status']}); bundle at {out / 'surrogate'}")
    return EXIT_OK


def cmd_rollout(args):
    from pathlib import Path

    from .bundle import load_surrogate
    from .data import dump_json, load_dataset, save_dataset
    from .errors import ConfigError
    from .pipeline import forecast, prediction_dataset
    from .rollout import bench_inference

    _require(args, "out")
    s = load_surrogate(args.bundle)
    d, _ = load_dataset(args.data)
    missing = [v for v in s.state_variables + s.forcing_variables if v not in d.names]
    if missing:
        raise ConfigError(f"dataset lacks variables {missing}", "--data")
    for v in s.state_variables + s.forcing_variables:
        expected = (s.state_stack.sizes.get(v) or s.forcing_stack.sizes.get(v))
        if d.block(v).n_space != expected:
            raise ConfigError(f"{v} has {d.block(v).n_space} rows, surrogate expects {expected}", "--data")
    start = {"test": d.val_end, "val": d.train_end}.get(args.start)
    if start is None:
        try:
            start = int(args.start)
        except ValueError as exc:
            raise ConfigError(f"bad --start {args.start!r}") from exc
    res, _ = forecast(s, d, start, args.horizon, decode=args.decode)
    out = Path(args.out)
    save_dataset(prediction_dataset(s, d, start, res), out, force=args.force)
    bench = bench_inference(s, max(res.steps, 1))
    bench["rollout_seconds"] = res.duration
    dump_json(out.parent / f"{out.name}.timing.json", bench)
    status = "ok" if res.diverged_at is None else f"diverged at step {res.diverged_at}"
    print(f"rolled out {res.steps} steps from column {start} ({status}); "
          f"{bench['steps_per_second']:.0f} steps/s; wrote {out}")
    return EXIT_OK if res.diverged_at is None else EXIT_DIVERGED


def cmd_evaluate(args):
    from pathlib import Path

    from .data import load_dataset
    from .metrics import evaluate
    from .pipeline import align

    _require(args, "out")
    pred, _ = load_dataset(args.pred)
    truth, _ = load_dataset(args.truth)
    t, p = align(pred, truth)
    reference = None
    if args.reference:
        from .pipeline import EvalMismatch

        ref, _ = load_dataset(args.reference)
        if (ref.t0_index, ref.n_time) != (pred.t0_index, pred.n_time):
            raise EvalMismatch("reference bundle covers a different time window than the prediction")
        _, reference = align(ref, truth)
    report = evaluate(t, p, truth.element_weights, tuple(args.percentiles), reference)
    out = Path(args.out)
    if out.exists() and not args.force:
        from .errors import ConfigError

        raise ConfigError(f"{out} exists; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.dumps() + "\n")
    if args.csv:
        (out / "elements.csv").write_text(report.element_csv())
    for name, v in report.variables.items():
        print(f"{name}: r2 {v.r2:.4f}  rmse {v.rmse:.4g}  rel_rmse {v.rel_rmse:.4g}  "
              f"spread [{v.spread[0]:.4g}, {v.spread[1]:.4g}]")
    return EXIT_OK


def _write_table(out, rows, force, extra=None):
    from pathlib import Path

    from .data import dump_json
    from .errors import ConfigError
    from .pipeline import format_table

    out = Path(out)
    if out.exists() and not force:
        raise ConfigError(f"{out} exists; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    doc = {"rows": rows}
    doc.update(extra or {})
    dump_json(out / "comparison.json", doc)
    text = format_table(rows)
    (out / "comparison.txt").write_text(text)
    print(text, end="")


def cmd_compare(args):
    from .config import parse_run, read_json
    from .errors import ConfigError, DuplicateName
    from .pipeline import run_many, seeded

    _require(args, "config", "out")
    doc = read_json(args.config)
    runs = doc.get("runs") if isinstance(doc, dict) else doc
    if isinstance(doc, dict) and set(doc) - {"runs"}:
        raise ConfigError(f"unknown key(s) {sorted(set(doc) - {'runs'})}")
    if not isinstance(runs, list) or len(runs) < 2:
        raise ConfigError("compare needs a list of at least two run configs", "runs")
    cfgs = [seeded(parse_run(r, f"runs[{i}]"), args.seed) for i, r in enumerate(runs)]
    names = [c.name for c in cfgs]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise DuplicateName(f"duplicate run names {dupes}", "runs")
    rows = run_many(cfgs)
    _write_table(args.out, rows, args.force)
    return EXIT_OK


def cmd_grid(args):
    from .config import parse_run, read_json
    from .errors import ConfigError
    from .pipeline import expand_grid, run_many, seeded

    _require(args, "config", "out")
    doc = read_json(args.config)
    if not isinstance(doc, dict) or set(doc) != {"base", "axes"}:
        raise ConfigError("grid config needs exactly 'base' and 'axes'")
    expanded = expand_grid(doc["base"], doc["axes"])
    cfgs = [seeded(parse_run(d, f"grid[{i}]"), args.seed) for i, (d, _) in enumerate(expanded)]
    rows = run_many(cfgs, split="val")
    for row, (_, values) in zip(rows, expanded):
        row["values"] = values
    ok = [r for r in rows if r.get("status") == "ok"]
    best = min(ok, key=lambda r: r["rel_rmse"]) if ok else None
    _write_table(args.out, rows, args.force,
                 {"scored_on": "validation", "best": None if best is None else best["label"]})
    if best is not None:
        print(f"best on validation: {best['label']} {best['values']}")
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "rollout": cmd_rollout,
            "evaluate": cmd_evaluate, "compare": cmd_compare, "grid": cmd_grid}


def main(argv=None):
    args = build_parser().parse_args(argv)
    _configure(args)
    from .errors import ConfigError, ForcedRomError, TrainingDiverged
    from .pipeline import EvalMismatch

    try:
        return COMMANDS[args.verb](args)
    except EvalMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, ForcedRomError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
