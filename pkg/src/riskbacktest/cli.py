"""Command-line entry point: ``riskbacktest <command> [options]``."""
from __future__ import annotations

import argparse
import sys
import warnings

from . import pipeline
from .pipeline import RunConfig, parse_mapping


def _common(p: argparse.ArgumentParser, with_methods: bool = True) -> None:
    p.add_argument("--config", help="INI file with run settings; flags override it")
    p.add_argument("--window", type=int)
    if with_methods:
        p.add_argument("--methods", help="comma-separated method ids, e.g. n-FP,st-EVT,opt")
        p.add_argument("--levels", help="e.g. 'var=0.95,0.99;vares=0.975'")
        p.add_argument("--scores", help="e.g. 'var=linear,log;vares=sqrt' (power scores as power@0.5)")
        p.add_argument("--eta", type=float)
        p.add_argument("--hac", help="HAC lag for the DM variance: integer or 'auto'")
        p.add_argument("--n-jobs", type=int, dest="n_jobs")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--format", help="comma-separated subset of csv,svg,term")


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="riskbacktest", description="Backtests for VaR, expectiles and (VaR, ES).")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("backtest", help="rolling-window backtest of a CSV loss or price series")
    p.add_argument("input", help="CSV with a 'price' or 'loss' column")
    p.add_argument("--convention", choices=("auto", "price", "loss"))
    _common(p)

    p = sub.add_parser("simulate", help="simulation study on a seeded AR(1)-GARCH(1,1) path")
    p.add_argument("--out-of-sample", type=int, dest="out_of_sample", help="default 1000; the full study uses 5000")
    p.add_argument("--full", action="store_true", help="out-of-sample length 5000")
    _common(p)

    p = sub.add_parser("magician", help="magician against historians on a long GARCH path")
    p.add_argument("--length", type=int, dest="magician_length", help="default 95000")
    _common(p, with_methods=False)

    p = sub.add_parser("short-study", help="replicated short out-of-sample study")
    p.add_argument("--replicates", type=int, help="default 200")
    p.add_argument("--out-of-sample", type=int, dest="out_of_sample", help="default 250")
    _common(p)

    p = sub.add_parser("validate", help="run the fast numerical self-checks")
    p.add_argument("--seed", type=int, default=0)
    return ap


def _config_from_args(args, **fixed) -> RunConfig:
    kw = dict(fixed)
    for name in ("window", "eta", "seed", "out", "n_jobs", "convention", "out_of_sample", "magician_length", "replicates"):
        v = getattr(args, name, None)
        if v is not None:
            kw[name] = v
    if getattr(args, "hac", None) is not None:
        kw["hac"] = args.hac
    if getattr(args, "methods", None):
        kw["methods"] = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    if getattr(args, "levels", None):
        kw["levels"] = {f: tuple(float(t) for t in toks) for f, toks in parse_mapping(args.levels).items()}
    if getattr(args, "scores", None):
        kw["scores"] = {
            f: tuple(pipeline._parse_score_token(f, t) for t in toks) for f, toks in parse_mapping(args.scores).items()
        }
    if getattr(args, "format", None):
        kw["formats"] = tuple(t.strip() for t in args.format.split(",") if t.strip())
    if args.config:
        with open(args.config) as fh:
            return RunConfig.from_ini(fh.read(), **kw)
    return RunConfig(**kw)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "validate":
        checks = pipeline.run_property_checks(args.seed)
        for name, ok, detail in checks:
            print(f"{'PASS' if ok else 'FAIL'}  {name}  ({detail})")
        return 0 if all(ok for _, ok, _ in checks) else 1
    warnings.simplefilter("ignore", pipeline.FilterFitWarning)
    try:
        if args.command == "backtest":
            cfg = _config_from_args(args, source="csv", input_path=args.input)
            bundle = pipeline.run_backtest(cfg)
        elif args.command == "simulate":
            cfg = _config_from_args(args, source="simulate")
            if args.full:
                cfg = pipeline.config_with(cfg, out_of_sample=5000)
            bundle = pipeline.run_simulation(cfg)
        elif args.command == "short-study":
            defaults = {} if args.config else {"out_of_sample": 250, "levels": pipeline.SHORT_STUDY_LEVELS}
            cfg = _config_from_args(args, source="simulate", **defaults)
            bundle = pipeline.run_short_study(cfg)
        else:
            cfg = _config_from_args(args, source="simulate")
            bundle = pipeline.run_magician_study(cfg.magician_length, cfg.seed)
            bundle.manifest["config"] = cfg.echo()
    except (ValueError, OSError, pipeline.BacktestError) as exc:
        print(f"riskbacktest: error: {exc}", file=sys.stderr)
        return 2
    paths = pipeline.emit(bundle, cfg.out, cfg.formats, config=cfg)
    for p in paths:
        print(p, file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
