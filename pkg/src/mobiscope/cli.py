"""Command-line front end: one subcommand per stage plus synth and run-all."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import pipeline
from .config import PipelineConfig, load_config
from .errors import ConfigError, MobiscopeError, StageError
from .poi import DayType
from .synth import generate, write_synth

EXIT_OK, EXIT_STAGE, EXIT_CONFIG = 0, 1, 2


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _k_scan(text: str) -> tuple[int, int]:
    try:
        lo, hi = text.split(":")
        return int(lo), int(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected K_MIN:K_MAX, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    # global flags are accepted before or after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="TOML config file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="max worker threads")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    ap = argparse.ArgumentParser(prog="mobiscope", parents=[common], description=__doc__)
    ap.add_argument("--dump-default-config", action="store_true", help="print the default config as TOML and exit")
    sub = ap.add_subparsers(dest="command")

    p = sub.add_parser("ingest", parents=[common], help="parse fixes and apply the user validity filter")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--format", choices=["csv", "jsonl"])
    p.add_argument("--tz-offset", type=int, help="local time offset in minutes")
    p.add_argument("--min-valid-days", type=int)
    p.add_argument("--min-coverage", type=float)

    p = sub.add_parser("pois", parents=[common], help="stay points, POIs and Home/Work")
    p.add_argument("users_dir")
    p.add_argument("--dist-m", type=float)
    p.add_argument("--time-min", type=float)

    p = sub.add_parser("label", parents=[common], help="attach categories and subzones to POIs")
    p.add_argument("pois_dir")
    p.add_argument("--catalog")
    p.add_argument("--subzones")

    p = sub.add_parser("features", parents=[common], help="build 20-value feature vectors")
    p.add_argument("labeled_dir")
    p.add_argument("--dcd-edges", type=_floats)
    p.add_argument("--od-workday-edges", type=_floats)
    p.add_argument("--od-offday-edges", type=_floats)

    p = sub.add_parser("cluster", parents=[common], help="k-means with SSE scan")
    p.add_argument("features_csv")
    p.add_argument("--k", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--k-scan", type=_k_scan)
    p.add_argument("--day-type", choices=[d.value for d in DayType])

    p = sub.add_parser("analyze", parents=[common], help="heatmaps, violin data and correlation")
    p.add_argument("labeled_dir")
    p.add_argument("--model-workday")
    p.add_argument("--model-offday")
    p.add_argument("--frequency-unit", choices=["visits", "pois"])
    p.add_argument("--plot-spec", action="store_true", default=None)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic population")
    p.add_argument("--homebody", type=int)
    p.add_argument("--short", type=int)
    p.add_argument("--long", type=int)
    p.add_argument("--days", type=int)
    p.add_argument("--target-r", type=float)
    p.add_argument("--working-fraction", type=float)

    p = sub.add_parser("run-all", parents=[common], help="run every stage and write a manifest")
    p.add_argument("--fixes", nargs="+")
    p.add_argument("--catalog")
    p.add_argument("--subzones")
    return ap


def _set(obj, **kw):
    kw = {k: v for k, v in kw.items() if v is not None}
    return replace(obj, **kw) if kw else obj


def resolve_config(args) -> PipelineConfig:
    """Config file, then global flags, then subcommand flags."""
    cfg = load_config(getattr(args, "config", None))
    try:
        cfg = cfg.with_overrides(seed=getattr(args, "seed", None), threads=getattr(args, "threads", None))
        cmd = args.command
        if cmd == "ingest":
            cfg = replace(
                cfg,
                ingest=_set(
                    cfg.ingest,
                    format=args.format,
                    tz_offset_minutes=args.tz_offset,
                    min_valid_days=args.min_valid_days,
                    min_coverage=args.min_coverage,
                ),
            )
        elif cmd == "pois":
            cfg = replace(cfg, poi=_set(cfg.poi, dist_m=args.dist_m, time_min=args.time_min))
        elif cmd == "features":
            cfg = replace(
                cfg,
                features=_set(
                    cfg.features,
                    dcd_edges=args.dcd_edges,
                    od_workday_edges=args.od_workday_edges,
                    od_offday_edges=args.od_offday_edges,
                ),
            )
        elif cmd == "cluster":
            lo, hi = args.k_scan if args.k_scan else (None, None)
            cfg = replace(cfg, cluster=_set(cfg.cluster, k=args.k, restarts=args.restarts, k_min=lo, k_max=hi))
        elif cmd == "analyze":
            cfg = replace(
                cfg, analysis=_set(cfg.analysis, frequency_unit=args.frequency_unit, plot_spec=args.plot_spec)
            )
        elif cmd == "synth":
            cfg = replace(
                cfg,
                synth=_set(
                    cfg.synth,
                    seed=getattr(args, "seed", None),
                    n_homebody=args.homebody,
                    n_short=args.short,
                    n_long=args.long,
                    days=args.days,
                    target_r=args.target_r,
                    working_fraction=args.working_fraction,
                ),
            )
        elif cmd == "run-all":
            cfg = replace(
                cfg,
                paths=_set(
                    cfg.paths,
                    fixes=tuple(args.fixes) if args.fixes else None,
                    catalog=args.catalog,
                    subzones=args.subzones,
                ),
            )
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def _out(args, default: str) -> Path:
    return Path(getattr(args, "out", None) or default)


def _run_stage(name: str, fn):
    try:
        return fn()
    except StageError:
        raise
    except (MobiscopeError, OSError, KeyError, ValueError) as exc:
        raise StageError(name, exc) from exc


def dispatch(args, cfg: PipelineConfig) -> None:
    cmd = args.command
    if cmd == "ingest":
        idx = _run_stage("ingest", lambda: pipeline.stage_ingest(args.inputs, _out(args, "users"), cfg))
        n_ok = sum(1 for r in idx["users"].values() if r["accepted"])
        print(f"accepted {n_ok} of {len(idx['users'])} users; {idx['record_errors']} malformed rows")
    elif cmd == "pois":
        n = _run_stage("pois", lambda: pipeline.stage_pois(Path(args.users_dir), _out(args, "pois"), cfg))
        print(f"wrote POIs for {n} users")
    elif cmd == "label":
        catalog = args.catalog or cfg.paths.catalog
        subzones = args.subzones or cfg.paths.subzones
        n = _run_stage(
            "label", lambda: pipeline.stage_label(Path(args.pois_dir), _out(args, "labeled"), cfg, catalog, subzones)
        )
        print(f"labeled POIs for {n} users")
    elif cmd == "features":
        rows = _run_stage(
            "features", lambda: pipeline.stage_features(Path(args.labeled_dir), _out(args, "features.csv"), cfg)
        )
        print(f"wrote {len(rows)} feature rows")
    elif cmd == "cluster":
        written = _run_stage(
            "cluster",
            lambda: pipeline.stage_cluster(Path(args.features_csv), _out(args, "model.json"), cfg, args.day_type),
        )
        for dt, path in written.items():
            print(f"{dt.value}: {path}")
    elif cmd == "analyze":
        models = {}
        if args.model_workday:
            models[DayType.WORKDAY] = Path(args.model_workday)
        if args.model_offday:
            models[DayType.OFFDAY] = Path(args.model_offday)
        if not models:
            raise ConfigError("analyze needs --model-workday and/or --model-offday")
        res = _run_stage(
            "analyze", lambda: pipeline.stage_analyze(Path(args.labeled_dir), models, _out(args, "analysis"), cfg)
        )
        c = res.correlation
        if c.get("r") is not None:
            print(f"pearson r = {c['r']:.3f} (p = {c['p']:.2g}, n = {c['n']})")
    elif cmd == "synth":
        out = _out(args, "synth")
        result = _run_stage("synth", lambda: generate(cfg.synth))
        _run_stage("synth", lambda: write_synth(result, out))
        print(f"wrote {len(result.datasets)} users to {out}")
    elif cmd == "run-all":
        if not cfg.paths.fixes:
            raise ConfigError("run-all needs input fixes (--fixes or [paths] fixes)")
        manifest = pipeline.run_all(cfg, _out(args, "out"))
        print(f"manifest: {manifest}")


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.dump_default_config:
        sys.stdout.write(PipelineConfig().to_toml())
        return EXIT_OK
    if not args.command:
        ap.print_help()
        return EXIT_CONFIG
    try:
        cfg = resolve_config(args)
        dispatch(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
