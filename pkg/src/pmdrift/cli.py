"""Command line: ``pmdrift {run,experiment,list,replay}``.

Exit status is 0 iff every check of the report passed, 1 if a check failed
or a stage raised, 2 for bad configuration input.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig
from .experiments import ExperimentError, config_for, list_experiments, replay, run_experiment, run_plain


def _common(p: argparse.ArgumentParser, config: bool = True) -> None:
    if config:
        p.add_argument("--config", type=Path, help="key=value config file")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE", help="repeatable")
    p.add_argument("--out", type=Path, help="artifact directory (default: the config's out_dir)")
    p.add_argument("--jobs", type=int, default=1, metavar="N", help="worker processes for parallel stages")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pmdrift", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"pmdrift {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("run", help="single solve from a config (or the experiment it names)"))
    ex = sub.add_parser("experiment", help="run a registered experiment")
    ex.add_argument("id")
    _common(ex)
    sub.add_parser("list", help="list experiment ids")
    rp = sub.add_parser("replay", help="rerun from a written config.cfg")
    rp.add_argument("path", type=Path)
    _common(rp, config=False)
    return ap


def _dispatch(args) -> int:
    if args.command == "list":
        for eid, title in list_experiments():
            print(f"{eid}\t{title}")
        return 0
    if args.command == "replay":
        rep = replay(args.path, args.out, args.jobs)
    elif args.command == "experiment":
        cfg = config_for(args.id, args.config, args.override)
        rep = run_experiment(args.id, cfg, args.out, args.jobs)
    else:
        exp_id = ""
        if args.config is not None:
            exp_id = RunConfig.parse_lines(args.config.read_text(encoding="utf-8")).get("experiment", "")
        if exp_id:
            rep = run_experiment(exp_id, config_for(exp_id, args.config, args.override), args.out, args.jobs)
        else:
            cfg = RunConfig()
            if args.config is not None:
                cfg.update_file(args.config)
            rep = run_plain(cfg.apply_overrides(args.override), args.out)
    sys.stdout.write(rep.summary())
    return 0 if rep.passed else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"pmdrift: config error: {exc}", file=sys.stderr)
        return 2
    except ExperimentError as exc:
        print(f"pmdrift: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
