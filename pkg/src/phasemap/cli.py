"""Command line: ``phasemap run | verify | enumerate-recipes``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, list_recipes, parse_config, resolve_config_path
from .models import ModelError


def _load(path: str, overrides: dict):
    p = resolve_config_path(path)
    text = p.read_text()
    return parse_config(text, overrides), text


def cmd_run(args) -> int:
    from .pipeline import run

    overrides = {"seed": args.seed, "threads": args.threads, "out": args.out}
    try:
        cfg, text = _load(args.config, overrides)
    except ConfigError as e:
        print(json.dumps(e.as_dict(), indent=2), file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(str(e), file=sys.stderr)
        return 2
    try:
        meta = run(cfg, text)
    except ModelError as e:
        # nothing is flushed to the output directory before a run completes
        print(f"run failed: {e}", file=sys.stderr)
        return 1
    print(json.dumps({"out": cfg.out, "files": meta["files"], "seconds": round(meta["timings"]["total"], 3)},
                     indent=2))
    return 0


def cmd_verify(args) -> int:
    from .pipeline import check_model_files
    from .verify import run_checks

    report: dict = {"checks": []}
    if args.config:
        try:
            cfg, _ = _load(args.config, {})
        except ConfigError as e:
            report["config"] = e.as_dict()
            cfg = None
        except FileNotFoundError as e:
            report["config"] = {"valid": False, "errors": [{"loc": "<path>", "msg": str(e)}]}
            cfg = None
        if cfg is not None and cfg.data.load:
            for res in check_model_files(cfg.data.load):
                report["checks"].append({"name": f"model_file:{Path(res['file']).name}", **res})
    if not args.skip_oracles:
        report["checks"].extend(run_checks())
    ok = all(c["passed"] for c in report["checks"]) and report.get("config", {}).get("valid", True)
    report["passed"] = ok
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0 if ok else 1


def cmd_recipes(args) -> int:
    for name, desc, path in list_recipes():
        print(f"{name}\t{desc}\t{path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="phasemap", description=__doc__)
    sub = ap.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="execute a configured pipeline")
    r.add_argument("--config", required=True, help="TOML file or shipped recipe name")
    r.add_argument("--seed", type=int, default=None, help="override the config seed")
    r.add_argument("--out", default=None, help="output directory (overrides config)")
    r.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
    r.set_defaults(fn=cmd_run)

    v = sub.add_parser("verify", help="run the oracle suite and report pass/fail JSON")
    v.add_argument("--config", default=None, help="also validate this config and any model files it loads")
    v.add_argument("--out", default=None, help="write the JSON report here")
    v.add_argument("--skip-oracles", action="store_true", help="only check the config and its model files")
    v.set_defaults(fn=cmd_verify)

    e = sub.add_parser("enumerate-recipes", help="list shipped recipe configs")
    e.set_defaults(fn=cmd_recipes)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
