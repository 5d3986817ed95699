"""``sths`` command line.

Subcommands: synth, run, diagnose, report, validate. Failures print one JSON
object on stderr and exit with a code that identifies the failure class.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from sths import __version__
from sths.config import list_presets, load_config, parse_seeds
from sths.dataset import DatasetError, MissingFileError, load_dataset, validate_dataset
from sths.experiments import (
    ReportError,
    cmd_diagnose,
    cmd_report,
    cmd_run,
    cmd_synth,
    diagnose_from_trace,
)
from sths.models.base import ModelError
from sths.synthetic import ConfigError
from sths.training import TrainingError

ENV_OUT = "STHS_OUT"
ENV_JOBS = "STHS_JOBS"

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_DATASET = 5
EXIT_TRAINING = 6
EXIT_REPORT = 7


class CliError(Exception):
    def __init__(self, code: str, exit_code: int, message: str, **extra):
        super().__init__(message)
        self.code = code
        self.exit_code = exit_code
        self.extra = extra

    def to_dict(self) -> dict:
        return {"error": {"code": self.code, "exit_code": self.exit_code, "message": str(self), **self.extra}}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", EXIT_USAGE, message, usage=self.format_usage().strip())


def _classify(exc: BaseException) -> CliError:
    if isinstance(exc, CliError):
        return exc
    if isinstance(exc, ConfigError):
        return CliError("config", EXIT_CONFIG, str(exc), fields=exc.fields)
    if isinstance(exc, (MissingFileError, FileNotFoundError, IsADirectoryError, PermissionError)):
        return CliError("io", EXIT_IO, str(exc))
    if isinstance(exc, DatasetError):
        return CliError("dataset", EXIT_DATASET, str(exc), violation=exc.code)
    if isinstance(exc, TrainingError):
        return CliError("training", EXIT_TRAINING, str(exc), iteration=exc.iteration)
    if isinstance(exc, ModelError):
        return CliError("training", EXIT_TRAINING, str(exc))
    if isinstance(exc, ReportError):
        return CliError("report", EXIT_REPORT, str(exc))
    if isinstance(exc, (OSError, json.JSONDecodeError)):
        return CliError("io", EXIT_IO, str(exc))
    return CliError("internal", EXIT_INTERNAL, f"{type(exc).__name__}: {exc}")


def _jobs(args, cfg) -> int:
    if args.jobs is not None:
        return args.jobs
    if os.environ.get(ENV_JOBS):
        try:
            return max(1, int(os.environ[ENV_JOBS]))
        except ValueError:
            raise CliError("config", EXIT_CONFIG, f"{ENV_JOBS} must be an integer", fields=[ENV_JOBS]) from None
    return cfg.experiment["jobs"]


def _out(args, cfg) -> Path:
    if args.out:
        return Path(args.out)
    if os.environ.get(ENV_OUT):
        return Path(os.environ[ENV_OUT]) / cfg.name
    if cfg.output.get("dir"):
        return Path(str(cfg.output["dir"]))
    return Path("runs") / cfg.name


def _config(args):
    if not args.config:
        raise CliError("usage", EXIT_USAGE, "--config is required")
    cfg = load_config(args.config)
    if getattr(args, "seeds", None):
        try:
            cfg = cfg.with_seeds(parse_seeds(args.seeds))
        except ValueError:
            raise CliError("config", EXIT_CONFIG, f"cannot parse seeds {args.seeds!r}", fields=["--seeds"]) from None
    return cfg


def do_synth(args) -> int:
    cfg = _config(args)
    if cfg.synthetic is None:
        raise ConfigError("synth needs a [synthetic] section", ["synthetic"])
    out = _out(args, cfg)
    path = cmd_synth(cfg, out, args.format or cfg.output.get("format") or "csv")
    print(json.dumps({"dataset": str(path), "config_hash": cfg.hash()}))
    return EXIT_OK


def do_run(args) -> int:
    cfg = _config(args)
    out = _out(args, cfg)
    manifest = cmd_run(cfg, out, _jobs(args, cfg))
    print(json.dumps({"manifest": str(out / "manifest.json"), "config_hash": manifest["config_hash"]}))
    return EXIT_OK


def do_diagnose(args) -> int:
    if args.from_trace:
        out = Path(args.out) if args.out else None
        report = diagnose_from_trace(Path(args.from_trace), out)
        print(json.dumps({"report": str((out or Path(args.from_trace)) / "diagnostics_report.json"), "seeds": report["seeds"]}))
        return EXIT_OK
    cfg = _config(args)
    out = _out(args, cfg)
    report = cmd_diagnose(cfg, out, _jobs(args, cfg))
    print(json.dumps({"report": str(out / "diagnostics_report.json"), "seeds": report["seeds"]}))
    return EXIT_OK


def do_report(args) -> int:
    target = args.manifest or args.out
    if not target:
        raise CliError("usage", EXIT_USAGE, "report needs a manifest path")
    sys.stdout.write(cmd_report(Path(target), Path(args.csv) if args.csv else None))
    return EXIT_OK


def do_validate(args) -> int:
    ds = load_dataset(args.dataset, validate=False)
    violations = validate_dataset(ds)
    result = {
        "dataset": str(args.dataset),
        "valid": not violations,
        "violations": [
            {"code": v.code, "message": v.message, "pool": v.pool, "index": v.index} for v in violations
        ],
    }
    if violations:
        raise CliError("dataset", EXIT_DATASET, violations[0].message, violation=violations[0].code, violations=result["violations"])
    print(json.dumps(result))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="config file, or the name of a bundled preset")
    common.add_argument("--out", help=f"output directory (env {ENV_OUT} overrides the config's default)")
    common.add_argument("--seeds", "--seed", dest="seeds", help="seed list such as '0-9' or '1,3,5'")
    common.add_argument("--jobs", type=int, help=f"worker processes (env {ENV_JOBS})")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="sths", description="Hardness-sampling self-training for transductive ZSL.")
    parser.add_argument("--version", action="version", version=f"sths {__version__}")
    parser.add_argument("--list-presets", action="store_true", help="print the bundled preset names")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    p.add_argument("--format", choices=("csv", "f32"))
    p.set_defaults(func=do_synth)

    p = sub.add_parser("run", parents=[common], help="run every arm over the seed sweep")
    p.set_defaults(func=do_run)

    p = sub.add_parser("diagnose", parents=[common], help="run the oracle-label diagnostics")
    p.add_argument("--from-trace", help="re-emit the report from an earlier diagnose output directory")
    p.set_defaults(func=do_diagnose)

    p = sub.add_parser("report", parents=[common], help="summarize a run manifest")
    p.add_argument("manifest", nargs="?", help="manifest.json or its run directory")
    p.add_argument("--csv", help="CSV output path (default: report.csv next to the manifest)")
    p.set_defaults(func=do_report)

    p = sub.add_parser("validate", parents=[common], help="check a dataset directory")
    p.add_argument("dataset")
    p.set_defaults(func=do_validate)
    return parser


def main(argv=None) -> int:
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        if args.list_presets:
            print("\n".join(list_presets()))
            return EXIT_OK
        if not getattr(args, "func", None):
            raise CliError("usage", EXIT_USAGE, "a subcommand is required", usage=parser.format_usage().strip())
        logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except KeyboardInterrupt:
        return 130
    except BaseException as exc:  # noqa: BLE001 - every failure becomes an error object
        err = _classify(exc)
        sys.stderr.write(json.dumps(err.to_dict()) + "\n")
        return err.exit_code


if __name__ == "__main__":
    sys.exit(main())
