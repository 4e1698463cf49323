"""Command line entry point: ``eventforest {gen,run,compare,validate}``.

Exit codes: 0 success, 2 bad configuration, 3 unreadable or malformed
stream, 4 validation failure. Errors go to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields

from ..baselines import PolicyKind
from ..errors import (BadMagic, ConfigError, EventMemoryError, InvalidSpec, MismatchedStream,
                      ShapeMismatch, TruncatedFile)
from ..synth import generate
from .config import RunConfig, load_config
from .driver import compare, run
from .streamio import write_stream, write_truth
from .validate import validate

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_INVALID = 0, 2, 3, 4

_SKIP = {"out", "per_step"}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file; flags override it")
    for f in fields(RunConfig):
        if f.name in _SKIP:
            continue
        typ = {"int": int, "float": float}.get(f.type, str)
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, type=typ, default=None,
                       help=f"(default: {f.default!r})")


def _config(args, **extra) -> RunConfig:
    values = {f.name: getattr(args, f.name, None) for f in fields(RunConfig) if f.name not in _SKIP}
    values.update(extra)
    return load_config(args.config, **values)


def _emit(text: str, path) -> None:
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_gen(args) -> int:
    cfg = _config(args)
    if not args.out:
        raise ConfigError("gen needs --out")
    times, frames, truth = generate(cfg.stream_spec())
    write_stream(args.out, times, frames)
    write_truth(args.out, truth)
    print(json.dumps({"path": args.out, "frames": len(times), "tokens_per_frame": frames.shape[1],
                      "dim": frames.shape[2], "events": len(truth.event_spans)}))
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config(args, per_step=args.per_step or "")
    record = run(cfg)
    _emit(record.to_json() + "\n", args.out)
    return EXIT_OK


def cmd_compare(args) -> int:
    base = _config(args)
    configs = [base.replace(policy=p.strip()) for p in args.policies.split(",") if p.strip()]
    table = compare(configs)
    if args.out:
        _emit(table.to_csv(), args.out)
    sys.stdout.write(table.to_text())
    return EXIT_OK


def cmd_validate(args) -> int:
    report = validate(_config(args), max_frames=args.max_frames)
    _emit(json.dumps(report.to_dict(), indent=2) + "\n", args.out)
    sys.stderr.write(report.to_text())
    return EXIT_OK if report.passed else EXIT_INVALID


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eventforest", description="Token-budgeted streaming event memory.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic stream (binary + .truth.json)")
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", help="run one policy and print the metrics JSON")
    _add_config_flags(p)
    p.add_argument("--out", help="metrics JSON path (default: stdout)")
    p.add_argument("--per-step", dest="per_step", help="per-step CSV path")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run several policies on one stream")
    _add_config_flags(p)
    p.add_argument("--policies", default=",".join(k.value for k in PolicyKind))
    p.add_argument("--out", help="comparison CSV path")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("validate", help="audit the forest against the reference oracles")
    _add_config_flags(p)
    p.add_argument("--max-frames", type=int, default=None)
    p.add_argument("--out", help="report JSON path (default: stdout)")
    p.set_defaults(func=cmd_validate)
    return parser


def _fail(code: int, exc: BaseException) -> int:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InvalidSpec, MismatchedStream) as exc:
        return _fail(EXIT_CONFIG, exc)
    except (BadMagic, TruncatedFile, ShapeMismatch, OSError) as exc:
        return _fail(EXIT_IO, exc)
    except EventMemoryError as exc:
        return _fail(EXIT_CONFIG, exc)


if __name__ == "__main__":
    sys.exit(main())
