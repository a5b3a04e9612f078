"""Command-line driver.

Exit codes: 0 success, 1 usage or invalid input, 2 expectation failure in check
mode, 3 I/O or malformed file.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import yaml

from . import __version__
from .codec import calibrate_margin, decode_message, encode_message
from .cognitive import AgentState
from .config import SecretKey, SecurityParams, StegoConfig, derive_partition, t_min
from .exceptions import AcfError, CalibrationError, ConfigError, FramingError, IngestionError
from .harness import REPORT_COLUMNS, ModelSpec, _fmt, emit_report, run_documents
from .io import (
    dump_config,
    dump_record,
    load_config,
    load_record,
    load_scenario_documents,
    load_state,
    make_record,
    save_config,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CHECK_FAILED = 2
EXIT_IO = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write(text: str, out: str | None) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _load_model(path: str | None):
    if path is None:
        return ModelSpec().build()
    data = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: model spec must be a mapping")
    try:
        return ModelSpec(**data).build()
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _parse_bits(text: str) -> list[int]:
    text = text.replace(",", "").replace(" ", "")
    if any(c not in "01" for c in text):
        raise ConfigError(f"bits must be a string of 0s and 1s, got {text!r}")
    return [int(c) for c in text]


# --------------------------------------------------------------------------
# subcommands


def cmd_keygen(args) -> int:
    sk = SecretKey.from_hex(args.key_hex) if args.key_hex else SecretKey.generate()
    cfg = StegoConfig(sk, SecurityParams(k=args.k), session_id=args.session_id.encode())
    _write(dump_config(cfg), args.out)
    if args.out not in (None, "-"):
        print(sk.hex())
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = load_config(args.config)
    model = _load_model(args.model)
    states = [load_state(p) for p in args.state] or [AgentState()]
    pmap = derive_partition(model.vocab_size_, cfg)
    margin = calibrate_margin(model, states, cfg, pmap, args.steps, args.n_std)
    cfg = cfg.with_margin(margin, t_min(cfg.sec.k, margin))
    save_config(cfg, args.out or args.config)
    print(f"margin_floor={margin!r} block_len={cfg.sec.block_len}")
    return EXIT_OK


def cmd_encode(args) -> int:
    cfg = load_config(args.config)
    if not cfg.sec.calibrated:
        raise CalibrationError(
            "configuration has no margin_floor; run `acfstego calibrate` first"
        )
    model = _load_model(args.model)
    state = load_state(args.state) if args.state else AgentState()
    pmap = derive_partition(model.vocab_size_, cfg)
    trace, _ = encode_message(model, state, _parse_bits(args.bits), cfg, pmap)
    _write(dump_record(make_record(cfg.session_id, trace.tokens, trace.block_boundaries)), args.out)
    return EXIT_OK


def cmd_decode(args) -> int:
    cfg = load_config(args.config)
    rec = load_record(args.input)
    notes = []
    session = str(rec["session_id"]).encode("utf-8", errors="surrogateescape")
    if cfg.session_id and cfg.session_id != session:
        notes.append("record session_id differs from the configured one; decoding with the record's")
    cfg = cfg.with_session(session)
    vocab_size = args.vocab_size
    if rec["tokens"] and max(rec["tokens"]) >= vocab_size:
        raise FramingError(f"record holds token ids beyond --vocab-size {vocab_size}")
    pmap = derive_partition(vocab_size, cfg)
    result = decode_message(rec["tokens"], rec["block_boundaries"], cfg, pmap)
    if result.bits and cfg.sec.margin is not None:
        starts = [0] + list(rec["block_boundaries"][:-1])
        weak = sum(
            abs(lam - tau) < 0.5 * (end - start) * cfg.sec.margin
            for lam, tau, start, end in zip(result.statistics, result.thresholds, starts, rec["block_boundaries"])
        )
        if weak * 2 > len(result.bits):
            notes.append(
                "most statistics sit near the threshold: stream likely misaligned (expect about 50% BER)"
            )
    payload = {
        "bits": result.bits,
        "statistics": result.statistics,
        "thresholds": result.thresholds,
        "error_bound": result.error_bound,
        "warnings": notes,
    }
    for note in notes:
        print(f"warning: {note}", file=sys.stderr)
    _write(json.dumps(payload, indent=2) + "\n", args.out)
    return EXIT_OK


def _run_scenarios(args, sweep: bool) -> int:
    docs = load_scenario_documents(args.scenario)
    if sweep:
        docs = [d if "sweep" in d else {**d, "sweep": {"methods": [d.get("method", "acf")]}} for d in docs]
    report, failures = run_documents(docs, jobs=args.jobs, seed=args.seed)
    formats = ["csv", "json"] if args.format == "both" else [args.format]
    if args.out:
        for path in emit_report(report, args.out, formats, stem=Path(str(args.scenario)).stem):
            print(path)
    else:
        from .harness import report_csv, report_json

        sys.stdout.write(report_csv(report) if formats == ["csv"] else report_json(report))
    if args.check:
        for msg in failures:
            print(f"FAIL {msg}", file=sys.stderr)
        if failures:
            return EXIT_CHECK_FAILED
        print("all expectations hold", file=sys.stderr)
    return EXIT_OK


def cmd_simulate(args) -> int:
    return _run_scenarios(args, sweep=False)


def cmd_sweep(args) -> int:
    return _run_scenarios(args, sweep=True)


def cmd_check(args) -> int:
    args.check = True
    return _run_scenarios(args, sweep=False)


def cmd_report(args) -> int:
    """Render a JSON report as an aligned text table, or re-emit it as CSV."""
    payload = json.loads(Path(args.input).read_text())
    rows = payload.get("rows")
    if not isinstance(rows, list):
        raise IngestionError(f"{args.input}: not a report (no rows)")
    columns = [c for c in args.columns.split(",")] if args.columns else REPORT_COLUMNS
    table = [columns] + [[_fmt(r.get(c)) for c in columns] for r in rows]
    if args.format == "csv":
        text = "".join(",".join(line) + "\n" for line in table)
    else:
        widths = [max(len(line[i]) for line in table) for i in range(len(columns))]
        text = "".join("  ".join(v.ljust(w) for v, w in zip(line, widths)).rstrip() + "\n" for line in table)
    _write(text, args.out)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="acfstego", description="Prefix-independent covert channel simulator.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("keygen", help="write a configuration with a fresh random key")
    s.add_argument("--out", help="configuration file to write (stdout when omitted)")
    s.add_argument("--key-hex", help="use this key instead of drawing one")
    s.add_argument("--k", type=int, default=12, help="security parameter (default 12)")
    s.add_argument("--session-id", default="", help="session identifier")
    s.set_defaults(func=cmd_keygen)

    s = sub.add_parser("calibrate", help="estimate the margin and block length for a model")
    s.add_argument("--config", required=True)
    s.add_argument("--model", help="YAML model spec (default: built-in hash model)")
    s.add_argument("--state", action="append", default=[], help="sample agent state JSON (repeatable)")
    s.add_argument("--steps", type=int, default=2000)
    s.add_argument("--n-std", type=float, default=1.0)
    s.add_argument("--out", help="where to write the calibrated configuration (default: in place)")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("encode", help="embed bits and write a stego-text record")
    s.add_argument("--config", required=True)
    s.add_argument("--model", help="YAML model spec (default: built-in hash model)")
    s.add_argument("--state", help="encoder agent state JSON (default: empty)")
    s.add_argument("--bits", required=True, help="secret bits, e.g. 0110")
    s.add_argument("--out")
    s.set_defaults(func=cmd_encode)

    # deliberately no --model or --state: decoding needs only the configuration
    s = sub.add_parser("decode", help="recover bits from a stego-text record")
    s.add_argument("--config", required=True)
    s.add_argument("--input", required=True, help="stego-text record")
    s.add_argument("--vocab-size", type=int, default=ModelSpec.vocab_size)
    s.add_argument("--out")
    s.set_defaults(func=cmd_decode)

    for name, func, text in (
        ("simulate", cmd_simulate, "run scenario documents and write a report"),
        ("sweep", cmd_sweep, "run scenario documents across decoder truncation depths"),
        ("check", cmd_check, "run scenario documents and fail on violated expectations"),
    ):
        s = sub.add_parser(name, help=text)
        s.add_argument("--scenario", required=True, help="YAML file or bundled name (table2, fig2, ...)")
        s.add_argument("--seed", type=int, help="override every document's seed")
        s.add_argument("--out", help="report directory (stdout when omitted)")
        s.add_argument("--format", choices=("csv", "json", "both"), default="both" if name != "check" else "csv")
        s.add_argument("--jobs", type=int, default=1)
        s.add_argument("--check", action="store_true", help="exit 2 when an expectation fails")
        s.set_defaults(func=func)

    s = sub.add_parser("report", help="render a JSON report as a table")
    s.add_argument("--input", required=True)
    s.add_argument("--format", choices=("table", "csv"), default="table")
    s.add_argument("--columns", help="comma-separated subset of columns")
    s.add_argument("--out")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "format", None) == "both" and not getattr(args, "out", None):
        args.format = "json"
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except (OSError, FramingError, IngestionError, json.JSONDecodeError, yaml.YAMLError) as exc:
        print(f"acfstego: {exc}", file=sys.stderr)
        return EXIT_IO
    except AcfError as exc:
        print(f"acfstego: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
