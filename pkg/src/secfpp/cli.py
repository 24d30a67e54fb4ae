"""Command-line interface.

    secfpp run      --config cfg.json [--seed N] [--out DIR] [--threads N]
    secfpp mi       --config grid.json [--seed N] [--out DIR]
    secfpp bench    --config grid.json [--seed N] [--out DIR]
    secfpp audit    --transcript out/<id>/transcript.jsonl
    secfpp selftest

Configs are single JSON documents with explicit seeds; unknown keys are
rejected.  Each run writes into ``out/<run-id>/`` where the run id is a
hash of the effective config, so identical configs land in identical
places with byte-identical outputs.

Exit codes: 0 success; 1 selftest failure; 2 config error; 3 protocol or
estimator failure; 4 audit failure.
"""

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

from .errors import BadConfig, SecfppError

EXIT_OK = 0
EXIT_SELFTEST = 1
EXIT_CONFIG = 2
EXIT_PROTOCOL = 3
EXIT_AUDIT = 4


def _load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise BadConfig(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise BadConfig(
            f"config {path} is not valid JSON "
            f"(line {exc.lineno}, column {exc.colno}): {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise BadConfig("config root must be a JSON object")
    return raw


def _run_id(raw: dict) -> str:
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]


def _out_dir(args, raw) -> Path:
    out = Path(args.out) / _run_id(raw)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args) -> int:
    from . import protocol
    raw = _load_config(args.config)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.threads is not None:
        raw["threads"] = args.threads
    cfg = protocol.RunConfig.from_dict(raw)
    out = _out_dir(args, cfg.to_dict())
    try:
        result = protocol.run(cfg)
    except SecfppError as exc:
        print(f"protocol failure: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    result.transcript.to_jsonl(out / "transcript.jsonl")
    with open(out / "metrics.jsonl", "w") as fh:
        for m in result.metrics:
            fh.write(json.dumps(m.to_json(), sort_keys=True) + "\n")
    with open(out / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "mean_loss", "n_clusters"])
        for m in result.metrics:
            writer.writerow([m.round, f"{m.mean_loss:.10g}", m.n_clusters])
    report = protocol.audit_transcript(result.transcript)
    (out / "audit.json").write_text(
        json.dumps(report.to_json(), sort_keys=True, indent=2) + "\n")
    print(f"run {_run_id(cfg.to_dict())}: {result.rounds_run} rounds, "
          f"final mean loss {result.final_mean_loss:.6g}, "
          f"{result.assignment.k} clusters, audit "
          f"{'pass' if report.passed else 'FAIL'}")
    print(f"outputs in {out}")
    return EXIT_OK if report.passed else EXIT_AUDIT


_MI_KEYS = {"n_values", "d_values", "sample_count", "k_neighbors", "seed"}


def cmd_mi(args) -> int:
    from . import infotheory
    raw = _load_config(args.config)
    unknown = set(raw) - _MI_KEYS
    if unknown:
        raise BadConfig(f"unknown mi config keys: {sorted(unknown)}")
    if args.seed is not None:
        raw["seed"] = args.seed
    raw.setdefault("seed", 0)
    raw.setdefault("sample_count", 1000)
    raw.setdefault("k_neighbors", 4)
    for key in ("n_values", "d_values"):
        if key not in raw or not raw[key]:
            raise BadConfig(f"mi config needs non-empty {key}")
    if any(not (2 <= n <= 200) for n in raw["n_values"]):
        raise BadConfig("n_values must lie in [2, 200]")
    if any(not (2 <= d <= 512) for d in raw["d_values"]):
        raise BadConfig("d_values must lie in [2, 512]")
    out = _out_dir(args, raw)
    try:
        rows = infotheory.figure3_experiment(
            raw["n_values"], raw["d_values"],
            sample_count=raw["sample_count"],
            k_neighbors=raw["k_neighbors"], seed=raw["seed"])
    except SecfppError as exc:
        print(f"estimator failure: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    infotheory.rows_to_csv(rows, out / "mi.csv")
    print(f"{len(rows)} rows written to {out / 'mi.csv'}")
    return EXIT_OK


_BENCH_KEYS = {"n_values", "d_values", "alpha", "k_clusters", "repeats",
               "seed"}


def cmd_bench(args) -> int:
    from . import bench
    raw = _load_config(args.config)
    unknown = set(raw) - _BENCH_KEYS
    if unknown:
        raise BadConfig(f"unknown bench config keys: {sorted(unknown)}")
    if args.seed is not None:
        raw["seed"] = args.seed
    raw.setdefault("seed", 0)
    raw.setdefault("alpha", 1 / 3)
    raw.setdefault("k_clusters", 2)
    raw.setdefault("repeats", 5)
    for key in ("n_values", "d_values"):
        if key not in raw or not raw[key]:
            raise BadConfig(f"bench config needs non-empty {key}")
    if any(n < 2 for n in raw["n_values"]):
        raise BadConfig("bench needs n >= 2 (no federation with one user)")
    out = _out_dir(args, raw)
    summary = bench.run_grid(raw["n_values"], raw["d_values"],
                             alpha=raw["alpha"],
                             k_clusters=raw["k_clusters"],
                             repeats=raw["repeats"], seed=raw["seed"])
    bench.records_to_csv(summary.records(), out / "bench.csv")
    fits = {
        "user_compute_vs_nd": {
            "coef": summary.user_fit_nd.coef,
            "intercept": summary.user_fit_nd.intercept,
            "r_squared": summary.user_fit_nd.r_squared},
        "server_decode_vs_kn2log2n": {
            "coef": summary.server_fit.coef,
            "intercept": summary.server_fit.intercept,
            "r_squared": summary.server_fit.r_squared},
        "per_user_bytes": {f"n{p.n}_d{p.d}": p.per_user_bytes
                           for p in summary.points},
    }
    (out / "bench_fits.json").write_text(
        json.dumps(fits, sort_keys=True, indent=2) + "\n")
    print(f"bench grid written to {out / 'bench.csv'}; "
          f"user nd-fit R^2 = {summary.user_fit_nd.r_squared:.4f}")
    return EXIT_OK


def cmd_audit(args) -> int:
    from . import protocol, transcript
    try:
        t = transcript.Transcript.from_jsonl(args.transcript)
    except OSError as exc:
        print(f"cannot read transcript: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    report = protocol.audit_transcript(t)
    print(json.dumps(report.to_json(), sort_keys=True, indent=2))
    return EXIT_OK if report.passed else EXIT_AUDIT


def cmd_selftest(args) -> int:
    from .selftest import run_selftest
    return run_selftest()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="secfpp",
        description="secure federated prompt personalization simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a full protocol run")
    run_p.add_argument("--config", required=True)
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--out", default="out")
    run_p.add_argument("--threads", type=int)
    run_p.set_defaults(fn=cmd_run)

    mi_p = sub.add_parser("mi", help="leakage estimation grid")
    mi_p.add_argument("--config", required=True)
    mi_p.add_argument("--seed", type=int)
    mi_p.add_argument("--out", default="out")
    mi_p.set_defaults(fn=cmd_mi)

    bench_p = sub.add_parser("bench", help="phase timings and byte accounting")
    bench_p.add_argument("--config", required=True)
    bench_p.add_argument("--seed", type=int)
    bench_p.add_argument("--out", default="out")
    bench_p.set_defaults(fn=cmd_bench)

    audit_p = sub.add_parser("audit", help="audit a persisted transcript")
    audit_p.add_argument("--transcript", required=True)
    audit_p.set_defaults(fn=cmd_audit)

    st_p = sub.add_parser("selftest", help="reduced oracle/consistency suites")
    st_p.set_defaults(fn=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except BadConfig as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SecfppError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL


if __name__ == "__main__":
    sys.exit(main())
