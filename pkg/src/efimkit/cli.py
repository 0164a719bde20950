"""Command-line entry point: tokenizer, workload, simulate, sweep,
prepare-data, report, and serve subcommands.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from . import engine_sim, fragment_data, workload
from .config import ENV_CONFIG_PATH, Config
from .defaults import default_vocabulary
from .engine_sim import MetricsReport, Scheme, cost_reduction
from .errors import EfimKitError, ReportComparisonError
from .tokenizer import Vocabulary, train

COMPARE_CSV_HEADER = (
    "scheme,avg_latency,request_throughput,input_token_throughput,reuse_rate,"
    "latency_reduction_pct,request_throughput_gain_pct,"
    "input_token_throughput_gain_pct,reuse_rate_delta_pp,cost_reduction_pct"
)


@dataclass(frozen=True)
class CompareRow:
    scheme: str
    avg_latency: float
    request_throughput: float
    input_token_throughput: float
    reuse_rate: float
    latency_reduction_pct: float
    request_throughput_gain_pct: float
    input_token_throughput_gain_pct: float
    reuse_rate_delta_pp: float
    cost_reduction_pct: float


@dataclass(frozen=True)
class ComparisonTable:
    rows: tuple[CompareRow, ...]

    def to_csv(self) -> str:
        lines = [COMPARE_CSV_HEADER]
        for r in self.rows:
            lines.append(
                f"{r.scheme},{r.avg_latency:.6f},{r.request_throughput:.6f},"
                f"{r.input_token_throughput:.6f},{r.reuse_rate:.6f},"
                f"{r.latency_reduction_pct:.2f},{r.request_throughput_gain_pct:.2f},"
                f"{r.input_token_throughput_gain_pct:.2f},{r.reuse_rate_delta_pp:.2f},"
                f"{r.cost_reduction_pct:.2f}"
            )
        return "\n".join(lines) + "\n"

    def render_text(self) -> str:
        header = (
            f"{'scheme':<10}{'latency':>12}{'req/s':>10}{'tok/s':>12}"
            f"{'reuse':>8}{'lat -%':>9}{'thr +%':>9}{'cost -%':>9}"
        )
        lines = [header, "-" * len(header)]
        for r in self.rows:
            lines.append(
                f"{r.scheme:<10}{r.avg_latency:>12.2f}{r.request_throughput:>10.4f}"
                f"{r.input_token_throughput:>12.1f}{r.reuse_rate:>8.3f}"
                f"{r.latency_reduction_pct:>9.1f}{r.request_throughput_gain_pct:>9.1f}"
                f"{r.cost_reduction_pct:>9.1f}"
            )
        return "\n".join(lines) + "\n"


def report_compare(reports: list[MetricsReport]) -> ComparisonTable:
    """Four serving metrics per scheme plus deltas against the first report."""
    if len(reports) < 2:
        raise ReportComparisonError("need at least two reports to compare")
    fingerprints = {r.workload_fingerprint for r in reports}
    if len(fingerprints) != 1:
        raise ReportComparisonError("reports describe different workloads")
    base = reports[0]
    rows = []
    for report in reports:
        gain = report.request_throughput / base.request_throughput - 1.0
        rows.append(
            CompareRow(
                scheme=report.scheme,
                avg_latency=report.avg_latency,
                request_throughput=report.request_throughput,
                input_token_throughput=report.input_token_throughput,
                reuse_rate=report.reuse_rate,
                latency_reduction_pct=(1.0 - report.avg_latency / base.avg_latency) * 100.0,
                request_throughput_gain_pct=gain * 100.0,
                input_token_throughput_gain_pct=(
                    report.input_token_throughput / base.input_token_throughput - 1.0
                ) * 100.0,
                reuse_rate_delta_pp=(report.reuse_rate - base.reuse_rate) * 100.0,
                cost_reduction_pct=cost_reduction(gain) * 100.0,
            )
        )
    return ComparisonTable(tuple(rows))


# ---------------------------------------------------------------------------
# Subcommand implementations

def _load_config(path: str | None) -> Config:
    if path:
        return Config.load(path)
    return Config.from_env()


def _cmd_tokenizer(args: argparse.Namespace) -> int:
    if args.action == "train":
        corpus_dir = Path(args.corpus)
        files = sorted(p for p in corpus_dir.rglob("*") if p.is_file())
        corpus = [p.read_bytes() for p in files]
        vocab = train(corpus, args.size)
        vocab.save(args.out)
        print(f"trained vocabulary of {vocab.size} tokens -> {args.out}")
        return 0
    vocab = Vocabulary.load(args.vocab)
    data = Path(args.infile).read_bytes() if args.infile else sys.stdin.buffer.read()
    if args.action == "encode":
        ids = vocab.encode(data)
        out = " ".join(str(i) for i in ids) + "\n"
        _write_or_print(args.out, out)
    else:
        ids = [int(tok) for tok in data.split()]
        decoded = vocab.decode(ids)
        if args.out:
            Path(args.out).write_bytes(decoded)
        else:
            sys.stdout.buffer.write(decoded)
    return 0


def _write_or_print(path: str | None, text: str) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_workload(args: argparse.Namespace) -> int:
    spec = workload.WorkloadSpec.from_json(args.spec) if args.spec else workload.WorkloadSpec()
    scripts = workload.generate(spec, args.seed)
    workload.to_jsonl(scripts, args.out)
    total = sum(len(s.rounds) for s in scripts)
    print(f"wrote {len(scripts)} user scripts / {total} rounds -> {args.out}")
    return 0


def _csv_path(out: str) -> Path:
    return Path(out).with_suffix(".csv")


def _cmd_simulate(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    vocab = config.load_vocabulary()
    scripts = workload.from_jsonl(args.trace)
    engine = config.engine_config(Scheme(args.scheme))
    report = engine_sim.run(scripts, engine, vocab)
    report.write_json(args.out)
    report.write_csv(_csv_path(args.out))
    print(
        f"{report.scheme}: avg_latency={report.avg_latency:.2f} "
        f"reuse_rate={report.reuse_rate:.3f} -> {args.out}"
    )
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    vocab = config.load_vocabulary()
    spec = workload.WorkloadSpec.from_json(args.spec) if args.spec else workload.WorkloadSpec()
    counts = [int(c) for c in args.users.split(",")]
    engine = config.engine_config(Scheme(args.scheme))
    results = engine_sim.sweep_users(spec, engine, counts, vocab)
    payload = [{"users": count, "report": report.to_dict()} for count, report in results]
    Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    lines = ["users,avg_latency,request_throughput,input_token_throughput,reuse_rate"]
    for count, report in results:
        lines.append(
            f"{count},{report.avg_latency:.6f},{report.request_throughput:.6f},"
            f"{report.input_token_throughput:.6f},{report.reuse_rate:.6f}"
        )
    _csv_path(args.out).write_text("\n".join(lines) + "\n")
    print(f"swept {len(results)} user counts -> {args.out}")
    return 0


def _cmd_prepare_data(args: argparse.Namespace) -> int:
    vocab = Vocabulary.load(args.vocab) if args.vocab else default_vocabulary()
    corpus_dir = Path(args.corpus)
    files = sorted(p for p in corpus_dir.rglob("*") if p.is_file())
    docs = [
        fragment_data.Document(str(p.relative_to(corpus_dir)), p.read_bytes())
        for p in files
        if p.stat().st_size > 0
    ]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    samples = list(
        fragment_data.process_corpus(vocab, docs, args.seed, pipeline=args.mode)
    )
    count = fragment_data.write_shards(samples, out_dir / "shards.jsonl")
    stats = fragment_data.subtoken_stats(samples)
    (out_dir / "stats.json").write_text(
        json.dumps(
            {
                "documents": count,
                "boundaries_total": stats.boundaries_total,
                "word_interior": stats.word_interior,
                "fraction": stats.fraction,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    print(f"processed {count} documents -> {out_dir}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    reports = [MetricsReport.read_json(p) for p in args.reports]
    table = report_compare(reports)
    sys.stdout.write(table.render_text())
    if args.out:
        Path(args.out).write_text(table.to_csv())
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(_load_config(args.config))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# ---------------------------------------------------------------------------
# Parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="efimkit",
        description="Infilling-serving toolkit: prompt gateway, cache simulator, data pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    tok = sub.add_parser("tokenizer", help="train or apply a vocabulary")
    tok_sub = tok.add_subparsers(dest="action", required=True)
    tok_train = tok_sub.add_parser("train")
    tok_train.add_argument("--corpus", required=True, help="directory of text files")
    tok_train.add_argument("--size", type=int, required=True, help="target vocabulary size")
    tok_train.add_argument("--out", required=True)
    for action in ("encode", "decode"):
        p = tok_sub.add_parser(action)
        p.add_argument("--vocab", required=True)
        p.add_argument("--in", dest="infile", default=None, help="input file (default stdin)")
        p.add_argument("--out", default=None, help="output file (default stdout)")

    wl = sub.add_parser("workload", help="generate a deterministic trace")
    wl_sub = wl.add_subparsers(dest="action", required=True)
    wl_gen = wl_sub.add_parser("gen")
    wl_gen.add_argument("--spec", default=None, help="workload spec JSON (defaults built in)")
    wl_gen.add_argument("--seed", type=int, default=None)
    wl_gen.add_argument("--out", required=True)

    sim = sub.add_parser("simulate", help="run one scheme over a trace")
    sim.add_argument("--trace", required=True)
    sim.add_argument("--config", default=None, help=f"config JSON (or ${ENV_CONFIG_PATH})")
    sim.add_argument("--scheme", required=True, choices=[s.value for s in Scheme])
    sim.add_argument("--out", required=True, help="report JSON path (CSV written alongside)")

    sweep = sub.add_parser("sweep", help="run one scheme across user counts")
    sweep.add_argument("--spec", default=None)
    sweep.add_argument("--config", default=None)
    sweep.add_argument("--scheme", required=True, choices=[s.value for s in Scheme])
    sweep.add_argument("--users", required=True, help="comma-separated ascending counts")
    sweep.add_argument("--out", required=True)

    prep = sub.add_parser("prepare-data", help="build training shards from a corpus")
    prep.add_argument("--corpus", required=True)
    prep.add_argument("--vocab", default=None)
    prep.add_argument("--mode", required=True, choices=["fim", "fragment"])
    prep.add_argument("--seed", type=int, default=0)
    prep.add_argument("--out", required=True, help="output directory")

    rep = sub.add_parser("report", help="compare metric reports")
    rep_sub = rep.add_subparsers(dest="action", required=True)
    rep_cmp = rep_sub.add_parser("compare")
    rep_cmp.add_argument("reports", nargs="+", help="report JSON files; first is the baseline")
    rep_cmp.add_argument("--out", default=None, help="CSV output path")

    serve = sub.add_parser("serve", help="run the HTTP gateway")
    serve.add_argument("--config", default=None)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8080)

    return parser


_HANDLERS = {
    "tokenizer": _cmd_tokenizer,
    "workload": _cmd_workload,
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
    "prepare-data": _cmd_prepare_data,
    "report": _cmd_report,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help and 2 for usage errors; we report 1.
        return 0 if exc.code in (0, None) else 1
    try:
        return _HANDLERS[args.command](args)
    except (EfimKitError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
