"""Command-line surface for batch use.

Verbs: ``metrics`` (static report for one file), ``bench-build`` (variant
builder), ``eval-run`` (Phase I), ``probe`` (Phase II), ``report``
(aggregate tables). Exit codes: 0 success, 1 user error, 2 internal error.

Option precedence: flags > MAINTLAB_* environment variables > --config
JSON file > built-in defaults. All commands are non-interactive.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .benchgen import build_variants, write_dataset_records, write_review_queue
from .corpus import ChangePattern, load_dataset
from .errors import MaintlabError
from .experiment import (
    GeneratorKind,
    GeneratorStrategy,
    RunManifest,
    RunStore,
    aggregate_report,
    phase1,
    run_phase2,
    write_report,
)
from .gateway import Cassette, CassetteMode, LlmGateway
from .static_metrics import static_report

_ENV_PREFIX = "MAINTLAB_"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the exit-code contract wants 1."""

    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def dispatch(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (MaintlabError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # internal failure
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


# -- commands --


def _cmd_metrics(args) -> int:
    source = Path(args.file).read_text(encoding="utf-8")
    report = static_report(source)
    if _opt(args, "format", "text") == "json":
        print(json.dumps(report.to_dict(), sort_keys=True, indent=2))
    else:
        print(f"maintainability_index  {report.maintainability_index:.4f}")
        print(f"cyclomatic_complexity  {report.cyclomatic_complexity:.4f}")
        print(f"halstead_volume        {report.halstead_volume:.4f}")
        print(f"sloc                   {report.sloc}")
        print(f"comment_ratio          {report.comment_ratio:.4f}")
    return 0


def _cmd_bench_build(args) -> int:
    dataset = load_dataset(args.seed)
    patterns = _parse_patterns(_opt(args, "patterns", "all"))
    gateway = _gateway(args)
    model = _opt(args, "model", required=True)
    cap = int(_opt(args, "co_evolution_cap", 3))
    out = Path(_opt(args, "out", required=True))
    review_path = Path(_opt(args, "review_queue", str(out.with_suffix(".review.jsonl"))))
    built = queued = 0
    for problem in dataset.problems:
        finalized, review = build_variants(
            problem, patterns, gateway, model_id=model, cap=cap
        )
        write_dataset_records([(variant, problem) for variant, _ in finalized], out)
        write_review_queue(review, review_path)
        built += len(finalized)
        queued += len(review)
        for variant, gate in finalized:
            status = "ok" if gate.all_passed else "GATE-FAIL"
            print(f"{problem.id}/{variant.pattern.slug}: {status}")
    print(f"built {built} variants, queued {queued} for review")
    return 0


def _cmd_eval_run(args) -> int:
    dataset = load_dataset(args.dataset)
    kind = GeneratorKind(_opt(args, "strategy", required=True))
    model = _opt(args, "model", required=True)
    store = RunStore(_opt(args, "run", required=True))
    manifest = RunManifest(
        run_id=_opt(args, "run_id", Path(store.root).name),
        dataset_name=dataset.name,
        strategy_kind=kind.value,
        strategy_model=model,
        probe_model=_opt(args, "probe_model", "gpt-4o-mini"),
        samples=int(_opt(args, "samples", 5)),
        k_values=_parse_ints(_opt(args, "k", "5")),
        gamma=float(_opt(args, "gamma", 1.0)),
        cassette=str(_opt(args, "cassette", "")),
    )
    results = phase1(
        dataset,
        GeneratorStrategy(kind=kind, model_id=model),
        manifest,
        _gateway(args),
        store,
        jobs=int(_opt(args, "jobs", 1)),
    )
    valid = sum(1 for samples in results.values() for s in samples if s.valid)
    total = sum(len(samples) for samples in results.values())
    print(f"phase1 complete: {valid}/{total} valid samples in {store.root}")
    return 0


def _cmd_probe(args) -> int:
    dataset = load_dataset(args.dataset)
    store = RunStore(_opt(args, "run", required=True))
    probes = run_phase2(
        dataset,
        store,
        _gateway(args),
        jobs=int(_opt(args, "jobs", 1)),
    )
    passed = sum(1 for p in probes if p.verdict.status.value == "pass")
    print(f"phase2 complete: {passed}/{len(probes)} probes passed in {store.root}")
    return 0


def _cmd_report(args) -> int:
    store = RunStore(_opt(args, "run", required=True))
    report = aggregate_report(store)
    write_report(store, report)
    fmt = _opt(args, "format", "csv")
    if fmt == "json":
        payload = dict(report.row)
        if report.maintenance_estimate is not None:
            payload["maintenance_estimate"] = f"{report.maintenance_estimate:.4f}"
        print(json.dumps(payload, sort_keys=True, indent=2))
    elif fmt == "md":
        print(report.to_markdown(), end="")
    else:
        print(report.to_csv(), end="")
    return 0


# -- plumbing --


def _build_parser() -> _Parser:
    parser = _Parser(prog="maintlab", description=__doc__)
    parser.add_argument("--version", action="version", version=f"maintlab {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def common(p: _Parser) -> None:
        p.add_argument("--config", help="JSON config file (lowest-precedence options)")
        p.add_argument("--cassette", help="cassette file for record/replay")
        p.add_argument("--cassette-mode", choices=[m.value for m in CassetteMode])
        p.add_argument("--jobs", type=int, help="worker pool size (default 1)")

    p = sub.add_parser("metrics", help="print the static report for one source file")
    p.add_argument("file")
    p.add_argument("--format", choices=["text", "json"])
    p.add_argument("--config")
    p.set_defaults(handler=_cmd_metrics)

    p = sub.add_parser("bench-build", help="build requirement-change variants from seeds")
    p.add_argument("--seed", required=True, help="seed dataset (JSONL)")
    p.add_argument("--patterns", help="comma list: extension,interface,data_structure,error_handling or 'all'")
    p.add_argument("--out", help="output dataset JSONL")
    p.add_argument("--review-queue", dest="review_queue", help="review-queue JSONL")
    p.add_argument("--model", help="builder model id")
    p.add_argument("--co-evolution-cap", dest="co_evolution_cap", type=int)
    common(p)
    p.set_defaults(handler=_cmd_bench_build)

    p = sub.add_parser("eval-run", help="run Phase I generation over a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--strategy", choices=[k.value for k in GeneratorKind])
    p.add_argument("--model")
    p.add_argument("--run", help="run directory")
    p.add_argument("--run-id", dest="run_id")
    p.add_argument("--probe-model", dest="probe_model")
    p.add_argument("--samples", type=int)
    p.add_argument("--k", help="comma list of k values (default 5)")
    p.add_argument("--gamma", type=float)
    common(p)
    p.set_defaults(handler=_cmd_eval_run)

    p = sub.add_parser("probe", help="run Phase II probes over a completed Phase I run")
    p.add_argument("--dataset", required=True)
    p.add_argument("--run", help="run directory")
    common(p)
    p.set_defaults(handler=_cmd_probe)

    p = sub.add_parser("report", help="aggregate a run into report tables")
    p.add_argument("--run", help="run directory")
    p.add_argument("--format", choices=["csv", "md", "json"])
    p.add_argument("--config")
    p.set_defaults(handler=_cmd_report)

    return parser


def _opt(args, name: str, default=None, required: bool = False):
    """flags > MAINTLAB_* env > config file > default."""
    value = getattr(args, name, None)
    if value is None:
        value = os.environ.get(_ENV_PREFIX + name.upper())
    if value is None:
        value = _config(args).get(name)
    if value is None:
        value = default
    if value is None and required:
        raise _UsageError(f"maintlab: missing required option --{name.replace('_', '-')}")
    return value


def _config(args) -> dict:
    path = getattr(args, "config", None)
    if not path:
        return {}
    if not hasattr(args, "_config_cache"):
        args._config_cache = json.loads(Path(path).read_text(encoding="utf-8"))
    return args._config_cache


def _gateway(args) -> LlmGateway:
    cassette_path = _opt(args, "cassette")
    mode = CassetteMode(_opt(args, "cassette_mode", "live"))
    if mode != CassetteMode.LIVE and not cassette_path:
        raise _UsageError(f"maintlab: --cassette is required in {mode.value} mode")
    return LlmGateway(cassette=Cassette(cassette_path, mode=mode))


def _parse_patterns(spec: str) -> list[ChangePattern]:
    if spec.strip().lower() == "all":
        return list(ChangePattern)
    return [ChangePattern.from_slug(part.strip()) for part in spec.split(",") if part.strip()]


def _parse_ints(spec) -> tuple[int, ...]:
    if isinstance(spec, (list, tuple)):
        return tuple(int(v) for v in spec)
    return tuple(int(part) for part in str(spec).split(",") if part.strip())
