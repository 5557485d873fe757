"""Two-phase experiment orchestration.

Phase I generates n code samples per problem with the chosen generator
strategy and records their static metrics. Phase II reads only the
persisted Phase I artifacts, asks a fixed probe generator to adapt each
sample to every requirement-change variant, and measures post-modification
correctness, tree similarity, and diff volume.

Run directory layout::

    manifest.json
    phase1/<problem>/<sample>.src
    phase1/<problem>/<sample>.static.json
    phase1/<problem>/<sample>.transcript.jsonl     (pipeline strategy only)
    phase2/<problem>/<pattern>/<sample>.probe.json
    report.csv
    report.md

Persisted artifacts exclude volatile fields (wall-clock runtimes, host
stderr), so a run under a complete cassette and a fixed clock is
byte-reproducible. The untruncated discounted expectation over an infinite
requirement-change horizon is not computable; only the truncated estimator
below is provided (the shipped protocol uses horizon 1).
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .corpus import ChangePattern, Dataset, Problem, ProblemVariant, interface_name_for_tests, iter_variants
from .dynamic_metrics import DiffVolume, ast_similarity, code_diff, dynamic_report
from .errors import DomainError, MaintlabError, SourceSyntaxError, StageError
from .gateway import LlmGateway, extract_code_block, user_request
from .parsing import parse_source
from .pipeline import GenerationPipeline, PipelineConfig
from .prompts import render
from .sandbox import SandboxJob, SandboxVerdict, VerdictStatus, run_candidate
from .static_metrics import StaticReport, static_report


class GeneratorKind(str, Enum):
    DIRECT = "direct"
    CHAIN_OF_THOUGHT = "cot"
    SELF_PLANNING = "plan"
    PIPELINE = "pipeline"


_STRATEGY_TEMPLATES = {
    GeneratorKind.DIRECT: "strategy_direct",
    GeneratorKind.CHAIN_OF_THOUGHT: "strategy_cot",
    GeneratorKind.SELF_PLANNING: "strategy_plan",
}


@dataclass(frozen=True)
class GeneratorStrategy:
    kind: GeneratorKind
    model_id: str
    prompt_template: str | None = None  # template name override for prompting kinds

    def template(self) -> str:
        if self.kind == GeneratorKind.PIPELINE:
            raise DomainError("the pipeline strategy has no single-call template")
        return self.prompt_template or _STRATEGY_TEMPLATES[self.kind]


@dataclass(frozen=True)
class ProbeResult:
    problem_id: str
    pattern: ChangePattern
    sample_index: int
    modified_code: str
    verdict: SandboxVerdict
    ast_sim: float
    diff: DiffVolume
    flagged: bool = False


@dataclass(frozen=True)
class RunManifest:
    run_id: str
    dataset_name: str
    strategy_kind: str
    strategy_model: str
    probe_model: str
    samples: int = 5
    k_values: tuple[int, ...] = (5,)
    gamma: float = 1.0
    created_at: float = 0.0
    cassette: str = ""

    def __post_init__(self):
        object.__setattr__(self, "k_values", tuple(self.k_values))
        if not self.k_values or min(self.k_values) < 1:
            raise DomainError("k values must be positive")
        if self.samples < max(self.k_values):
            raise DomainError("samples must be at least the largest k")
        if not 0.0 < self.gamma <= 1.0:
            raise DomainError("gamma must lie in (0, 1]")

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "dataset_name": self.dataset_name,
            "strategy_kind": self.strategy_kind,
            "strategy_model": self.strategy_model,
            "probe_model": self.probe_model,
            "samples": self.samples,
            "k_values": list(self.k_values),
            "gamma": self.gamma,
            "created_at": self.created_at,
            "cassette": self.cassette,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunManifest":
        data = dict(data)
        data["k_values"] = tuple(data.get("k_values", (5,)))
        return cls(**data)


@dataclass(frozen=True)
class Phase1Sample:
    problem_id: str
    index: int
    code: str
    valid: bool
    report: StaticReport | None
    error: str = ""


class RunStore:
    """Append-only artifact store under a single run directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    # paths
    def manifest_path(self) -> Path:
        return self.root / "manifest.json"

    def sample_base(self, problem_id: str, index: int) -> Path:
        directory = self.root / "phase1" / problem_id
        directory.mkdir(parents=True, exist_ok=True)
        return directory / f"{index:02d}"

    def probe_path(self, problem_id: str, pattern: ChangePattern, index: int) -> Path:
        directory = self.root / "phase2" / problem_id / pattern.slug
        directory.mkdir(parents=True, exist_ok=True)
        return directory / f"{index:02d}.probe.json"

    # manifest
    def save_manifest(self, manifest: RunManifest) -> None:
        self.manifest_path().write_text(
            json.dumps(manifest.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )

    def load_manifest(self) -> RunManifest:
        return RunManifest.from_dict(json.loads(self.manifest_path().read_text(encoding="utf-8")))

    # phase 1
    def save_sample(self, sample: Phase1Sample) -> None:
        base = self.sample_base(sample.problem_id, sample.index)
        base.with_suffix(".src").write_text(sample.code, encoding="utf-8")
        payload = {
            "valid": sample.valid,
            "error": sample.error,
            "report": sample.report.to_dict() if sample.report else None,
        }
        base.with_suffix(".static.json").write_text(
            json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )

    def transcript_path(self, problem_id: str, index: int) -> Path:
        return self.sample_base(problem_id, index).with_suffix(".transcript.jsonl")

    def load_samples(self, problem_id: str) -> list[Phase1Sample]:
        directory = self.root / "phase1" / problem_id
        samples = []
        if not directory.is_dir():
            return samples
        for meta_path in sorted(directory.glob("*.static.json")):
            index = int(meta_path.name.split(".")[0])
            payload = json.loads(meta_path.read_text(encoding="utf-8"))
            code = meta_path.with_name(f"{index:02d}.src").read_text(encoding="utf-8")
            report = StaticReport(**payload["report"]) if payload.get("report") else None
            samples.append(
                Phase1Sample(
                    problem_id=problem_id,
                    index=index,
                    code=code,
                    valid=payload["valid"],
                    report=report,
                    error=payload.get("error", ""),
                )
            )
        return samples

    # phase 2
    def save_probe(self, probe: ProbeResult) -> None:
        payload = {
            "problem_id": probe.problem_id,
            "pattern": probe.pattern.value,
            "sample_index": probe.sample_index,
            "status": probe.verdict.status.value,
            "failed_index": probe.verdict.failed_index,
            "ast_sim": probe.ast_sim,
            "diff_per": probe.diff.per,
            "diff_abs": probe.diff.abs,
            "flagged": probe.flagged,
            "modified_code": probe.modified_code,
        }
        self.probe_path(probe.problem_id, probe.pattern, probe.sample_index).write_text(
            json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )

    def load_probes(self) -> list[ProbeResult]:
        probes = []
        phase2 = self.root / "phase2"
        if not phase2.is_dir():
            return probes
        for path in sorted(phase2.glob("*/*/*.probe.json")):
            payload = json.loads(path.read_text(encoding="utf-8"))
            probes.append(
                ProbeResult(
                    problem_id=payload["problem_id"],
                    pattern=ChangePattern(payload["pattern"]),
                    sample_index=payload["sample_index"],
                    modified_code=payload["modified_code"],
                    verdict=SandboxVerdict(
                        status=VerdictStatus(payload["status"]),
                        failed_index=payload["failed_index"],
                    ),
                    ast_sim=payload["ast_sim"],
                    diff=DiffVolume(per=payload["diff_per"], abs=payload["diff_abs"]),
                    flagged=payload["flagged"],
                )
            )
        return probes


class _PhaseGuardGateway:
    """Phase II must never re-spend Phase I requests; forbidden tag
    prefixes raise instead of calling through."""

    def __init__(self, inner: LlmGateway, forbidden_prefix: str):
        self.inner = inner
        self.forbidden_prefix = forbidden_prefix

    def complete(self, request) -> str:
        if request.tag.startswith(self.forbidden_prefix):
            raise MaintlabError(
                f"phase separation violated: tag {request.tag!r} is forbidden here"
            )
        return self.inner.complete(request)


def phase1(
    dataset: Dataset,
    strategy: GeneratorStrategy,
    manifest: RunManifest,
    gateway: LlmGateway,
    store: RunStore,
    run_sandbox: Callable[[SandboxJob], SandboxVerdict] = run_candidate,
    clock: Callable[[], float] = time.time,
    jobs: int = 1,
) -> dict[str, list[Phase1Sample]]:
    """Generate n samples per problem and persist code plus static report.

    Problems fan out across ``jobs`` workers; artifacts are per-problem
    files, so results are independent of completion order.
    """
    store.save_manifest(manifest)

    def generate_all(problem: Problem) -> list[Phase1Sample]:
        samples = []
        for index in range(manifest.samples):
            tag = f"phase1/{strategy.kind.value}/{problem.id}/s{index}"
            sample = _one_sample(problem, index, tag, strategy, gateway, store, run_sandbox, clock)
            store.save_sample(sample)
            samples.append(sample)
        return samples

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            sample_lists = list(pool.map(generate_all, dataset.problems))
    else:
        sample_lists = [generate_all(problem) for problem in dataset.problems]
    return {problem.id: samples for problem, samples in zip(dataset.problems, sample_lists)}


def _one_sample(
    problem: Problem,
    index: int,
    tag: str,
    strategy: GeneratorStrategy,
    gateway: LlmGateway,
    store: RunStore,
    run_sandbox,
    clock,
) -> Phase1Sample:
    try:
        if strategy.kind == GeneratorKind.PIPELINE:
            pipeline = GenerationPipeline(gateway, run_sandbox=run_sandbox, clock=clock)
            config = PipelineConfig(
                interface_name=problem.interface_name,
                seed_test=problem.tests[0],
                model_id=strategy.model_id,
            )
            outcome = pipeline.run(
                problem,
                config,
                run_id=tag,
                transcript_path=store.transcript_path(problem.id, index),
            )
            code = outcome.code
        else:
            prompt = render(
                strategy.template(),
                problem=problem.statement,
                interface_name=problem.interface_name,
            )
            response = gateway.complete(
                user_request(prompt, model_id=strategy.model_id, tag=tag)
            )
            code = extract_code_block(response).code
    except StageError as exc:
        return Phase1Sample(
            problem_id=problem.id, index=index, code="", valid=False, report=None, error=str(exc)
        )
    try:
        report = static_report(code)
    except (SourceSyntaxError, DomainError) as exc:
        return Phase1Sample(
            problem_id=problem.id, index=index, code=code, valid=False, report=None, error=str(exc)
        )
    return Phase1Sample(problem_id=problem.id, index=index, code=code, valid=True, report=report)


def phase2_probe(
    c0: str,
    problem: Problem,
    variant: ProblemVariant,
    probe_model: str,
    gateway: LlmGateway,
    sample_index: int = 0,
    run_sandbox: Callable[[SandboxJob], SandboxVerdict] = run_candidate,
) -> ProbeResult:
    """Adapt one C0 sample to one variant and measure the adaptation."""
    parse_source(c0)  # precondition: the original must parse
    interface = interface_name_for_tests(variant.tests)
    new_requirements = variant.statement
    if variant.input_format or variant.output_format:
        new_requirements += (
            f"\n\nInput format: {variant.input_format}\nOutput format: {variant.output_format}"
        )
    prompt = render(
        "probe_modification",
        test_interface_name=interface,
        original_requirements=problem.statement,
        original_code=c0,
        new_requirements=new_requirements,
        test_case=variant.tests[0],
    )
    tag = f"phase2/{problem.id}/{variant.pattern.slug}/s{sample_index}"
    response = gateway.complete(user_request(prompt, model_id=probe_model, tag=tag))
    modified = extract_code_block(response).code
    try:
        parse_source(modified)
    except SourceSyntaxError as exc:
        return ProbeResult(
            problem_id=problem.id,
            pattern=variant.pattern,
            sample_index=sample_index,
            modified_code=modified,
            verdict=SandboxVerdict(status=VerdictStatus.SYNTAX_ERROR, stderr_excerpt=str(exc)),
            ast_sim=0.0,
            diff=DiffVolume(per=0.0, abs=0),
            flagged=True,
        )
    verdict = run_sandbox(
        SandboxJob(source=modified, tests=variant.tests, interface_name=interface)
    )
    return ProbeResult(
        problem_id=problem.id,
        pattern=variant.pattern,
        sample_index=sample_index,
        modified_code=modified,
        verdict=verdict,
        ast_sim=ast_similarity(c0, modified),
        diff=code_diff(c0, modified),
    )


def run_phase2(
    dataset: Dataset,
    store: RunStore,
    gateway: LlmGateway,
    patterns: Iterable[ChangePattern] | None = None,
    run_sandbox: Callable[[SandboxJob], SandboxVerdict] = run_candidate,
    jobs: int = 1,
) -> list[ProbeResult]:
    """Probe every persisted Phase I sample against every selected variant."""
    manifest = store.load_manifest()
    guarded = _PhaseGuardGateway(gateway, forbidden_prefix="phase1/")

    def probe_variant(pair: tuple[Problem, ProblemVariant]) -> list[ProbeResult]:
        problem, variant = pair
        out = []
        for sample in store.load_samples(problem.id):
            if sample.valid:
                probe = phase2_probe(
                    sample.code,
                    problem,
                    variant,
                    manifest.probe_model,
                    guarded,
                    sample_index=sample.index,
                    run_sandbox=run_sandbox,
                )
            else:
                # invalid C0 counts as a non-pass without spending a probe call
                probe = ProbeResult(
                    problem_id=problem.id,
                    pattern=variant.pattern,
                    sample_index=sample.index,
                    modified_code="",
                    verdict=SandboxVerdict(
                        status=VerdictStatus.SYNTAX_ERROR, stderr_excerpt=sample.error
                    ),
                    ast_sim=0.0,
                    diff=DiffVolume(per=0.0, abs=0),
                    flagged=True,
                )
            store.save_probe(probe)
            out.append(probe)
        return out

    pairs = list(iter_variants(dataset, patterns))
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            probe_lists = list(pool.map(probe_variant, pairs))
    else:
        probe_lists = [probe_variant(pair) for pair in pairs]
    return [probe for probes in probe_lists for probe in probes]


def estimate_maintainability(
    costs: Sequence[float], gamma: float = 1.0, horizon: int = 1
) -> float:
    """Truncated maintenance-cost estimate.

    horizon 1 (the shipped protocol): Monte-Carlo mean of the single-step
    costs. horizon > 1 (exposed form): discounted sum over a per-step cost
    sequence, sum(gamma**i * costs[i]).
    """
    if not costs:
        raise DomainError("no costs to estimate from")
    if horizon < 1:
        raise DomainError("horizon must be at least 1")
    if horizon == 1:
        return sum(costs) / len(costs)
    if len(costs) < horizon:
        raise DomainError("need one per-step cost per horizon step")
    return sum(gamma**i * costs[i] for i in range(horizon))


@dataclass(frozen=True)
class Report:
    manifest: RunManifest
    row: dict
    gaps: tuple[str, ...] = ()
    maintenance_estimate: float | None = None

    def columns(self) -> list[str]:
        return list(self.row.keys())

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=self.columns(), lineterminator="\n")
        writer.writeheader()
        writer.writerow(self.row)
        return buffer.getvalue()

    def to_markdown(self) -> str:
        columns = self.columns()
        lines = [
            "| " + " | ".join(columns) + " |",
            "| " + " | ".join("---" for _ in columns) + " |",
            "| " + " | ".join(str(self.row[c]) for c in columns) + " |",
        ]
        if self.maintenance_estimate is not None:
            lines.append("")
            lines.append(
                f"First-order maintenance-cost estimate (mean diff %): "
                f"{self.maintenance_estimate:.4f}"
            )
        if self.gaps:
            lines.append("")
            lines.append("Gaps: " + "; ".join(self.gaps))
        return "\n".join(lines) + "\n"


def aggregate_report(
    store: RunStore,
    cost: Callable[[ProbeResult], float] = lambda probe: probe.diff.per,
) -> Report:
    """Fold the persisted artifacts into the report row; pure function of
    the run directory. Missing artifacts leave explicit gaps."""
    manifest = store.load_manifest()
    gaps: list[str] = []

    reports_by_problem: dict[str, list[StaticReport]] = {}
    phase1_dir = store.root / "phase1"
    if phase1_dir.is_dir():
        for problem_dir in sorted(phase1_dir.iterdir()):
            valid = [s.report for s in store.load_samples(problem_dir.name) if s.valid]
            if valid:
                reports_by_problem[problem_dir.name] = valid
    row: dict = {
        "strategy": manifest.strategy_kind,
        "model": manifest.strategy_model,
    }
    if reports_by_problem:
        per_problem_mi = [
            sum(r.maintainability_index for r in reports) / len(reports)
            for reports in reports_by_problem.values()
        ]
        per_problem_cc = [
            sum(r.cyclomatic_complexity for r in reports) / len(reports)
            for reports in reports_by_problem.values()
        ]
        row["mi"] = _fmt(sum(per_problem_mi) / len(per_problem_mi))
        row["cc"] = _fmt(sum(per_problem_cc) / len(per_problem_cc))
    else:
        row["mi"] = ""
        row["cc"] = ""
        gaps.append("no valid phase1 samples")

    probes = store.load_probes()
    estimate = None
    if probes:
        dynamic = dynamic_report(probes, k_values=manifest.k_values)
        for k in manifest.k_values:
            row[f"pass_at_{k}"] = _fmt(dynamic["pass_at_k"][k] * 100)
        row["ast_sim"] = _fmt(dynamic["ast_similarity"])
        row["code_diff_per"] = _fmt(dynamic["code_diff_per"])
        row["code_diff_abs"] = _fmt(dynamic["code_diff_abs"])
        estimate = estimate_maintainability([cost(p) for p in probes], gamma=manifest.gamma)
    else:
        for k in manifest.k_values:
            row[f"pass_at_{k}"] = ""
        row["ast_sim"] = ""
        row["code_diff_per"] = ""
        row["code_diff_abs"] = ""
        gaps.append("no phase2 probes")

    return Report(
        manifest=manifest, row=row, gaps=tuple(gaps), maintenance_estimate=estimate
    )


def write_report(store: RunStore, report: Report) -> tuple[Path, Path]:
    csv_path = store.root / "report.csv"
    md_path = store.root / "report.md"
    csv_path.write_text(report.to_csv(), encoding="utf-8")
    md_path.write_text(report.to_markdown(), encoding="utf-8")
    return csv_path, md_path


def _fmt(value: float) -> str:
    """Stable 4-decimal formatting so reports are byte-reproducible."""
    return f"{value:.4f}"
