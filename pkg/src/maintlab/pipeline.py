"""Staged multi-agent code generation pipeline.

Six stages run in causal order: requirements analysis, design-pattern
selection, framework design in a revision loop with framework evaluation,
code generation, and code optimization in a loop driven by sandbox
feedback. Each stage receives exactly the prior artifacts it is listed
with (no rolling chat history), which keeps a run a pure function of
(problem, config) under a fixed cassette.

Loop accounting: ``loop_counts`` tracks revision cycles for framework
evaluation and optimization rounds for code optimization; both are hard
capped. Cap exhaustion in optimization returns the best candidate so far,
flagged, rather than failing the run.
"""

from __future__ import annotations

import ast
import json
import time
import uuid
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable

from .corpus import Problem
from .errors import JsonExtractError, SourceSyntaxError, StageError
from .gateway import LlmGateway, extract_code_block, extract_json, fingerprint, user_request
from .parsing import parse_source
from .prompts import render
from .sandbox import SandboxJob, SandboxVerdict, VerdictStatus, run_candidate

ACCEPT_MARKER = "FRAMEWORK ACCEPTED"

DEFAULT_FRAMEWORK_EVAL_CAP = 3
DEFAULT_OPTIMIZATION_CAP = 5


class AgentStage(str, Enum):
    REQUIREMENTS_ANALYSIS = "requirements_analysis"
    PATTERN_SELECTION = "pattern_selection"
    FRAMEWORK_DESIGN = "framework_design"
    FRAMEWORK_EVALUATION = "framework_evaluation"
    CODE_GENERATION = "code_generation"
    CODE_OPTIMIZATION = "code_optimization"


@dataclass(frozen=True)
class FrameworkModule:
    name: str
    main_pattern: str
    rationale: str = ""
    alternatives: tuple[str, ...] = ()


@dataclass(frozen=True)
class FrameworkSpec:
    modules: tuple[FrameworkModule, ...] = ()
    class_structure: str = ""
    dependencies: str = ""

    def describe_modules(self) -> str:
        lines = []
        for mod in self.modules:
            alt = f" (alternatives: {', '.join(mod.alternatives)})" if mod.alternatives else ""
            lines.append(f"- {mod.name}: {mod.main_pattern} — {mod.rationale}{alt}")
        return "\n".join(lines)

    def describe(self) -> str:
        parts = [self.describe_modules()]
        if self.class_structure:
            parts.append(self.class_structure)
        if self.dependencies:
            parts.append("Dependencies:\n" + self.dependencies)
        return "\n\n".join(part for part in parts if part)


@dataclass(frozen=True)
class TranscriptEvent:
    stage: str
    iteration: int
    fingerprint: str
    response: str
    timestamp: float


@dataclass
class AgentTranscript:
    run_id: str
    events: list[TranscriptEvent] = field(default_factory=list)
    loop_counts: dict[str, int] = field(default_factory=dict)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        with path.open("w", encoding="utf-8") as handle:
            handle.write(
                json.dumps({"run_id": self.run_id, "loop_counts": self.loop_counts}, sort_keys=True)
                + "\n"
            )
            for event in self.events:
                handle.write(
                    json.dumps(
                        {
                            "stage": event.stage,
                            "iteration": event.iteration,
                            "fingerprint": event.fingerprint,
                            "response": event.response,
                            "timestamp": event.timestamp,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )


@dataclass(frozen=True)
class PipelineConfig:
    interface_name: str
    seed_test: str
    framework_eval_cap: int = DEFAULT_FRAMEWORK_EVAL_CAP
    optimization_cap: int = DEFAULT_OPTIMIZATION_CAP
    model_id: str = "gpt-4o-mini"

    def __post_init__(self):
        if self.framework_eval_cap < 1 or self.optimization_cap < 1:
            raise ValueError("loop caps must be at least 1")


@dataclass
class PipelineResult:
    code: str
    transcript: AgentTranscript
    framework_accepted: bool
    optimization_exhausted: bool


class GenerationPipeline:
    """Drives the six stages through a gateway and the sandbox."""

    def __init__(
        self,
        gateway: LlmGateway,
        run_sandbox: Callable[[SandboxJob], SandboxVerdict] = run_candidate,
        clock: Callable[[], float] = time.time,
    ):
        self.gateway = gateway
        self.run_sandbox = run_sandbox
        self.clock = clock

    # -- stages --

    def analyze_requirements(self, statement: str, ctx: "_RunContext") -> str:
        if not statement.strip():
            raise StageError(AgentStage.REQUIREMENTS_ANALYSIS.value, "empty problem statement")
        prompt = render("stage_analysis", requirements=statement)
        return self._call(ctx, AgentStage.REQUIREMENTS_ANALYSIS, prompt)

    def select_patterns(self, analysis: str, ctx: "_RunContext") -> FrameworkSpec:
        prompt = render("stage_pattern_selection", analysis=analysis)
        for attempt in range(2):  # one reprompt on parse failure
            response = self._call(ctx, AgentStage.PATTERN_SELECTION, prompt, iteration=attempt)
            try:
                return _parse_module_list(extract_json(response))
            except (JsonExtractError, ValueError) as exc:
                error = exc
                prompt = (
                    render("stage_pattern_selection", analysis=analysis)
                    + f"\n\nYour previous reply could not be parsed ({error}). "
                    "Reply with only the JSON object, exactly in the requested form."
                )
        raise StageError(AgentStage.PATTERN_SELECTION.value, f"unparseable module list: {error}")

    def design_framework(
        self,
        analysis: str,
        spec: FrameworkSpec,
        ctx: "_RunContext",
        feedback: str | None = None,
        iteration: int = 0,
    ) -> FrameworkSpec:
        feedback_section = (
            f"\nRevise the framework to address the following reviewer feedback:\n{feedback}\n"
            if feedback
            else ""
        )
        prompt = render(
            "stage_framework_design",
            analysis=analysis,
            modules=spec.describe_modules(),
            feedback_section=feedback_section,
        )
        response = self._call(ctx, AgentStage.FRAMEWORK_DESIGN, prompt, iteration=iteration)
        structure, dependencies = _split_design(response)
        return FrameworkSpec(
            modules=spec.modules, class_structure=structure, dependencies=dependencies
        )

    def evaluate_framework(
        self, requirements: str, analysis: str, framework: FrameworkSpec, ctx: "_RunContext",
        iteration: int = 0,
    ) -> tuple[str, str]:
        """Classify the evaluator's reply; anything unclassifiable is a
        revise verdict with the raw reply as feedback (fail-safe)."""
        prompt = render(
            "stage_framework_evaluation",
            requirements=requirements,
            analysis=analysis,
            framework=framework.describe(),
        )
        response = self._call(ctx, AgentStage.FRAMEWORK_EVALUATION, prompt, iteration=iteration)
        if ACCEPT_MARKER in response:
            return "accept", ""
        return "revise", response.strip()

    def generate_code(
        self, requirements: str, analysis: str, framework: FrameworkSpec, config: PipelineConfig,
        ctx: "_RunContext",
    ) -> str:
        prompt = render(
            "stage_code_generation",
            requirements=requirements,
            analysis=analysis,
            framework=framework.describe(),
            interface_name=config.interface_name,
        )
        problem = ""
        for attempt in range(2):
            response = self._call(ctx, AgentStage.CODE_GENERATION, prompt, iteration=attempt)
            code = extract_code_block(response).code
            problem = _code_defect(code, config.interface_name)
            if not problem:
                return code
            prompt += (
                f"\n\nYour previous reply was rejected: {problem}. "
                f"Output the complete program again, defining {config.interface_name}."
            )
        raise StageError(AgentStage.CODE_GENERATION.value, problem)

    def optimize_code(
        self, code: str, requirements: str, framework: FrameworkSpec, config: PipelineConfig,
        ctx: "_RunContext",
    ) -> tuple[str, int, bool]:
        """Returns (code, rounds used, cap exhausted)."""
        best = code
        verdict = self._seed_verdict(code, config)
        if verdict.status == VerdictStatus.PASS:
            return code, 0, False
        rounds = 0
        while rounds < config.optimization_cap:
            rounds += 1
            prompt = render(
                "stage_code_optimization",
                requirements=requirements,
                framework=framework.describe(),
                code=best,
                seed_test=config.seed_test,
                verdict=_verdict_text(verdict),
            )
            response = self._call(ctx, AgentStage.CODE_OPTIMIZATION, prompt, iteration=rounds)
            candidate = extract_code_block(response).code
            defect = _code_defect(candidate, config.interface_name)
            if defect:
                verdict = SandboxVerdict(
                    status=VerdictStatus.SYNTAX_ERROR, stderr_excerpt=defect
                )
                continue
            best = candidate
            verdict = self._seed_verdict(best, config)
            if verdict.status == VerdictStatus.PASS:
                return best, rounds, False
        return best, rounds, True

    # -- orchestration --

    def run(
        self,
        problem: Problem,
        config: PipelineConfig,
        run_id: str | None = None,
        transcript_path: str | Path | None = None,
    ) -> PipelineResult:
        ctx = _RunContext(
            transcript=AgentTranscript(run_id=run_id or f"{problem.id}-{uuid.uuid4().hex[:8]}"),
            model_id=config.model_id,
        )
        try:
            analysis = self.analyze_requirements(problem.statement, ctx)
            spec = self.select_patterns(analysis, ctx)
            framework = self.design_framework(analysis, spec, ctx)
            revisions = 0
            accepted = False
            while revisions < config.framework_eval_cap:
                verdict, feedback = self.evaluate_framework(
                    problem.statement, analysis, framework, ctx, iteration=revisions
                )
                if verdict == "accept":
                    accepted = True
                    break
                revisions += 1
                framework = self.design_framework(
                    analysis, spec, ctx, feedback=feedback, iteration=revisions
                )
            ctx.transcript.loop_counts[AgentStage.FRAMEWORK_EVALUATION.value] = revisions
            code = self.generate_code(problem.statement, analysis, framework, config, ctx)
            code, rounds, exhausted = self.optimize_code(
                code, problem.statement, framework, config, ctx
            )
            ctx.transcript.loop_counts[AgentStage.CODE_OPTIMIZATION.value] = rounds
        except StageError as exc:
            exc.transcript = ctx.transcript
            if transcript_path is not None:
                ctx.transcript.save(transcript_path)
            raise
        if transcript_path is not None:
            ctx.transcript.save(transcript_path)
        return PipelineResult(
            code=code,
            transcript=ctx.transcript,
            framework_accepted=accepted,
            optimization_exhausted=exhausted,
        )

    # -- internals --

    def _call(
        self, ctx: "_RunContext", stage: AgentStage, prompt: str, iteration: int = 0
    ) -> str:
        request = user_request(
            prompt, model_id=ctx.model_id, tag=f"{ctx.transcript.run_id}/{stage.value}/{iteration}"
        )
        response = self.gateway.complete(request)
        ctx.transcript.events.append(
            TranscriptEvent(
                stage=stage.value,
                iteration=iteration,
                fingerprint=fingerprint(request),
                response=response,
                timestamp=self.clock(),
            )
        )
        return response

    def _seed_verdict(self, code: str, config: PipelineConfig) -> SandboxVerdict:
        return self.run_sandbox(
            SandboxJob(
                source=code, tests=(config.seed_test,), interface_name=config.interface_name
            )
        )


@dataclass
class _RunContext:
    transcript: AgentTranscript
    model_id: str


def _parse_module_list(data) -> FrameworkSpec:
    modules = data.get("modules")
    if not isinstance(modules, list) or not modules:
        raise ValueError("response lacks a non-empty 'modules' list")
    parsed = []
    for entry in modules:
        if not isinstance(entry, dict):
            raise ValueError(f"module entry is not an object: {entry!r}")
        name = entry.get("name")
        main_pattern = entry.get("main_pattern")
        if not name or not main_pattern:
            raise ValueError(f"module entry needs name and main_pattern: {entry!r}")
        alternatives = entry.get("alternatives", [])
        if isinstance(alternatives, str):
            alternatives = [alternatives]
        parsed.append(
            FrameworkModule(
                name=str(name),
                main_pattern=str(main_pattern),
                rationale=str(entry.get("rationale", "")),
                alternatives=tuple(str(a) for a in alternatives),
            )
        )
    return FrameworkSpec(modules=tuple(parsed))


def _split_design(response: str) -> tuple[str, str]:
    """Split a design reply at its dependencies heading, if any."""
    lines = response.splitlines()
    for index, line in enumerate(lines):
        heading = line.strip().strip("#*").strip().lower()
        if heading in ("dependencies", "dependencies:"):
            return "\n".join(lines[:index]).strip(), "\n".join(lines[index + 1 :]).strip()
    return response.strip(), ""


def _code_defect(code: str, interface_name: str) -> str:
    """Empty string when the code parses and binds the interface name."""
    try:
        module = parse_source(code).py_ast
    except SourceSyntaxError as exc:
        return f"code does not parse ({exc})"
    for node in module.body:
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)) and node.name == interface_name:
            return ""
        if isinstance(node, ast.Assign) and any(
            isinstance(t, ast.Name) and t.id == interface_name for t in node.targets
        ):
            return ""
    return f"code does not define the interface function {interface_name!r}"


def _verdict_text(verdict: SandboxVerdict) -> str:
    parts = [f"status: {verdict.status.value}"]
    if verdict.failed_index is not None and verdict.failed_index >= 0:
        parts.append(f"failing test index: {verdict.failed_index}")
    if verdict.stderr_excerpt:
        parts.append(f"details: {verdict.stderr_excerpt}")
    return "; ".join(parts)
