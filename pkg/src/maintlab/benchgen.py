"""Benchmark builder: requirement-change variants with co-evolved tests.

Each of the four change patterns fills its template with the seed
problem's statement and solution, the response JSON is schema-validated
into a candidate, and the candidate's solution and tests are co-evolved
against the sandbox until the solution passes or the repair cap runs out.
Cap-exhausted candidates are routed to a review-queue file with their
failure history instead of crashing the build.
"""

from __future__ import annotations

import ast
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .corpus import (
    ChangePattern,
    MIN_VARIANT_TESTS,
    Problem,
    ProblemVariant,
    assert_statements,
    derive_interface_name,
    interface_name_for_tests,
    variant_record,
)
from .errors import AmbiguityError, AssertionParseError, JsonExtractError, SchemaError, SourceSyntaxError
from .gateway import LlmGateway, extract_json, user_request
from .parsing import parse_source
from .prompts import render
from .sandbox import SandboxJob, SandboxVerdict, VerdictStatus, run_candidate

DEFAULT_CO_EVOLUTION_CAP = 3

_PATTERN_TEMPLATES = {
    ChangePattern.EXTENSION: "pattern_extension",
    ChangePattern.INTERFACE: "pattern_interface",
    ChangePattern.DATA_STRUCTURE: "pattern_data_structure",
    ChangePattern.ERROR_HANDLING: "pattern_error_handling",
}


@dataclass
class CandidateVariant:
    parent_id: str
    pattern: ChangePattern
    raw_response: str
    parsed: dict
    repair_rounds_used: int = 0


@dataclass(frozen=True)
class RepairAttempt:
    round: int
    status: str
    failed_index: int | None
    message: str


@dataclass
class CoEvolutionResult:
    variant: ProblemVariant | None
    repair_rounds_used: int
    history: list[RepairAttempt] = field(default_factory=list)
    final_verdict: SandboxVerdict | None = None

    @property
    def needs_review(self) -> bool:
        return self.variant is None


@dataclass(frozen=True)
class GateCheck:
    name: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class GateReport:
    checks: tuple[GateCheck, ...]

    @property
    def all_passed(self) -> bool:
        return all(check.passed for check in self.checks)


def generate_variant(
    problem: Problem,
    pattern: ChangePattern,
    gateway: LlmGateway,
    model_id: str,
) -> CandidateVariant:
    """One templated generation call, JSON-extracted and schema-checked."""
    prompt = render(
        _PATTERN_TEMPLATES[pattern],
        raw_problem=problem.statement,
        raw_solution=problem.solution,
    )
    error: Exception | None = None
    for attempt in range(2):  # one reprompt
        tag = f"benchgen/{problem.id}/{pattern.slug}/r{attempt}"
        response = gateway.complete(user_request(prompt, model_id=model_id, tag=tag))
        try:
            parsed = _validated_candidate_fields(extract_json(response), pattern)
            return CandidateVariant(
                parent_id=problem.id, pattern=pattern, raw_response=response, parsed=parsed
            )
        except (JsonExtractError, SchemaError) as exc:
            error = exc
            prompt = (
                render(
                    _PATTERN_TEMPLATES[pattern],
                    raw_problem=problem.statement,
                    raw_solution=problem.solution,
                )
                + f"\n\nYour previous reply was rejected ({exc}). "
                "Reply again with only the valid JSON object."
            )
    raise error


def co_evolve(
    candidate: CandidateVariant,
    cap: int = DEFAULT_CO_EVOLUTION_CAP,
    gateway: LlmGateway | None = None,
    model_id: str = "",
    run_sandbox: Callable[[SandboxJob], SandboxVerdict] = run_candidate,
) -> CoEvolutionResult:
    """Run/repair loop: at most cap repairs, hence at most cap+1 sandbox runs."""
    current = dict(candidate.parsed)
    history: list[RepairAttempt] = []
    verdict: SandboxVerdict | None = None
    for round_no in range(cap + 1):
        verdict = run_sandbox(_job_for(current))
        if verdict.status == VerdictStatus.PASS:
            candidate.repair_rounds_used = round_no
            return CoEvolutionResult(
                variant=_finalize(candidate, current),
                repair_rounds_used=round_no,
                history=history,
                final_verdict=verdict,
            )
        if round_no == cap:
            break
        history.append(
            RepairAttempt(
                round=round_no + 1,
                status=verdict.status.value,
                failed_index=verdict.failed_index,
                message=verdict.stderr_excerpt,
            )
        )
        current = _request_repair(current, verdict, candidate, round_no, gateway, model_id)
    candidate.repair_rounds_used = cap
    return CoEvolutionResult(
        variant=None, repair_rounds_used=cap, history=history, final_verdict=verdict
    )


def quality_gate(
    variant: ProblemVariant,
    parent: Problem,
    run_sandbox: Callable[[SandboxJob], SandboxVerdict] = run_candidate,
) -> GateReport:
    """Automated checks on a finalized variant (expert review stays out of band)."""
    checks = []
    verdict = run_sandbox(_variant_job(variant))
    checks.append(
        GateCheck(
            name="solution_passes_tests",
            passed=verdict.status == VerdictStatus.PASS,
            detail=verdict.status.value,
        )
    )
    checks.append(_interface_check(variant))
    if variant.pattern == ChangePattern.EXTENSION:
        checks.append(_self_invoking_check(variant, parent))
    if variant.pattern == ChangePattern.ERROR_HANDLING:
        checks.append(_error_path_check(variant, run_sandbox))
    return GateReport(checks=tuple(checks))


def build_variants(
    problem: Problem,
    patterns: Iterable[ChangePattern],
    gateway: LlmGateway,
    model_id: str,
    cap: int = DEFAULT_CO_EVOLUTION_CAP,
    run_sandbox: Callable[[SandboxJob], SandboxVerdict] = run_candidate,
) -> tuple[list[tuple[ProblemVariant, GateReport]], list[dict]]:
    """Build every selected pattern for one seed problem.

    Returns finalized (variant, gate report) pairs and the review-queue
    records for cap-exhausted candidates.
    """
    finalized: list[tuple[ProblemVariant, GateReport]] = []
    review: list[dict] = []
    for pattern in sorted(patterns, key=lambda p: p.slug):
        candidate = generate_variant(problem, pattern, gateway, model_id)
        result = co_evolve(
            candidate, cap=cap, gateway=gateway, model_id=model_id, run_sandbox=run_sandbox
        )
        if result.variant is not None:
            finalized.append((result.variant, quality_gate(result.variant, problem, run_sandbox)))
        else:
            review.append(review_record(candidate, result))
    return finalized, review


def review_record(candidate: CandidateVariant, result: CoEvolutionResult) -> dict:
    record = {
        "id": candidate.parent_id,
        "prompt_type": candidate.pattern.value,
        "repair_rounds_used": result.repair_rounds_used,
        "failures": [
            {
                "round": a.round,
                "status": a.status,
                "failed_index": a.failed_index,
                "message": a.message,
            }
            for a in result.history
        ],
        "candidate": candidate.parsed,
    }
    if result.final_verdict is not None:
        record["final_status"] = result.final_verdict.status.value
    return record


def write_dataset_records(
    items: Iterable[tuple[ProblemVariant, Problem]], path: str | Path
) -> None:
    with Path(path).open("a", encoding="utf-8") as handle:
        for variant, parent in items:
            handle.write(json.dumps(variant_record(variant, parent), sort_keys=True) + "\n")


def write_review_queue(records: Iterable[dict], path: str | Path) -> None:
    with Path(path).open("a", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, sort_keys=True) + "\n")


def _validated_candidate_fields(data: Mapping, pattern: ChangePattern) -> dict:
    tag = data.get("prompt_type")
    if tag != pattern.value:
        raise SchemaError(f"prompt_type {tag!r} does not match requested {pattern.value}")
    fields = {}
    for key in ("input_format", "output_format", "new_problem", "new_solution"):
        value = data.get(key)
        if not isinstance(value, str) or not value.strip():
            raise SchemaError(f"missing or empty field {key!r}", field=key)
        fields[key] = value
    tests = _coerce_tests(data.get("test_input"))
    if len(tests) < MIN_VARIANT_TESTS:
        raise SchemaError(
            f"variant needs at least {MIN_VARIANT_TESTS} test assertions, got {len(tests)}",
            field="test_input",
        )
    try:
        parse_source(fields["new_solution"])
    except SourceSyntaxError as exc:
        raise SchemaError(f"new_solution does not parse: {exc}", field="new_solution") from exc
    fields["prompt_type"] = pattern.value
    fields["test_input"] = list(tests)
    return fields


def _coerce_tests(value) -> tuple[str, ...]:
    if isinstance(value, str):
        try:
            value = json.loads(value)
        except json.JSONDecodeError:
            try:
                value = ast.literal_eval(value)
            except (ValueError, SyntaxError):
                value = None
    if not isinstance(value, list):
        raise SchemaError("test_input must be a list of assertions", field="test_input")
    try:
        return assert_statements(value)
    except AssertionParseError as exc:
        raise SchemaError(str(exc), field="test_input") from exc


def _job_for(fields: Mapping) -> SandboxJob:
    tests = tuple(fields["test_input"])
    try:
        interface = interface_name_for_tests(tests)
    except AmbiguityError:
        interface = ""
    return SandboxJob(source=fields["new_solution"], tests=tests, interface_name=interface)


def _variant_job(variant: ProblemVariant) -> SandboxJob:
    try:
        interface = interface_name_for_tests(variant.tests)
    except AmbiguityError:
        interface = ""
    return SandboxJob(source=variant.solution, tests=variant.tests, interface_name=interface)


def _finalize(candidate: CandidateVariant, fields: Mapping) -> ProblemVariant:
    return ProblemVariant(
        parent_id=candidate.parent_id,
        pattern=candidate.pattern,
        statement=fields["new_problem"],
        solution=fields["new_solution"],
        tests=tuple(fields["test_input"]),
        input_format=fields["input_format"],
        output_format=fields["output_format"],
    )


def _request_repair(
    current: dict,
    verdict: SandboxVerdict,
    candidate: CandidateVariant,
    round_no: int,
    gateway: LlmGateway | None,
    model_id: str,
) -> dict:
    """Ask for corrected solution and/or tests; an unusable repair reply
    leaves the artifacts unchanged (the next run burns the round)."""
    if gateway is None:
        return current
    failing = ""
    if verdict.failed_index is not None and 0 <= verdict.failed_index < len(current["test_input"]):
        failing = current["test_input"][verdict.failed_index]
    prompt = render(
        "variant_repair",
        new_problem=current["new_problem"],
        new_solution=current["new_solution"],
        tests=json.dumps(current["test_input"]),
        verdict=f"{verdict.status.value} on assertion {failing!r}: {verdict.stderr_excerpt}",
    )
    tag = f"benchgen/{candidate.parent_id}/{candidate.pattern.slug}/repair{round_no}"
    response = gateway.complete(user_request(prompt, model_id=model_id, tag=tag))
    try:
        data = extract_json(response)
        updated = dict(current)
        if isinstance(data.get("new_solution"), str) and data["new_solution"].strip():
            parse_source(data["new_solution"])
            updated["new_solution"] = data["new_solution"]
        if data.get("test_input") is not None:
            tests = _coerce_tests(data.get("test_input"))
            if len(tests) >= MIN_VARIANT_TESTS:
                updated["test_input"] = list(tests)
        return updated
    except (JsonExtractError, SchemaError, SourceSyntaxError):
        return current


def _interface_check(variant: ProblemVariant) -> GateCheck:
    try:
        interface = interface_name_for_tests(variant.tests)
    except AmbiguityError as exc:
        return GateCheck(name="tests_call_interface", passed=False, detail=str(exc))
    return GateCheck(name="tests_call_interface", passed=True, detail=interface)


def _self_invoking_check(variant: ProblemVariant, parent: Problem) -> GateCheck:
    """Extension solutions must call the parent solution's interface."""
    try:
        parent_interface = derive_interface_name(parent)
    except AmbiguityError as exc:
        return GateCheck(name="self_invoking", passed=False, detail=str(exc))
    module = parse_source(variant.solution).py_ast
    calls = sum(
        1
        for node in ast.walk(module)
        if isinstance(node, ast.Call)
        and isinstance(node.func, ast.Name)
        and node.func.id == parent_interface
    )
    return GateCheck(
        name="self_invoking",
        passed=calls >= 1,
        detail=f"{calls} call(s) to {parent_interface}",
    )


def _error_path_check(
    variant: ProblemVariant, run_sandbox: Callable[[SandboxJob], SandboxVerdict]
) -> GateCheck:
    """Instrumented run: did any exception handler in the solution execute?"""
    try:
        instrumented = _instrument_handlers(variant.solution)
    except SourceSyntaxError as exc:
        return GateCheck(name="error_path_exercised", passed=False, detail=str(exc))
    tests = tuple(variant.tests) + ("assert _ml_handler_hit",)
    verdict = run_sandbox(
        SandboxJob(source=instrumented, tests=tests, interface_name=_variant_job(variant).interface_name)
    )
    passed = verdict.status == VerdictStatus.PASS
    detail = "a handler executed" if passed else f"{verdict.status.value}"
    return GateCheck(name="error_path_exercised", passed=passed, detail=detail)


_INSTRUMENT_PREAMBLE = (
    "_ml_handler_hit = False\n"
    "def _ml_mark_handler():\n"
    "    global _ml_handler_hit\n"
    "    _ml_handler_hit = True\n"
)


def _instrument_handlers(source: str) -> str:
    module = parse_source(source).py_ast
    for node in ast.walk(module):
        if isinstance(node, ast.ExceptHandler):
            marker = ast.Expr(
                value=ast.Call(func=ast.Name(id="_ml_mark_handler", ctx=ast.Load()), args=[], keywords=[])
            )
            node.body.insert(0, marker)
    ast.fix_missing_locations(module)
    return _INSTRUMENT_PREAMBLE + ast.unparse(module)
