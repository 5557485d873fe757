"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines; every tolerance and runtime bound is asserted here.
"""

from __future__ import annotations

import itertools
import json
import random
import subprocess
import sys
import time
from contextlib import contextmanager
from fractions import Fraction
from math import comb
from pathlib import Path

import mpmath
import pytest

from helpers import ScriptedTransport, make_problem, reference_ratio, rename_identifiers
from maintlab.benchgen import CandidateVariant, co_evolve, quality_gate, review_record
from maintlab.corpus import ChangePattern, load_dataset
from maintlab.dynamic_metrics import (
    ast_similarity,
    code_diff,
    pass_at_k_exact,
    sequence_similarity,
)
from maintlab.errors import StageError
from maintlab.experiment import (
    GeneratorKind,
    GeneratorStrategy,
    RunManifest,
    RunStore,
    aggregate_report,
    phase1,
    run_phase2,
    write_report,
)
from maintlab.gateway import Cassette, CassetteMode, LlmGateway
from maintlab.parsing import parse_source, token_census
from maintlab.pipeline import AgentStage, GenerationPipeline, PipelineConfig
from maintlab.sandbox import (
    SandboxJob,
    SandboxVerdict,
    VerdictStatus,
    classify_outcome,
    run_candidate,
)
from maintlab.static_metrics import cyclomatic_blocks, maintainability_index


@contextmanager
def criterion(name: str, budget_seconds: float):
    started = time.monotonic()
    try:
        yield
    except BaseException:
        print(f"[ACCEPTANCE] {name}: FAIL")
        raise
    elapsed = time.monotonic() - started
    assert elapsed < budget_seconds, f"{name} exceeded its {budget_seconds}s budget ({elapsed:.1f}s)"
    print(f"[ACCEPTANCE] {name}: PASS ({elapsed:.2f}s)")


# -- criterion: MI formula oracle --

MI_TUPLES = [
    (1.0, 0.0, 1, 0.0),
    (0.0, 0.0, 1, 0.0),
    (100.0, 2.0, 10, 0.0),
    (1e9, 100.0, 10**6, 0.0),
    (1e6, 50.0, 10**4, 0.0),
    (500.0, 5.0, 50, 0.2),
    (10.0, 1.0, 5, 0.0),
    (10.0, 2.0, 20, 1.0),
    (250.0, 8.0, 120, 0.35),
    (42.0, 3.0, 17, 0.1),
    (1.0, 1.0, 1, 0.0),
    (2.5, 1.5, 3, 0.0),
    (7777.0, 12.0, 400, 0.6),
    (123456.0, 20.0, 2000, 0.25),
    (50.0, 1.0, 1000, 0.0),
    (1.0, 0.0, 100000, 0.0),
    (3.14159, 2.71828, 42, 0.05),
    (88.0, 9.0, 60, 0.45),
    (100000.0, 30.0, 500, 0.9),
    (6.0, 4.0, 30, 0.75),
]


def mi_reference(v: float, g: float, l: int, c: float) -> float:
    """High-precision independent evaluation of the score formula."""
    with mpmath.workdps(50):
        v_eff = mpmath.mpf(max(v, 1.0))
        raw = (
            171
            - mpmath.mpf("5.2") * mpmath.log(v_eff)
            - mpmath.mpf("0.23") * mpmath.mpf(g)
            - mpmath.mpf("16.2") * mpmath.log(l)
            + 50 * mpmath.sin(mpmath.sqrt(mpmath.mpf("2.4") * mpmath.mpf(c)))
        )
        return float(max(0, 100 * raw / 171))


def test_mi_formula_oracle():
    with criterion("mi-formula-oracle", budget_seconds=1.0):
        assert len(MI_TUPLES) == 20
        for v, g, l, c in MI_TUPLES:
            expected = mi_reference(v, g, l, c)
            assert expected <= 100.0, "tuple outside the agreement domain"
            actual = maintainability_index(v, g, l, c)
            if expected == 0.0:
                assert actual == 0.0, (v, g, l, c)
            else:
                rel = abs(actual - expected) / abs(expected)
                assert rel <= 1e-9, (v, g, l, c, rel)
        # the comment bonus would push past the scale; the invariant caps it
        assert maintainability_index(1.0, 0.0, 1, 1.0) == 100.0


# -- criterion: Pass@k oracle --


def test_pass_at_k_oracle():
    with criterion("pass-at-k-oracle", budget_seconds=1.0):
        for n in range(1, 9):
            for c in range(0, n + 1):
                passing = set(range(c))
                for k in range(1, n + 1):
                    hits = sum(
                        1
                        for subset in itertools.combinations(range(n), k)
                        if passing & set(subset)
                    )
                    assert pass_at_k_exact(n, c, k) == Fraction(hits, comb(n, k)), (n, c, k)


# -- criterion: CC/Halstead golden corpus --


def test_cc_halstead_golden_corpus(golden_dir, golden_expected, golden_sources):
    with criterion("cc-halstead-golden-corpus", budget_seconds=5.0):
        assert len(golden_expected) >= 15
        for name, expected in golden_expected.items():
            source = golden_sources[name]
            census = token_census(source)
            assert census.distinct_operators == expected["eta1"], name
            assert census.total_operators == expected["n1"], name
            assert census.distinct_operands == expected["eta2"], name
            assert census.total_operands == expected["n2"], name
            blocks = [list(block) for block in cyclomatic_blocks(parse_source(source))]
            assert blocks == expected["cc_blocks"], name


# -- criterion: AST similarity properties --


def test_ast_similarity_properties(golden_sources):
    with criterion("ast-similarity-properties", budget_seconds=10.0):
        sources = list(golden_sources.values())
        for source in sources:
            assert ast_similarity(source, source) == 1.0
            assert ast_similarity(source, rename_identifiers(source)) == 1.0
        for a, b in zip(sources, sources[1:]):
            assert ast_similarity(a, b) == ast_similarity(b, a)
            assert 0.0 <= ast_similarity(a, b) <= 1.0
        assert sequence_similarity(["A", "B", "C"], ["A", "B", "D"]) == pytest.approx(
            2 / 3, abs=1e-12
        )
        rng = random.Random(20250810)
        alphabet = "abcdef"
        for _ in range(1000):
            a = [rng.choice(alphabet) for _ in range(rng.randrange(0, 41))]
            b = [rng.choice(alphabet) for _ in range(rng.randrange(0, 41))]
            x, y = (a, b) if (len(a), a) <= (len(b), b) else (b, a)
            assert sequence_similarity(a, b) == pytest.approx(reference_ratio(x, y), abs=1e-12)


# -- criterion: diff-volume regime reproduction --


def test_diff_volume_regime():
    with criterion("diff-volume-regime", budget_seconds=1.0):
        original = "\n".join(f"old_line_{i} = {i}" for i in range(12)) + "\n"
        rewrite = "\n".join(f"new_line_{i} = {i + 50}" for i in range(5)) + "\n"
        volume = code_diff(original, rewrite)
        assert volume.abs == 17
        assert volume.per == pytest.approx(1700 / 12)
        assert volume.per > 100.0 and volume.abs < 20
        appended = original + "\n".join(f"tail_{i} = {i}" for i in range(4)) + "\n"
        grown = code_diff(original, appended)
        assert (grown.per, grown.abs) == (pytest.approx(100 * 4 / 12), 4)


# -- criterion: sandbox containment --


def test_sandbox_containment(tmp_path, monkeypatch):
    with criterion("sandbox-containment", budget_seconds=60.0):
        timeout_job = SandboxJob(
            source="while True:\n    pass\n", tests=("assert True",), timeout=1.0
        )
        verdict = run_candidate(timeout_job)
        assert verdict.status == VerdictStatus.TIMEOUT
        assert verdict.wall_time <= timeout_job.timeout + 1.0

        bomb = SandboxJob(
            source="chunks = []\nwhile True:\n    chunks.append(bytearray(32 * 1024 * 1024))\n",
            tests=("assert True",),
            timeout=20.0,
            memory_cap=256 * 1024 * 1024,
        )
        verdict = run_candidate(bomb)  # the host must survive to classify it
        assert verdict.status in (VerdictStatus.RUNTIME_ERROR, VerdictStatus.TIMEOUT)

        monkeypatch.chdir(tmp_path)
        writer = SandboxJob(
            source=(
                "import pathlib, tempfile, os\n"
                "pathlib.Path('trace.txt').write_text('x')\n"
                "pathlib.Path(tempfile.gettempdir(), 'trace2.txt').write_text('x')\n"
                "def f():\n    return 1\n"
            ),
            tests=("assert f() == 1",),
        )
        assert run_candidate(writer).status == VerdictStatus.PASS
        assert list(tmp_path.iterdir()) == []


# -- criterion: pipeline cap enforcement --


def _adversarial_script(request):
    stage = request.tag.split("/")[-2]
    if stage == AgentStage.REQUIREMENTS_ANALYSIS.value:
        return "analysis"
    if stage == AgentStage.PATTERN_SELECTION.value:
        return '{"modules": [{"name": "core", "main_pattern": "Strategy"}]}'
    if stage == AgentStage.FRAMEWORK_DESIGN.value:
        return "Class structure\n- Core\nDependencies\n- none"
    if stage == AgentStage.FRAMEWORK_EVALUATION.value:
        return "REVISION REQUIRED: always unhappy"
    if stage == AgentStage.CODE_GENERATION.value:
        return "```python\ndef add_nums(a, b):\n    return a - b\n```"
    if stage == AgentStage.CODE_OPTIMIZATION.value:
        return "```python\ndef add_nums(a, b):\n    return a - b\n```"
    raise AssertionError(stage)


def _in_process_sandbox(job):
    namespace: dict = {}
    try:
        exec(job.source, namespace)
        for test in job.tests:
            exec(test, namespace)
    except AssertionError:
        return SandboxVerdict(status=VerdictStatus.ASSERTION_FAIL, failed_index=0)
    except Exception as exc:
        return SandboxVerdict(status=VerdictStatus.RUNTIME_ERROR, failed_index=0, stderr_excerpt=str(exc))
    return SandboxVerdict(status=VerdictStatus.PASS)


def test_pipeline_cap_enforcement():
    with criterion("pipeline-cap-enforcement", budget_seconds=10.0):
        transport = ScriptedTransport(_adversarial_script)
        pipeline = GenerationPipeline(
            LlmGateway(transport=transport), run_sandbox=_in_process_sandbox, clock=lambda: 0.0
        )
        config = PipelineConfig(interface_name="add_nums", seed_test="assert add_nums(1, 2) == 3")
        result = pipeline.run(make_problem(), config, run_id="caps")
        assert result.transcript.loop_counts[AgentStage.FRAMEWORK_EVALUATION.value] == 3
        assert result.transcript.loop_counts[AgentStage.CODE_OPTIMIZATION.value] == 5
        assert len(result.transcript.events) == transport.calls
        parse_source(result.code)  # output always parses...
        assert result.optimization_exhausted is True

        def garbage_patterns(request):
            stage = request.tag.split("/")[-2]
            if stage == AgentStage.PATTERN_SELECTION.value:
                return "utterly unparseable"
            return _adversarial_script(request)

        transport2 = ScriptedTransport(garbage_patterns)
        pipeline2 = GenerationPipeline(
            LlmGateway(transport=transport2), run_sandbox=_in_process_sandbox, clock=lambda: 0.0
        )
        with pytest.raises(StageError):  # ...or the run ends in a stage error
            pipeline2.run(make_problem(), config, run_id="caps2")


# -- criterion: replay determinism --

TABLE_COLUMNS = [
    "strategy",
    "model",
    "mi",
    "cc",
    "pass_at_5",
    "ast_sim",
    "code_diff_per",
    "code_diff_abs",
]


def _replay_flow(replay_dir: Path, run_dir: Path) -> None:
    dataset = load_dataset(replay_dir / "dataset.jsonl")
    gateway = LlmGateway(
        cassette=Cassette(replay_dir / "cassette.jsonl", mode=CassetteMode.REPLAY)
    )
    store = RunStore(run_dir)
    manifest = RunManifest(
        run_id="replay-fixture",
        dataset_name="fixture3",
        strategy_kind=GeneratorKind.DIRECT.value,
        strategy_model="stub-model",
        probe_model="stub-probe",
        samples=5,
        k_values=(5,),
        gamma=1.0,
        created_at=0.0,
        cassette="cassette.jsonl",
    )
    phase1(
        dataset,
        GeneratorStrategy(kind=GeneratorKind.DIRECT, model_id="stub-model"),
        manifest,
        gateway,
        store,
        clock=lambda: 0.0,
    )
    run_phase2(dataset, store, gateway)
    write_report(store, aggregate_report(store))


def _snapshot(root: Path) -> dict[str, bytes]:
    return {
        str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()
    }


def test_replay_determinism(tmp_path, replay_dir):
    with criterion("replay-determinism", budget_seconds=30.0):
        first_dir, second_dir = tmp_path / "one", tmp_path / "two"
        _replay_flow(replay_dir, first_dir)
        _replay_flow(replay_dir, second_dir)
        first, second = _snapshot(first_dir), _snapshot(second_dir)
        assert first.keys() == second.keys()
        assert first == second
        header = (first_dir / "report.csv").read_text(encoding="utf-8").splitlines()[0]
        assert header.split(",") == TABLE_COLUMNS


# -- criterion: benchgen postcondition --

EXT_SOLUTION = (
    "def add_nums(a, b):\n    return a + b\n\n"
    "def add_triple(a, b, c):\n    return add_nums(add_nums(a, b), c)\n"
)
EXT_TESTS = [
    "assert add_triple(1, 2, 3) == 6",
    "assert add_triple(0, 0, 0) == 0",
    "assert add_triple(-1, 1, 2) == 2",
    "assert add_triple(5, 5, 5) == 15",
    "assert add_triple(2, 3, 4) == 9",
]
ERR_SOLUTION = (
    "def add_nums(a, b):\n    return a + b\n\n"
    "def safe_add(a, b):\n"
    "    try:\n"
    "        return add_nums(int(a), int(b))\n"
    "    except (TypeError, ValueError):\n"
    "        return None\n"
)
ERR_TESTS = [
    "assert safe_add(1, 2) == 3",
    "assert safe_add('x', 1) is None",
    "assert safe_add('4', '5') == 9",
    "assert safe_add(None, 3) is None",
    "assert safe_add(2, '2') == 4",
]
CALM_TESTS = [f"assert safe_add({i}, {i}) == {2 * i}" for i in range(1, 6)]


def _candidate(solution: str, tests: list[str], pattern: ChangePattern) -> CandidateVariant:
    return CandidateVariant(
        parent_id="p1",
        pattern=pattern,
        raw_response="",
        parsed={
            "prompt_type": pattern.value,
            "input_format": "numbers",
            "output_format": "a number",
            "new_problem": "Evolved problem.",
            "new_solution": solution,
            "test_input": list(tests),
        },
    )


def test_benchgen_postcondition():
    with criterion("benchgen-postcondition", budget_seconds=30.0):
        parent = make_problem()

        finalized = co_evolve(_candidate(EXT_SOLUTION, EXT_TESTS, ChangePattern.EXTENSION))
        assert finalized.variant is not None
        gate = quality_gate(finalized.variant, parent)
        checks = {c.name: c for c in gate.checks}
        assert checks["solution_passes_tests"].passed  # re-asserted hard postcondition
        assert checks["self_invoking"].passed

        lone = "def add_triple(a, b, c):\n    return a + b + c\n"
        negative = co_evolve(_candidate(lone, EXT_TESTS, ChangePattern.EXTENSION))
        gate = quality_gate(negative.variant, parent)
        assert not {c.name: c for c in gate.checks}["self_invoking"].passed

        err_ok = co_evolve(_candidate(ERR_SOLUTION, ERR_TESTS, ChangePattern.ERROR_HANDLING))
        gate = quality_gate(err_ok.variant, parent)
        assert {c.name: c for c in gate.checks}["error_path_exercised"].passed

        err_calm = co_evolve(_candidate(ERR_SOLUTION, CALM_TESTS, ChangePattern.ERROR_HANDLING))
        gate = quality_gate(err_calm.variant, parent)
        assert not {c.name: c for c in gate.checks}["error_path_exercised"].passed

        broken = _candidate("def add_triple(a, b, c):\n    return 0\n", EXT_TESTS, ChangePattern.EXTENSION)
        hopeless = LlmGateway(transport=ScriptedTransport(lambda r: "no json here"))
        result = co_evolve(broken, cap=3, gateway=hopeless, model_id="m")
        assert result.needs_review
        record = review_record(broken, result)
        assert len(record["failures"]) == 3
        assert record["final_status"] == "assertion_fail"
        assert all("status" in f and "round" in f for f in record["failures"])


# -- criterion [SECONDARY]: runner protocol round-trip --


def _raw_runner_record(source: str, tests: list[str]) -> dict:
    proc = subprocess.run(
        [sys.executable, "-I", "-m", "assertrunner"],
        input=json.dumps({"source": source, "tests": tests, "interface_name": "f"}),
        capture_output=True,
        text=True,
        timeout=30,
    )
    assert proc.returncode == 0, proc.stderr
    return json.loads(proc.stdout.strip())


def test_runner_protocol_round_trip():
    with criterion("runner-protocol-round-trip", budget_seconds=10.0):
        record = _raw_runner_record("def f(x):\n    return x\n", ["assert f(1) == 1"])
        assert record == {"ok": True}
        assert classify_outcome(record).status == VerdictStatus.PASS

        record = _raw_runner_record(
            "def f(x):\n    return x\n",
            ["assert f(0) == 0", "assert f(1) == 1", "assert f(2) == 99"],
        )
        assert record["error"] == "AssertionError" and record["test"] == 2
        verdict = classify_outcome(record)
        assert verdict.status == VerdictStatus.ASSERTION_FAIL and verdict.failed_index == 2

        record = _raw_runner_record(
            "def f(x):\n    return x\n",
            ["assert f(0) == 0", "assert f(1) == 1", "assert f(2) == 2", "assert f(1) / 0 == 1"],
        )
        assert record["error"] == "ZeroDivisionError" and record["test"] == 3
        verdict = classify_outcome(record)
        assert verdict.status == VerdictStatus.RUNTIME_ERROR and verdict.failed_index == 3

        record = _raw_runner_record("def f(:", ["assert True"])
        assert record["error"] == "SyntaxError" and record["test"] == -1
        assert classify_outcome(record).status == VerdictStatus.SYNTAX_ERROR

        fresh_source = (
            "try:\n"
            "    counter += 1\n"
            "except NameError:\n"
            "    counter = 1\n"
        )
        for _ in range(2):  # state must never leak between jobs
            record = _raw_runner_record(fresh_source, ["assert counter == 1"])
            assert record == {"ok": True}
