"""Benchmark corpus: problems, requirement-change variants, JSONL ingestion.

Dataset files are UTF-8 line-delimited JSON. A variant record carries the
builder's response fields plus the parent problem's raw fields::

    {"id": ..., "raw_problem": ..., "raw_solution": ..., "raw_test_input": [...],
     "prompt_type": ..., "input_format": ..., "output_format": ...,
     "new_problem": ..., "new_solution": ..., "test_input": [...]}

A record without any of the new-* fields is a parent-only record; it may
additionally carry "level", "source_benchmark" and "interface_name".
Parents referenced by several variant records are registered once and
cross-checked for consistency. Datasets are immutable after load and safe
to share across concurrent readers.
"""

from __future__ import annotations

import ast
import builtins
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .errors import AmbiguityError, AssertionParseError, SchemaError

MIN_VARIANT_TESTS = 5

_BUILTIN_NAMES = frozenset(dir(builtins))


class ChangePattern(Enum):
    """The four requirement-change patterns; values are the serialized tags."""

    EXTENSION = "PROMPT_SELF_INVOKING"
    INTERFACE = "PROMPT_INTERFACE"
    DATA_STRUCTURE = "PROMPT_DATA_STRUCTURE"
    ERROR_HANDLING = "PROMPT_ERROR_HANDLING"

    @property
    def slug(self) -> str:
        return self.name.lower()

    @classmethod
    def from_slug(cls, slug: str) -> "ChangePattern":
        for member in cls:
            if member.slug == slug.lower():
                return member
        raise SchemaError(f"unknown change pattern: {slug}")


class Level(str, Enum):
    ENTRY = "entry"
    MIXTURE = "mixture"
    COMPETITION = "competition"


@dataclass(frozen=True)
class Problem:
    id: str
    statement: str
    solution: str
    tests: tuple[str, ...]
    interface_name: str
    level: Level = Level.ENTRY
    source_benchmark: str = ""


@dataclass(frozen=True)
class ProblemVariant:
    parent_id: str
    pattern: ChangePattern
    statement: str
    solution: str
    tests: tuple[str, ...]
    input_format: str = ""
    output_format: str = ""


@dataclass(frozen=True)
class Dataset:
    name: str
    problems: tuple[Problem, ...] = ()
    variants: tuple[ProblemVariant, ...] = ()

    def problem_by_id(self, problem_id: str) -> Problem:
        for problem in self.problems:
            if problem.id == problem_id:
                return problem
        raise KeyError(problem_id)

    def pattern_coverage(self) -> dict[str, set[ChangePattern]]:
        """Patterns present per parent; parents may cover any subset."""
        coverage: dict[str, set[ChangePattern]] = {p.id: set() for p in self.problems}
        for variant in self.variants:
            coverage[variant.parent_id].add(variant.pattern)
        return coverage


def assert_statements(tests: Iterable[str], line_no: int | None = None) -> tuple[str, ...]:
    """Validate that every test string is a single assert statement."""
    checked = []
    for test in tests:
        if not isinstance(test, str):
            raise AssertionParseError(f"test is not a string: {test!r}", line_no=line_no)
        try:
            module = ast.parse(test)
        except SyntaxError as exc:
            raise AssertionParseError(
                f"test does not parse: {test!r} ({exc})", line_no=line_no
            ) from exc
        if len(module.body) != 1 or not isinstance(module.body[0], ast.Assert):
            raise AssertionParseError(
                f"test is not a single assertion statement: {test!r}", line_no=line_no
            )
        checked.append(test)
    return tuple(checked)


def interface_name_for_tests(tests: Iterable[str]) -> str:
    """The single non-builtin function name called by every test."""
    common: set[str] | None = None
    for test in tests:
        called = {
            node.func.id
            for node in ast.walk(ast.parse(test))
            if isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
        } - _BUILTIN_NAMES
        common = called if common is None else common & called
    if common is None:
        raise AmbiguityError("no tests to derive an interface name from")
    if len(common) != 1:
        raise AmbiguityError(
            f"tests do not agree on a single interface function: {sorted(common)}"
        )
    return next(iter(common))


def derive_interface_name(problem: Problem) -> str:
    return interface_name_for_tests(problem.tests)


def validate_record(record: Mapping, line_no: int | None = None) -> Problem | ProblemVariant:
    """Validate one raw record map into its domain type."""
    if not isinstance(record, Mapping):
        raise SchemaError("record is not an object", line_no=line_no)
    if any(key in record for key in ("prompt_type", "new_problem", "new_solution", "test_input")):
        return _variant_from_record(record, line_no)
    return problem_from_record(record, line_no)


def problem_from_record(record: Mapping, line_no: int | None = None) -> Problem:
    problem_id = _required_str(record, "id", line_no)
    statement = _required_str(record, "raw_problem", line_no)
    solution = _required_str(record, "raw_solution", line_no)
    tests = assert_statements(_test_list(record, "raw_test_input", line_no), line_no)
    if not tests:
        raise SchemaError("problem needs at least one test", line_no=line_no, field="raw_test_input")
    try:
        derived = interface_name_for_tests(tests)
    except AmbiguityError as exc:
        raise SchemaError(str(exc), line_no=line_no, field="raw_test_input") from exc
    interface = record.get("interface_name", derived)
    if interface != derived:
        raise SchemaError(
            f"declared interface {interface!r} is not called by every test",
            line_no=line_no,
            field="interface_name",
        )
    level_raw = record.get("level", Level.ENTRY.value)
    try:
        level = Level(level_raw)
    except ValueError as exc:
        raise SchemaError(f"unknown level: {level_raw!r}", line_no=line_no, field="level") from exc
    return Problem(
        id=problem_id,
        statement=statement,
        solution=solution,
        tests=tests,
        interface_name=interface,
        level=level,
        source_benchmark=record.get("source_benchmark", ""),
    )


def _variant_from_record(record: Mapping, line_no: int | None) -> ProblemVariant:
    tag = _required_str(record, "prompt_type", line_no)
    try:
        pattern = ChangePattern(tag)
    except ValueError as exc:
        raise SchemaError(
            f"unknown prompt_type: {tag!r}", line_no=line_no, field="prompt_type"
        ) from exc
    tests = assert_statements(_test_list(record, "test_input", line_no), line_no)
    if len(tests) < MIN_VARIANT_TESTS:
        raise SchemaError(
            f"variant needs at least {MIN_VARIANT_TESTS} test assertions, got {len(tests)}",
            line_no=line_no,
            field="test_input",
        )
    return ProblemVariant(
        parent_id=_required_str(record, "id", line_no),
        pattern=pattern,
        statement=_required_str(record, "new_problem", line_no),
        solution=_required_str(record, "new_solution", line_no),
        tests=tests,
        input_format=_required_str(record, "input_format", line_no),
        output_format=_required_str(record, "output_format", line_no),
    )


def load_dataset(path: str | Path) -> Dataset:
    """Load a line-delimited dataset file; order-preserving."""
    path = Path(path)
    problems: dict[str, Problem] = {}
    variants: list[ProblemVariant] = []
    seen_pairs: set[tuple[str, ChangePattern]] = set()
    with path.open(encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON: {exc}", line_no=line_no) from exc
            item = validate_record(record, line_no)
            if isinstance(item, ProblemVariant):
                parent = problem_from_record(record, line_no)
                _register_parent(problems, parent, line_no)
                pair = (item.parent_id, item.pattern)
                if pair in seen_pairs:
                    raise SchemaError(
                        f"duplicate (parent, pattern) pair: {item.parent_id}/{item.pattern.value}",
                        line_no=line_no,
                    )
                seen_pairs.add(pair)
                variants.append(item)
            else:
                _register_parent(problems, item, line_no)
    return Dataset(name=path.stem, problems=tuple(problems.values()), variants=tuple(variants))


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write the dataset back out; load(save(d)) == d."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        for problem in dataset.problems:
            handle.write(json.dumps(_problem_record(problem), sort_keys=True) + "\n")
        for variant in dataset.variants:
            parent = dataset.problem_by_id(variant.parent_id)
            handle.write(json.dumps(variant_record(variant, parent), sort_keys=True) + "\n")


def variant_record(variant: ProblemVariant, parent: Problem) -> dict:
    """One JSONL record for a variant, embedding the parent's raw fields."""
    record = _problem_record(parent)
    record.update(
        {
            "prompt_type": variant.pattern.value,
            "input_format": variant.input_format,
            "output_format": variant.output_format,
            "new_problem": variant.statement,
            "new_solution": variant.solution,
            "test_input": list(variant.tests),
        }
    )
    return record


def iter_variants(
    dataset: Dataset, patterns: Iterable[ChangePattern] | None = None
) -> Iterator[tuple[Problem, ProblemVariant]]:
    """Yield (parent, variant) pairs whose pattern is selected, in file order."""
    wanted = set(ChangePattern) if patterns is None else set(patterns)
    for variant in dataset.variants:
        if variant.pattern in wanted:
            yield dataset.problem_by_id(variant.parent_id), variant


def _problem_record(problem: Problem) -> dict:
    return {
        "id": problem.id,
        "level": problem.level.value,
        "source_benchmark": problem.source_benchmark,
        "interface_name": problem.interface_name,
        "raw_problem": problem.statement,
        "raw_solution": problem.solution,
        "raw_test_input": list(problem.tests),
    }


def _register_parent(problems: dict[str, Problem], parent: Problem, line_no: int) -> None:
    existing = problems.get(parent.id)
    if existing is None:
        problems[parent.id] = parent
        return
    if (
        existing.statement != parent.statement
        or existing.solution != parent.solution
        or existing.tests != parent.tests
    ):
        raise SchemaError(
            f"records disagree on parent problem {parent.id!r}", line_no=line_no, field="id"
        )


def _required_str(record: Mapping, key: str, line_no: int | None) -> str:
    value = record.get(key)
    if not isinstance(value, str) or not value.strip():
        raise SchemaError(f"missing or empty field {key!r}", line_no=line_no, field=key)
    return value


def _test_list(record: Mapping, key: str, line_no: int | None) -> list:
    value = record.get(key)
    if isinstance(value, str):
        # Builders sometimes hand the list back as its printed form.
        try:
            value = json.loads(value)
        except json.JSONDecodeError:
            try:
                value = ast.literal_eval(value)
            except (ValueError, SyntaxError):
                value = None
    if not isinstance(value, list):
        raise SchemaError(f"field {key!r} must be a list of assertions", line_no=line_no, field=key)
    return value
