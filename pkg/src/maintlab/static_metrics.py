"""Static maintainability metrics over parser artifacts.

Decision points counted toward cyclomatic complexity (one per occurrence
unless noted):

- ``if`` / ``elif``
- ``for`` (including ``async for``)
- ``while``
- ``except`` handler
- conditional expression (ternary)
- ``assert``
- each ``if`` clause of a comprehension
- each ``match`` arm beyond the first
- each boolean operator (``and``/``or``) occurrence inside a condition,
  i.e. within the test expression of one of the constructs above

A block is a function or method definition; a block's score is
1 + its decision points, nested definitions excluded. The module-level
score is the arithmetic mean over blocks, the whole module counting as a
single block only when no function exists.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass

from .errors import DomainError
from .parsing import SyntaxTree, TokenCensus, line_census, parse_source, token_census


@dataclass(frozen=True)
class StaticReport:
    halstead_volume: float
    cyclomatic_complexity: float
    sloc: int
    comment_ratio: float
    maintainability_index: float

    def to_dict(self) -> dict:
        return {
            "halstead_volume": self.halstead_volume,
            "cyclomatic_complexity": self.cyclomatic_complexity,
            "sloc": self.sloc,
            "comment_ratio": self.comment_ratio,
            "maintainability_index": self.maintainability_index,
        }


def halstead_volume(census: TokenCensus) -> float:
    """V = N * log2(eta); 0 for empty or single-symbol vocabularies."""
    n_total = census.total_operators + census.total_operands
    vocabulary = census.distinct_operators + census.distinct_operands
    if n_total == 0 or vocabulary <= 1:
        return 0.0
    return n_total * math.log2(vocabulary)


def cyclomatic_blocks(tree: SyntaxTree) -> list[tuple[str, int]]:
    """Per-block cyclomatic complexity as (block name, score) pairs."""
    module = tree.py_ast
    if module is None:
        raise DomainError("tree carries no underlying grammar module")
    functions = [
        node
        for node in ast.walk(module)
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef))
    ]
    if not functions:
        return [("<module>", 1 + _count_decisions(module, is_root=True))]
    return [(fn.name, 1 + _count_decisions(fn, is_root=True)) for fn in functions]


def cyclomatic_complexity(tree: SyntaxTree) -> float:
    """Mean cyclomatic complexity over the tree's blocks."""
    blocks = cyclomatic_blocks(tree)
    return sum(score for _, score in blocks) / len(blocks)


def maintainability_index(v: float, g: float, l: int, c: float) -> float:
    """Composite maintainability score on a 0-100 scale.

    max(0, 100 * (171 - 5.2*ln(max(V,1)) - 0.23*G - 16.2*ln(L)
    + 50*sin(sqrt(2.4*C))) / 171), additionally capped at 100 so the
    comment bonus cannot push the score past the scale.
    """
    if l == 0:
        raise DomainError("maintainability index undefined for zero source lines")
    if l < 0 or v < 0 or not 0.0 <= c <= 1.0:
        raise DomainError("V must be >= 0, L >= 1 and C within [0, 1]")
    raw = 171.0 - 5.2 * math.log(max(v, 1.0)) - 0.23 * g - 16.2 * math.log(l)
    raw += 50.0 * math.sin(math.sqrt(2.4 * c))
    return max(0.0, min(100.0, 100.0 * raw / 171.0))


def static_report(source: str) -> StaticReport:
    """Compute the full static report for one source unit."""
    tree = parse_source(source)
    census = token_census(source)
    lines = line_census(source)
    if lines.sloc == 0:
        raise DomainError("no source lines to measure")
    meaningful = lines.sloc + lines.comment_lines
    comment_ratio = lines.comment_lines / meaningful if meaningful else 0.0
    volume = halstead_volume(census)
    complexity = cyclomatic_complexity(tree)
    return StaticReport(
        halstead_volume=volume,
        cyclomatic_complexity=complexity,
        sloc=lines.sloc,
        comment_ratio=comment_ratio,
        maintainability_index=maintainability_index(
            volume, complexity, lines.sloc, comment_ratio
        ),
    )


def _count_decisions(root: ast.AST, is_root: bool = False) -> int:
    """Decision points in ``root``'s block, nested definitions excluded."""
    count = 0

    def visit(node: ast.AST, in_condition: bool) -> None:
        nonlocal count
        if node is not root and isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
            return  # nested block, counted separately
        if isinstance(node, (ast.If, ast.While)):
            count += 1
            visit(node.test, True)
            for child in node.body + node.orelse:
                visit(child, False)
            return
        if isinstance(node, ast.IfExp):
            count += 1
            visit(node.test, True)
            visit(node.body, in_condition)
            visit(node.orelse, in_condition)
            return
        if isinstance(node, (ast.For, ast.AsyncFor)):
            count += 1
        elif isinstance(node, ast.ExceptHandler):
            count += 1
        elif isinstance(node, ast.Assert):
            count += 1
            visit(node.test, True)
            if node.msg is not None:
                visit(node.msg, False)
            return
        elif isinstance(node, ast.comprehension):
            count += len(node.ifs)
            visit(node.target, False)
            visit(node.iter, False)
            for clause in node.ifs:
                visit(clause, True)
            return
        elif isinstance(node, ast.Match):
            count += max(0, len(node.cases) - 1)
        elif isinstance(node, ast.BoolOp) and in_condition:
            count += len(node.values) - 1
        for child in ast.iter_child_nodes(node):
            visit(child, in_condition)

    visit(root, False)
    return count
