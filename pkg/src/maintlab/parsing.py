"""Source parsing artifacts for the metric modules.

Everything downstream (static and dynamic metrics) consumes only the
artifacts produced here: a :class:`SyntaxTree` of kind-labeled nodes, a
:class:`TokenCensus` of operator/operand counts, and a :class:`LineCensus`.
An alternative grammar can be supported by producing these same artifacts;
no metric code refers to the underlying parser.

Token classification table (operators vs operands), as used by
:func:`token_census`:

==============================  =========================================
operators                       every punctuation/operator token, counted
                                by its text (``=``, ``+``, ``:``, ``.``,
                                ``->``, ...); paired brackets count as ONE
                                occurrence per pair, named ``()``, ``[]``
                                and ``{}``; keywords that govern control or
                                binding (``if``, ``for``, ``def``,
                                ``return``, ``and``, ``not``, ...)
operands                        identifiers, attribute names, and literals
                                (numbers, strings, ``True``/``False``/
                                ``None``); soft keywords are identifiers
ignored                         comments, newlines, indentation, encoding
                                markers
==============================  =========================================
"""

from __future__ import annotations

import ast
import io
import keyword
import tokenize
from dataclasses import dataclass, field

from .errors import SourceSyntaxError

#: Node kinds excluded from trees and kind sequences: expression-context
#: markers carry no source-visible structure.
_CONTEXT_KINDS = frozenset({"Load", "Store", "Del"})

#: The published grammar-kind vocabulary: every concrete node class of the
#: supported grammar except the excluded context markers.
NODE_KINDS: tuple[str, ...] = tuple(
    sorted(
        name
        for name, obj in vars(ast).items()
        if isinstance(obj, type) and issubclass(obj, ast.AST) and name not in _CONTEXT_KINDS
    )
)

#: Keyword tokens classified as literal operands rather than operators.
_LITERAL_KEYWORDS = frozenset({"True", "False", "None"})

_OPEN_TO_PAIR = {"(": "()", "[": "[]", "{": "{}"}
_CLOSE_TO_OPEN = {")": "(", "]": "[", "}": "{"}


@dataclass(frozen=True)
class Node:
    """One syntax-tree node: a grammar kind with ordered children.

    ``span`` is a half-open byte range into the UTF-8 encoding of the
    source; synthetic leaves without a source extent (operator kinds such
    as ``Add``) carry ``span=None``.
    """

    kind: str
    children: tuple["Node", ...] = ()
    span: tuple[int, int] | None = None


@dataclass(frozen=True)
class SyntaxTree:
    root: Node
    source_span: tuple[int, int]
    #: Underlying grammar module, kept for block-level metric traversal.
    #: Excluded from equality so structural comparison stays by kind/span.
    py_ast: ast.Module | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class TokenCensus:
    """Halstead token counts: distinct/total operators and operands."""

    distinct_operators: int = 0
    total_operators: int = 0
    distinct_operands: int = 0
    total_operands: int = 0


@dataclass(frozen=True)
class LineCensus:
    sloc: int = 0
    comment_lines: int = 0
    total_lines: int = 0


def parse_source(source: str) -> SyntaxTree:
    """Parse subject-language source into a :class:`SyntaxTree`.

    Raises :class:`SourceSyntaxError` (with line/col) on invalid source;
    the sandbox maps the same failure class to its syntax_error verdict.
    """
    try:
        module = ast.parse(source)
    except SyntaxError as exc:
        raise SourceSyntaxError(str(exc), line=exc.lineno, col=exc.offset) from exc
    line_starts = _line_byte_starts(source)
    root = _convert(module, line_starts)
    end = line_starts[-1]
    return SyntaxTree(root=root, source_span=(0, end), py_ast=module)


def node_kind_sequence(tree: SyntaxTree) -> list[str]:
    """Preorder list of node kinds; identifier and literal text never appears."""
    out: list[str] = []
    stack = [tree.root]
    while stack:
        node = stack.pop()
        out.append(node.kind)
        stack.extend(reversed(node.children))
    return out


def token_census(source: str) -> TokenCensus:
    """Count operators and operands per the classification table above."""
    parse_source(source)  # enforce the parse precondition
    operators: dict[str, int] = {}
    operands: dict[str, int] = {}
    bracket_stack: list[str] = []
    for tok in _tokens(source):
        if tok.type == tokenize.NAME:
            if keyword.iskeyword(tok.string) and tok.string not in _LITERAL_KEYWORDS:
                operators[tok.string] = operators.get(tok.string, 0) + 1
            else:
                operands[tok.string] = operands.get(tok.string, 0) + 1
        elif tok.type in (tokenize.NUMBER, tokenize.STRING):
            operands[tok.string] = operands.get(tok.string, 0) + 1
        elif tok.type == tokenize.OP:
            if tok.string in _OPEN_TO_PAIR:
                bracket_stack.append(tok.string)
            elif tok.string in _CLOSE_TO_OPEN:
                if bracket_stack and bracket_stack[-1] == _CLOSE_TO_OPEN[tok.string]:
                    opener = bracket_stack.pop()
                    pair = _OPEN_TO_PAIR[opener]
                    operators[pair] = operators.get(pair, 0) + 1
                else:  # unreachable for parsed source; count the stray token
                    operators[tok.string] = operators.get(tok.string, 0) + 1
            else:
                operators[tok.string] = operators.get(tok.string, 0) + 1
    return TokenCensus(
        distinct_operators=len(operators),
        total_operators=sum(operators.values()),
        distinct_operands=len(operands),
        total_operands=sum(operands.values()),
    )


def line_census(source: str) -> LineCensus:
    """Count source lines, comment lines, and total lines.

    A line is a comment line when its first non-blank character starts a
    comment, or when it belongs to a docstring and carries no other code
    (docstrings count as comments for the maintainability comment ratio).
    sloc is every remaining non-blank line.
    """
    lines = source.splitlines()
    total = len(lines)
    if total == 0:
        return LineCensus()

    doc_rows: set[int] = set()
    doc_positions: set[tuple[int, int]] = set()
    try:
        module = ast.parse(source)
    except SyntaxError:
        module = None
    if module is not None:
        for doc_expr in _docstring_exprs(module):
            const = doc_expr.value
            doc_positions.add((const.lineno, const.col_offset))
            doc_rows.update(range(const.lineno, (const.end_lineno or const.lineno) + 1))

    code_rows: set[int] = set()
    if module is not None:
        for tok in _tokens(source):
            if tok.type in (tokenize.NAME, tokenize.NUMBER, tokenize.OP) or (
                tok.type == tokenize.STRING and tok.start not in doc_positions
            ):
                code_rows.add(tok.start[0])

    sloc = 0
    comments = 0
    for idx, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            comments += 1
        elif idx in doc_rows and idx not in code_rows:
            comments += 1
        else:
            sloc += 1
    return LineCensus(sloc=sloc, comment_lines=comments, total_lines=total)


def _tokens(source: str):
    return tokenize.generate_tokens(io.StringIO(source).readline)


def _docstring_exprs(module: ast.Module):
    for node in ast.walk(module):
        if not isinstance(node, (ast.Module, ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
            continue
        body = node.body
        if (
            body
            and isinstance(body[0], ast.Expr)
            and isinstance(body[0].value, ast.Constant)
            and isinstance(body[0].value.value, str)
        ):
            yield body[0]


def _line_byte_starts(source: str) -> list[int]:
    """Byte offset of each line start in the UTF-8 encoding, plus the end."""
    starts = [0]
    for line in source.splitlines(keepends=True):
        starts.append(starts[-1] + len(line.encode("utf-8")))
    return starts


def _convert(node: ast.AST, line_starts: list[int]) -> Node:
    children = tuple(
        _convert(child, line_starts)
        for child in ast.iter_child_nodes(node)
        if type(child).__name__ not in _CONTEXT_KINDS
    )
    span = _own_span(node, line_starts)
    child_spans = [c.span for c in children if c.span is not None]
    if child_spans:
        lo = min(s[0] for s in child_spans)
        hi = max(s[1] for s in child_spans)
        span = (min(span[0], lo), max(span[1], hi)) if span else (lo, hi)
    return Node(kind=type(node).__name__, children=children, span=span)


def _own_span(node: ast.AST, line_starts: list[int]) -> tuple[int, int] | None:
    lineno = getattr(node, "lineno", None)
    end_lineno = getattr(node, "end_lineno", None)
    if lineno is None or end_lineno is None:
        return None
    start = line_starts[lineno - 1] + node.col_offset
    end = line_starts[end_lineno - 1] + node.end_col_offset
    return (start, end)
