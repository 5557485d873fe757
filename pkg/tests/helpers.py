"""Shared test utilities: scripted transports, identifier renaming, and an
independent matching-block reference for similarity oracles."""

from __future__ import annotations

import ast
from typing import Callable

from maintlab.corpus import Level, Problem
from maintlab.gateway import ChatRequest


class ScriptedTransport:
    """Transport stub dispatching on the request; counts every call."""

    def __init__(self, script: Callable[[ChatRequest], str]):
        self.script = script
        self.requests: list[ChatRequest] = []

    def __call__(self, request: ChatRequest) -> str:
        self.requests.append(request)
        return self.script(request)

    @property
    def calls(self) -> int:
        return len(self.requests)


def make_problem(
    problem_id: str = "p1",
    statement: str = "Write a function add_nums(a, b) returning the sum of two integers.",
    solution: str = "def add_nums(a, b):\n    return a + b\n",
    tests: tuple[str, ...] = (
        "assert add_nums(1, 2) == 3",
        "assert add_nums(0, 0) == 0",
        "assert add_nums(-1, 1) == 0",
    ),
    interface_name: str = "add_nums",
) -> Problem:
    return Problem(
        id=problem_id,
        statement=statement,
        solution=solution,
        tests=tests,
        interface_name=interface_name,
        level=Level.ENTRY,
    )


class _Renamer(ast.NodeTransformer):
    def __init__(self, suffix: str = "_rn"):
        self.suffix = suffix

    def _new(self, name: str) -> str:
        return name + self.suffix

    def visit_Name(self, node):
        self.generic_visit(node)
        return ast.copy_location(ast.Name(id=self._new(node.id), ctx=node.ctx), node)

    def visit_arg(self, node):
        self.generic_visit(node)
        node.arg = self._new(node.arg)
        return node

    def visit_FunctionDef(self, node):
        self.generic_visit(node)
        node.name = self._new(node.name)
        return node

    def visit_AsyncFunctionDef(self, node):
        self.generic_visit(node)
        node.name = self._new(node.name)
        return node

    def visit_ClassDef(self, node):
        self.generic_visit(node)
        node.name = self._new(node.name)
        return node

    def visit_Global(self, node):
        node.names = [self._new(n) for n in node.names]
        return node

    def visit_Nonlocal(self, node):
        node.names = [self._new(n) for n in node.names]
        return node

    def visit_keyword(self, node):
        self.generic_visit(node)
        if node.arg is not None:
            node.arg = self._new(node.arg)
        return node


def rename_identifiers(source: str, suffix: str = "_rn") -> str:
    """Bijective alpha-rename of every identifier, via unparse."""
    tree = _Renamer(suffix).visit(ast.parse(source))
    ast.fix_missing_locations(tree)
    return ast.unparse(tree)


def normalize_source(source: str) -> str:
    """unparse(parse(source)): the formatting baseline rename compares to."""
    return ast.unparse(ast.parse(source))


def reference_ratio(a, b) -> float:
    """Independent recursive matching-block Ratcliff/Obershelp ratio."""
    total = len(a) + len(b)
    if total == 0:
        return 1.0
    return 2.0 * _match_total(a, b, 0, len(a), 0, len(b)) / total


def _match_total(a, b, alo, ahi, blo, bhi) -> int:
    i, j, size = _longest_match(a, b, alo, ahi, blo, bhi)
    if size == 0:
        return 0
    return (
        size
        + _match_total(a, b, alo, i, blo, j)
        + _match_total(a, b, i + size, ahi, j + size, bhi)
    )


def _longest_match(a, b, alo, ahi, blo, bhi):
    best_i, best_j, best_size = alo, blo, 0
    for i in range(alo, ahi):
        if ahi - i <= best_size:
            break
        for j in range(blo, bhi):
            size = 0
            while i + size < ahi and j + size < bhi and a[i + size] == b[j + size]:
                size += 1
            if size > best_size:
                best_i, best_j, best_size = i, j, size
    return best_i, best_j, best_size
