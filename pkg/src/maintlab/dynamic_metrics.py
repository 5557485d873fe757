"""Dynamic maintainability metrics over (original, modified) code pairs.

Pass@k follows the unbiased estimator 1 - C(n-c, k)/C(n, k). Syntax-tree
similarity is the Ratcliff/Obershelp ratio over preorder node-kind
sequences. Diff volume counts inserted plus deleted lines of a line-level
LCS diff, absolute and as a percent of the original's sloc.
"""

from __future__ import annotations

from dataclasses import dataclass
from difflib import SequenceMatcher
from fractions import Fraction
from math import comb
from typing import Iterable, Mapping, Sequence

from .errors import DomainError
from .parsing import node_kind_sequence, parse_source
from .sandbox import VerdictStatus


@dataclass(frozen=True)
class DiffVolume:
    """Changed-line volume: ``per`` as percent of original sloc, ``abs`` lines."""

    per: float
    abs: int


def pass_at_k_exact(n: int, c: int, k: int) -> Fraction:
    """Exact probability that a uniform k-subset of n samples has a pass."""
    if not (0 <= c <= n and 1 <= k <= n):
        raise DomainError(f"pass@k domain violated: n={n} c={c} k={k}")
    misses = comb(n - c, k) if n - c >= k else 0
    return 1 - Fraction(misses, comb(n, k))


def pass_at_k(n: int, c: int, k: int) -> float:
    return float(pass_at_k_exact(n, c, k))


def sequence_similarity(a: Sequence, b: Sequence) -> float:
    """Ratcliff/Obershelp ratio 2M/(|a|+|b|) over two hashable sequences.

    The pair is canonically ordered before matching: the greedy
    longest-block recursion is orientation-dependent when equally long
    matches compete, and similarity must be symmetric. autojunk must stay
    off: the popularity heuristic silently changes the ratio on sequences
    longer than 200 elements.
    """
    x, y = list(a), list(b)
    if (len(y), y) < (len(x), x):
        x, y = y, x
    return SequenceMatcher(None, x, y, autojunk=False).ratio()


def ast_similarity(a: str, b: str) -> float:
    """Structural similarity of two sources in [0, 1]; 1.0 means
    identical node-kind sequences (identifier renames are invisible)."""
    seq_a = node_kind_sequence(parse_source(a))
    seq_b = node_kind_sequence(parse_source(b))
    return sequence_similarity(seq_a, seq_b)


def code_diff(original: str, modified: str) -> DiffVolume:
    """Line-level LCS diff volume between two sources.

    A replaced line counts as one deletion plus one insertion. ``per`` is
    taken against the original's sloc, so heavy rewrites of short files
    exceed 100%.
    """
    lines_a = [line.rstrip() for line in original.splitlines()]
    lines_b = [line.rstrip() for line in modified.splitlines()]
    common = _lcs_length(lines_a, lines_b)
    changed = (len(lines_a) - common) + (len(lines_b) - common)
    if changed == 0:
        return DiffVolume(per=0.0, abs=0)
    from .parsing import line_census

    sloc = line_census(original).sloc
    if sloc == 0:
        raise DomainError("diff percent undefined: original has no source lines")
    return DiffVolume(per=changed * 100 / sloc, abs=changed)


def dynamic_report(probes: Iterable, k_values: Sequence[int] = (5,)) -> Mapping[str, object]:
    """Aggregate probe results into the dynamic-metric table row.

    Pass@k pools verdicts per (problem, pattern) unit and averages the
    per-unit estimates; similarity and diff volume are plain means over
    probes. ``probes`` are duck-typed: they need ``problem_id``,
    ``pattern``, ``verdict.status``, ``ast_sim`` and ``diff`` attributes.
    """
    probes = list(probes)
    if not probes:
        raise DomainError("no probes to aggregate")
    units: dict[tuple, list] = {}
    for probe in probes:
        units.setdefault((probe.problem_id, probe.pattern), []).append(probe)
    pass_rates: dict[int, float] = {}
    for k in k_values:
        per_unit = []
        for members in units.values():
            n = len(members)
            c = sum(1 for p in members if p.verdict.status == VerdictStatus.PASS)
            per_unit.append(pass_at_k(n, c, k))
        pass_rates[k] = sum(per_unit) / len(per_unit)
    return {
        "pass_at_k": pass_rates,
        "ast_similarity": sum(p.ast_sim for p in probes) / len(probes),
        "code_diff_per": sum(p.diff.per for p in probes) / len(probes),
        "code_diff_abs": sum(p.diff.abs for p in probes) / len(probes),
        "units": len(units),
    }


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Length of the longest common subsequence (classic two-row DP)."""
    if not a or not b:
        return 0
    if len(b) > len(a):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for item_a in a:
        cur = [0]
        for j, item_b in enumerate(b, start=1):
            if item_a == item_b:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(cur[-1], prev[j]))
        prev = cur
    return prev[-1]
