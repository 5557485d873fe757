"""Maintainability evaluation toolkit.

Static metrics (maintainability index, cyclomatic complexity, Halstead
volume), dynamic metrics over code revisions (Pass@k, syntax-tree
similarity, diff volume), a sandboxed assertion runner client, a staged
multi-agent code generation pipeline, a requirement-change benchmark
builder, and a two-phase experiment orchestrator.
"""

__version__ = "0.1.0"
