"""Versioned prompt-template assets with named substitution slots.

Templates are plain text files; slots are ``{name}`` markers filled by
targeted replacement (no format-string escaping, so literal braces in the
templates survive untouched). See the README for which templates are
shipped verbatim protocol text and which are documented reconstructions.
"""

from __future__ import annotations

from importlib import resources

_cache: dict[str, str] = {}


def load_template(name: str) -> str:
    if name not in _cache:
        _cache[name] = (
            resources.files("maintlab.prompts").joinpath(f"{name}.txt").read_text(encoding="utf-8")
        )
    return _cache[name]


def render(name: str, **slots: object) -> str:
    """Fill every ``{slot}`` marker; unknown slot names are an error."""
    text = load_template(name)
    for key, value in slots.items():
        marker = "{" + key + "}"
        if marker not in text:
            raise KeyError(f"template {name!r} has no slot {marker}")
        text = text.replace(marker, str(value))
    return text
