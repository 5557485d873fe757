from __future__ import annotations

import json
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def golden_dir() -> Path:
    return FIXTURES / "golden"


@pytest.fixture(scope="session")
def golden_expected(golden_dir) -> dict:
    return json.loads((golden_dir / "expected.json").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def golden_sources(golden_dir, golden_expected) -> dict[str, str]:
    return {
        name: (golden_dir / name).read_text(encoding="utf-8") for name in golden_expected
    }


@pytest.fixture(scope="session")
def replay_dir() -> Path:
    return FIXTURES / "replay"
