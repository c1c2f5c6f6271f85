from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixture_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def mini_paths():
    return (
        FIXTURES / "mini_annotations.json",
        FIXTURES / "mini_detections.json",
        FIXTURES / "mini_expected.json",
    )
