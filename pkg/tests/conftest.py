"""Shared fixtures: paths to the bundled study cases."""

from pathlib import Path

import pytest

import bessdamp


@pytest.fixture(scope="session")
def bundled_case_dir() -> Path:
    return Path(bessdamp.__file__).parent / "cases"
