import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

DATA = Path(__file__).parent / "data"
FIXTURE = DATA / "fixture_200.jsonl"
GOLDEN = DATA / "golden"

ACCEPTANCE_RESULTS: dict[str, str] = {}


@pytest.fixture(scope="session")
def fixture_path():
    return FIXTURE


@pytest.fixture(scope="session")
def fixture_stream():
    from streamsparse.ingest import load_dataset

    return load_dataset(FIXTURE)


def dataset_dir():
    value = os.environ.get("STREAMSPARSE_DATA_DIR")
    return Path(value) if value else None


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: int(k.split()[0])):
        terminalreporter.write_line(f"{ACCEPTANCE_RESULTS[key]:<5} criterion {key}")
