import pathlib

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    max_examples=50,
    derandomize=True,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

ROOT = pathlib.Path(__file__).resolve().parent.parent

# criterion number -> (title, passed); filled by the marker hook below
_ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def fixtures_dir() -> pathlib.Path:
    return ROOT / "fixtures"


@pytest.fixture(scope="session")
def configs_dir() -> pathlib.Path:
    return ROOT / "configs"


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "acceptance(num, title): ties a test to one acceptance criterion; "
        "the run summary prints one pass/fail line per criterion",
    )


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    rep = yield
    marker = item.get_closest_marker("acceptance")
    if marker is not None and rep.when == "call":
        num, title = marker.args
        _ACCEPTANCE[num] = (title, rep.passed)
    return rep


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        title, ok = _ACCEPTANCE[num]
        word = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"[criterion {num}] {word}  {title}")
