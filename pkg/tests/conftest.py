import pytest
from hypothesis import settings

from autonet.harness.config import CASE_A_FILE, CASE_B_FILE, KB_FILE, default_config_dir, load_case_a, load_case_b, load_kb

# Property tests draw the same examples on every run.
settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")


@pytest.fixture(scope="session")
def config_dir():
    return default_config_dir()


@pytest.fixture(scope="session")
def kb(config_dir):
    return load_kb(config_dir / KB_FILE)


@pytest.fixture(scope="session")
def case_a(config_dir):
    return load_case_a(config_dir / CASE_A_FILE)


@pytest.fixture(scope="session")
def case_b(config_dir):
    return load_case_b(config_dir / CASE_B_FILE)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record():
    """Store one acceptance line; printed in the terminal summary."""

    def _record(cid: str, name: str, passed: bool, detail: str) -> bool:
        ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] {cid} {name}: {detail}")
        print(ACCEPTANCE_LINES[-1])
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: s.split()[1]):
            terminalreporter.write_line(line)
