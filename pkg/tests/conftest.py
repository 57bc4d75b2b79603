import numpy as np
import pytest

from vibegen.data import SignalDataset, synth_signal


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_record():
    return SignalDataset(synth_signal(2048, seed=3))


@pytest.fixture(scope="session")
def full_record():
    return SignalDataset(synth_signal(262_144, seed=7))


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    def record(number, title, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {str(number):>2}: {title}" + (f"  ({detail})" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def _criterion_order(line):
    tag = line.split("criterion")[1].split(":")[0].strip()
    return int(tag.rstrip("s")), tag


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=_criterion_order):
            terminalreporter.write_line(line)
