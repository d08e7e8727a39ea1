import pytest

from qbeat.dataset import load_table1
from qbeat.hyperfine import HyperfineSystem


@pytest.fixture(scope="session")
def table1():
    return load_table1()


@pytest.fixture(scope="session")
def cs():
    return HyperfineSystem("7/2", "3/2", 7.42, 0.14)


@pytest.fixture(scope="session")
def table1_fit(table1, cs):
    from qbeat.fitting import fit

    return fit(table1, cs)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when != "call" and outcome == "passed":
                continue
            props = dict(getattr(rep, "user_properties", ()))
            if "criterion" in props:
                status = "PASS" if outcome == "passed" else "FAIL"
                lines.append((props["criterion"], f"[{status}] {props['criterion']}  {props.get('detail', '')}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines, key=lambda item: int(item[0].split(".")[0])):
            terminalreporter.write_line(line)
