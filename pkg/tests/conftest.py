import pytest

from gtcrn.models import load_builtin


@pytest.fixture(scope="session")
def models():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = load_builtin(name)
        return cache[name]

    return get


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance.py" not in getattr(rep, "nodeid", ""):
                continue
            if rep.when != "call" and outcome != "error":
                continue
            detail = "; ".join(str(v) for k, v in rep.user_properties if k == "detail")
            status = "PASS" if outcome == "passed" else "FAIL"
            lines.append((rep.nodeid.split("::")[-1], status, detail))
    if lines:
        terminalreporter.section("acceptance criteria")
        for name, status, detail in sorted(lines):
            terminalreporter.write_line(f"{status}  {name}" + (f"  [{detail}]" if detail else ""))
