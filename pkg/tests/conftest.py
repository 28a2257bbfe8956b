import numpy as np
import pytest

_CRITERIA: dict[int, dict] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def note(request):
    """Attach a one-line measurement to the acceptance summary."""
    def add(text):
        request.node.user_properties.append(("note", text))
    return add


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    entry = _CRITERIA.setdefault(n, {"title": title, "ok": True, "notes": []})
    if rep.failed or (rep.when == "call" and rep.skipped):
        entry["ok"] = False
    if rep.when == "call":
        entry["notes"] += [v for k, v in item.user_properties if k == "note"]


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        e = _CRITERIA[n]
        line = f"criterion {n:2d} {'PASS' if e['ok'] else 'FAIL'}  {e['title']}"
        if e["notes"]:
            line += "  [" + "; ".join(e["notes"]) + "]"
        terminalreporter.write_line(line)
