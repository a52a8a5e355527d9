"""Acceptance reporting: one pass/fail line per criterion in the terminal summary."""
import pytest

_RESULTS = {}


@pytest.fixture
def measured(request):
    """Call with a short string describing the measured values for the criterion line."""
    def note(text):
        request.node.user_properties.append(("measured", text))
    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        number, title = marker.args
        if hasattr(rep, "wasxfail"):
            status = "FAIL (expected, see decisions ledger)"
        else:
            status = "PASS" if rep.passed else "FAIL"
        detail = "; ".join(v for k, v in item.user_properties if k == "measured")
        _RESULTS[number] = (title, status, detail)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        title, status, detail = _RESULTS[number]
        line = f"criterion {number:2d} {status}: {title}"
        terminalreporter.write_line(line + (f" [{detail}]" if detail else ""))
