from __future__ import annotations

import pytest

_ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or rep.when != "call":
        return
    number, title = mark.args
    details = [v for k, v in item.user_properties if k == "detail"]
    _ACCEPTANCE.append((number, title, "PASS" if rep.passed else "FAIL", rep.duration, details))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number, title, verdict, secs, details in sorted(_ACCEPTANCE):
        tr.write_line(f"criterion {number:>2} {verdict}  {title}  ({secs:.1f} s)")
        for d in details:
            tr.write_line(f"      {d}")
