"""Collects one verdict line per acceptance criterion and prints them at the end."""

import pytest

_VERDICTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion number and summary")
    config.stash[_VERDICTS] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when == "setup" and rep.passed) or rep.when == "teardown":
        return
    n, text = mark.args
    notes = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    if hasattr(rep, "wasxfail"):
        status = "FAIL (expected, see decisions ledger)"
    else:
        status = "PASS" if rep.passed else "FAIL"
    line = f"criterion {n}: {status} - {text}"
    if notes:
        line += f" [{notes}]"
    item.config.stash[_VERDICTS][(n, item.nodeid)] = line


def pytest_terminal_summary(terminalreporter, config):
    verdicts = config.stash[_VERDICTS]
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(verdicts):
        terminalreporter.write_line(verdicts[key])
