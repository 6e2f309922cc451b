import pytest

_acceptance = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    out = yield
    rep = out.get_result()
    if rep.when == "call" and "test_acceptance" in item.nodeid:
        _acceptance[item.name] = rep.passed


def pytest_terminal_summary(terminalreporter):
    # one pass/fail line per acceptance criterion
    if _acceptance:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name in sorted(_acceptance):
            status = "PASS" if _acceptance[name] else "FAIL"
            terminalreporter.write_line(f"{status}  {name}")
