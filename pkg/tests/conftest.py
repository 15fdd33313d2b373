import pytest

_outcomes: dict = {}


def pytest_runtest_logreport(report):
    label = dict(report.user_properties).get("criterion")
    if label is None:
        return
    if report.when == "call" or report.outcome != "passed":
        prev = _outcomes.get(label, "PASS")
        _outcomes[label] = "PASS" if prev == "PASS" and report.outcome == "passed" else "FAIL"


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("acceptance")
        if marker and marker.args:
            item.user_properties.append(("criterion", marker.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_outcomes, key=lambda s: int(s.split(".")[0])):
        terminalreporter.write_line(f"{_outcomes[label]}  {label}")


@pytest.fixture
def run_cli(capsys):
    """Run the command line in-process; returns (exit code, stdout, stderr)."""
    from illbilevel.cli import main

    def run(*argv):
        try:
            code = main(list(argv))
        except SystemExit as exc:
            code = exc.code
        out = capsys.readouterr()
        return code, out.out, out.err

    return run
