import pytest


@pytest.fixture
def fixture_file(tmp_path):
    from ocrx import gen_fixture

    path = tmp_path / "data.dat"
    gen_fixture(path, 1024)
    return path


def pytest_terminal_summary(terminalreporter):
    from support import CRITERIA

    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(CRITERIA):
            terminalreporter.write_line(f"criterion {number}: {CRITERIA[number]}")
