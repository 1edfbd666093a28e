import numpy as np
import pytest

from pairlock.model import ModelConfig


TINY = ModelConfig(
    encoder_blocks=((4, 1), (8, 1)),
    aap_size=(4, 4),
    fc_dims=(16, 8, 3),
    decoder_blocks=(8, 4),
    resize_target=16,
)


@pytest.fixture
def tiny_config():
    return TINY


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance reporting: one PASS/FAIL line per criterion in the terminal summary
_CRITERIA: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when == "teardown":
        return
    failed = call.excinfo is not None and not call.excinfo.errisinstance(pytest.skip.Exception)
    if call.when == "setup" and not failed:
        return
    number, title = marker.args
    detail = dict(item.user_properties).get("detail", "")
    if failed:
        detail = (detail + "; " if detail else "") + call.excinfo.exconly().splitlines()[0][:160]
    _CRITERIA[number] = ("FAIL" if failed else "PASS", title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[number]
        terminalreporter.write_line(f"{status} [{number}] {title}" + (f": {detail}" if detail else ""))
