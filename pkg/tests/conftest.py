import time

import pytest

from contactclass.audio_dsp import variance_experiment
from contactclass.audio_ranging import AudioRangingConfig

ACCEPTANCE_LINES = []
DSP_SECONDS = {}


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


@pytest.fixture(scope="session")
def dsp_seconds():
    return DSP_SECONDS


@pytest.fixture(scope="session")
def dsp_6db():
    # 500 seeded trials, shared by the dsp and acceptance tests
    t0 = time.perf_counter()
    exp = variance_experiment(AudioRangingConfig(), 6.0, 500, seed=0)
    DSP_SECONDS[6.0] = time.perf_counter() - t0
    return exp


@pytest.fixture(scope="session")
def dsp_12db():
    return variance_experiment(AudioRangingConfig(), 12.0, 500, seed=0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
