import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", max_examples=25, deadline=None,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def forged_maxcut_5_2():
    from bmforge.families import maxcut_bad_pair, maxcut_instance
    from bmforge.forge import forge

    inst = maxcut_instance(5)
    truth, V = maxcut_bad_pair(5, 2)
    return inst, truth, V, forge(inst, truth, V)


@pytest.fixture(scope="session")
def appendix_c():
    from bmforge.families import appendix_c_fixture

    return appendix_c_fixture()


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_log.LINES:
            terminalreporter.write_line(line)
