import os

import pytest

import groundseg

FIXTURES = os.path.join(os.path.dirname(__file__), os.pardir, "fixtures")
MIB_PATH = os.path.join(FIXTURES, "h2demo.mib")
MISSION_PATH = os.path.join(FIXTURES, "mission.yaml")
SCENARIO_PATH = os.path.join(FIXTURES, "scenario.yaml")


@pytest.fixture(scope="session")
def mib():
    return groundseg.load_mib(MIB_PATH)


@pytest.fixture()
def system():
    return groundseg.build(MISSION_PATH)


@pytest.fixture()
def loop():
    return groundseg.EventLoop(groundseg.SimClock(0))
