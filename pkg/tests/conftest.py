import json
from pathlib import Path

import numpy as np
import pytest

from outageid.netmodel import case39, parse_case
from outageid.powerflow import solve_power_flow
from outageid.sigmap import PmuPlacement, build_signature_map

DATA = Path(__file__).parent / "data"

TWO_BUS = """\
function mpc = two_bus
% two buses joined by one line
mpc.baseMVA = 100;
mpc.bus = [
  1 3 0    0    0 0 1 1 0 230 1 1.1 0.9;
  2 1 {pd} {qd} 0 0 1 1 0 230 1 1.1 0.9;
];
mpc.gen = [
  1 0 0 300 -300 1 100 1 250 0;
];
mpc.branch = [
  1 2 {r} {x} 0 250 250 250 0 0 1 -360 360;
];
"""


def two_bus(pd=0.0, qd=0.0, r=0.0, x=0.1):
    return parse_case(TWO_BUS.format(pd=pd, qd=qd, r=r, x=x), name="two_bus")


@pytest.fixture(scope="session")
def net39():
    return case39()


@pytest.fixture(scope="session")
def base39(net39):
    return solve_power_flow(net39)


@pytest.fixture(scope="session")
def full_map39(net39, base39):
    return build_signature_map(net39, base39, PmuPlacement.all_buses(net39.n_bus))


@pytest.fixture(scope="session")
def golden39():
    return json.loads((DATA / "case39_golden.json").read_text())


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
