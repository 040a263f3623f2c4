import math

import numpy as np
import pytest

from msbound.exceptions import NotReachable
from msbound.model import OrthBlock, SystemModel
from msbound.reachability import controllability_index

ACCEPTANCE_LINES = []


def record_criterion(number, title, passed, detail=""):
    status = "PASS" if passed else "FAIL"
    ACCEPTANCE_LINES.append(f"[{status}] criterion {number:>2}: {title}  {detail}".rstrip())


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_blocks(rng, max_d2=6):
    blocks, size = [], 0
    target = int(rng.integers(1, max_d2 + 1))
    while size < target:
        choice = rng.integers(3) if target - size >= 2 else rng.integers(2)
        if choice == 0:
            blocks.append(OrthBlock("PlusOne"))
        elif choice == 1:
            blocks.append(OrthBlock("MinusOne"))
        else:
            theta = rng.uniform(0.1, 2 * math.pi - 0.1)
            if abs(theta - math.pi) < 0.05:
                theta += 0.2
            blocks.append(OrthBlock("Rotation", theta))
        size += blocks[-1].size
    return blocks


def random_plant(rng, max_d2=6, max_d1=3, max_m=3):
    """Random reachable block plant with a Schur-stable part of spectral radius 0.9."""
    while True:
        blocks = random_blocks(rng, max_d2)
        d2 = sum(b.size for b in blocks)
        d1 = int(rng.integers(0, max_d1 + 1))
        m = int(rng.integers(1, max_m + 1))
        A1 = rng.standard_normal((d1, d1))
        if d1:
            A1 *= 0.9 / max(abs(np.linalg.eigvals(A1)))
        model = SystemModel(A1=A1, blocks=blocks, B1=rng.standard_normal((d1, m)),
                            B2=rng.standard_normal((d2, m)))
        try:
            controllability_index(model.A2, model.B2)
        except NotReachable:
            continue
        return model


@pytest.fixture
def scalar_plant():
    return SystemModel(A1=[], blocks=[OrthBlock("PlusOne")], B1=[], B2=[[1.0]])


@pytest.fixture
def rotation_plant():
    return SystemModel(A1=[], blocks=[OrthBlock("Rotation", math.pi / 2)], B1=[], B2=[[1.0], [0.0]])
