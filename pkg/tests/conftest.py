from pathlib import Path

import numpy as np
import pytest

from stoptime.fixtures import F1_CONFIG, build_fixture, random_corpus

E11 = np.diag([1.0, 0.0]).astype(complex)
E12 = np.array([[0, 1], [0, 0]], dtype=complex)
I2 = np.eye(2, dtype=complex)
RHO2 = np.diag([2 / 3, 1 / 3]).astype(complex)
FIXTURE_DIR = Path(__file__).resolve().parents[1] / "fixtures"


def kron(*ms):
    out = np.ones((1, 1), dtype=complex)
    for m in ms:
        out = np.kron(out, m)
    return out


@pytest.fixture(scope="session")
def f1():
    return build_fixture(F1_CONFIG)


@pytest.fixture(scope="session")
def small_corpus():
    return random_corpus(12, start=1000)
