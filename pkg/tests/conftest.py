import warnings

import numpy as np
import pytest

from spcca.matrix import DataMatrix, standardize
from spcca.synthetic import generate, planted_scenario


def zmat(rng, n, p, labels=None):
    """Standardized n x p Gaussian matrix."""
    return standardize(DataMatrix(rng.standard_normal((n, p)), tuple(labels or ())))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def planted():
    data, design, truth = generate(planted_scenario())
    z = [standardize(m) for m in data]
    zd = standardize(design.matrix)
    return z, zd, truth


@pytest.fixture(autouse=True)
def _quiet_lambda_warnings():
    from spcca.errors import LambdaWarning
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LambdaWarning)
        yield


def pytest_terminal_summary(terminalreporter):
    import sys
    for name, mod in list(sys.modules.items()):
        if name.endswith("test_acceptance") and getattr(mod, "RESULTS", None):
            terminalreporter.section("acceptance criteria")
            for line in mod.RESULTS:
                terminalreporter.write_line(line)
