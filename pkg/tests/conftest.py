import numpy as np
import pytest

from svartest.experiment import DEFAULT_PAIRS
from svartest.graphs import gen_random_symmetric_A
from svartest.model import NoiseKind, TestSpec, VarModel

UNIFORM = NoiseKind("uniform", 1.0)


def ks_distance(values, cdf):
    """Two-sided Kolmogorov-Smirnov distance of a sample against ``cdf``."""
    v = np.sort(np.asarray(values, dtype=float))
    n = v.size
    f = np.array([cdf(x) for x in v])
    return float(max(np.max(np.arange(1, n + 1) / n - f), np.max(f - np.arange(n) / n)))


def random_stable(rng, M, p=1, radius=0.8):
    """Dense random VAR(p) rescaled to a given companion spectral radius."""
    coeffs = rng.standard_normal((p, M, M))
    model = VarModel(coeffs)
    r = np.max(np.abs(np.linalg.eigvals(model.companion())))
    # scaling lag j by s^j scales the companion spectrum by s
    s = radius / r
    return VarModel(np.stack([coeffs[j] * s ** (j + 1) for j in range(p)]))


@pytest.fixture
def default_spec():
    return TestSpec.from_pairs(DEFAULT_PAIRS, one_based=True)


@pytest.fixture
def a3_model():
    A = gen_random_symmetric_A(30, 2, seed=3)
    return VarModel(A, noise_sigma=np.sqrt(UNIFORM.variance))


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_line():
    def record(criterion, ok, detail):
        status = "N/A " if ok is None else ("PASS" if ok else "FAIL")
        line = f"{status} criterion {criterion}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
