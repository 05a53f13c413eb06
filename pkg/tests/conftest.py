import numpy as np
import pytest

from bankcontract.hjbsolve import build_all
from bankcontract.params import PoolParams, check_assumptions
from bankcontract.policy import ContractPolicy


def random_admissible(rng, I, r_range=(0.001, 0.2)):
    """Draw parameters until all standing assumptions hold."""
    while True:
        alpha = np.sort(rng.uniform(0.1, 1.0, I))[::-1]
        mu = rng.uniform(1.0, 3.0)
        eps = rng.uniform(0.3, 2.0)
        B = mu * eps * rng.uniform(0.05, 0.5)
        r = rng.uniform(*r_range)
        p = PoolParams(I=I, mu=mu, B=B, epsilon=eps, r=r, alpha=tuple(alpha))
        if check_assumptions(p).overall:
            return p


@pytest.fixture(scope="session")
def ref_params():
    return PoolParams.reference()


@pytest.fixture(scope="session")
def ref_vf(ref_params):
    return build_all(ref_params)


@pytest.fixture(scope="session")
def ref_pol(ref_vf):
    return ContractPolicy.from_value_functions(ref_vf)


@pytest.fixture(scope="session")
def zero_params():
    return PoolParams.reference(r=0.0)


@pytest.fixture(scope="session")
def zero_vf(zero_params):
    return build_all(zero_params)


@pytest.fixture(scope="session")
def zero_pol(zero_vf):
    return ContractPolicy.from_value_functions(zero_vf)


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
