import numpy as np
import pytest

from qcprice import ArrivalRateProfile, EpisodeConfig, Sku, SkuCatalog


def make_catalog(alphas, betas, costs=None, salvage=None, inventory=None, commission=0.0, gamma=0.0):
    n = len(alphas)
    costs = costs if costs is not None else [0.0] * n
    salvage = salvage if salvage is not None else [0.0] * n
    inventory = inventory if inventory is not None else [10] * n
    skus = tuple(
        Sku(f"sku{i}", float(alphas[i]), float(betas[i]), float(costs[i]), float(salvage[i]), int(inventory[i]))
        for i in range(n)
    )
    return SkuCatalog(skus, commission=commission, gamma=gamma)


@pytest.fixture
def desk_catalog():
    """Two complementary SKUs, the running example for simulator and policy tests."""
    return SkuCatalog(
        (
            Sku("milk", 2.0, 0.8, 0.5, 0.3, 30),
            Sku("batter", 1.5, 0.6, 0.7, 0.5, 20),
        ),
        commission=0.1,
        gamma=0.3,
    )


@pytest.fixture
def desk_config():
    return EpisodeConfig(num_epochs=6, epoch_length=1.0, rho=0.9, delta_max=0.5)


def constant_profile(rate, config):
    return ArrivalRateProfile.constant(rate, config.start_time + config.horizon)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion."""

    def record(number: int, passed: bool, detail: str):
        ACCEPTANCE_RESULTS[number] = (bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
