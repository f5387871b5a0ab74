import time

import numpy as np
import pytest

import brslab as bl

SEED = 20240811


def pytest_configure(config):
    config._suite_start = time.monotonic()


def suite_elapsed(config) -> float:
    return time.monotonic() - config._suite_start


@pytest.fixture(scope="session")
def sigma1():
    return bl.make("sigma1")


@pytest.fixture(scope="session")
def rfc_offset(sigma1):
    return bl.find_rfc_offset(
        sigma1.system, sigma1.margin, sigma1.margin.eta, 2.0, 3.0, 8, SEED
    )


@pytest.fixture(scope="session")
def l_table(sigma1, rfc_offset):
    return bl.build_l_table(sigma1.system, sigma1.margin, 14, rfc_offset, SEED)


@pytest.fixture(scope="session")
def lyap_cfg():
    return bl.LyapunovConfig(seed=SEED)
