import warnings

import numpy as np
import pytest

from star_rsma import BeamformerSet, ScenarioConfig, StarRisState, generate_channels
from star_rsma.channel import default_mode_mask

warnings.filterwarnings("ignore", module="cvxpy")

ACCEPTANCE_LINES = []


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_problem(rng, K=4, N=2, M=8, scale=1e5, theta_mag=0.7):
    """Scenario with unit noise: channels scaled so SNRs are moderate."""
    cfg = ScenarioConfig(K=K, N_BS=N, N_u=N, M=M, sigma2=1.0)
    cs = generate_channels(cfg, rng).scaled(scale)
    ws = BeamformerSet(0.4 * crandn(rng, N, N), 0.4 * crandn(rng, K, N, N))
    mask = default_mode_mask(M)
    theta = theta_mag * np.exp(2j * np.pi * rng.uniform(size=M))
    return cfg, cs, ws, StarRisState.from_active(theta, mask)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
