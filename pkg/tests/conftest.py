"""Shared fixtures."""

from typing import Callable

import numpy as np
import pytest

from lima.core.model import Scenario
from lima.protocol.adr import SnrHistory
from lima.protocol.forwarding import ForwardingConfig, GatewayForwarder, RouterForwarder
from lima.protocol.routing import RoutingEngine
from lima.radio.propagation import PathLossModel
from lima.radio.region import EU868
from tests.fixtures.frames import LG_ID


@pytest.fixture
def plan():
    return EU868


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@pytest.fixture
def forwarding_config() -> ForwardingConfig:
    return ForwardingConfig()


@pytest.fixture
def make_router(forwarding_config) -> Callable[..., RouterForwarder]:
    def _make(node_id: int, seed: int = 1, config: ForwardingConfig = None) -> RouterForwarder:
        routing = RoutingEngine(node_id, rng=np.random.default_rng(seed))
        return RouterForwarder(node_id, routing, np.random.default_rng(seed + 1000), config or forwarding_config)
    return _make


@pytest.fixture
def make_gateway(forwarding_config) -> Callable[..., GatewayForwarder]:
    def _make(node_id: int = LG_ID, config: ForwardingConfig = None, depth: int = 5) -> GatewayForwarder:
        routing = RoutingEngine(node_id, rng=np.random.default_rng(node_id))
        return GatewayForwarder(node_id, routing, config or forwarding_config, SnrHistory(depth=depth))
    return _make


@pytest.fixture(scope="session")
def path_loss() -> PathLossModel:
    return PathLossModel.calibrated()


@pytest.fixture
def small_scenario() -> Scenario:
    """2x2 km, 4 EDs, one LR, two simulated hours."""
    return Scenario.from_config(None, area_side_km=2.0, sim_hours=2.0, traffic_period_s=600.0, seed=3)
