import pytest

from carboncap import fixtures
from carboncap.traces import parse_carbon_traces, parse_workload_traces


@pytest.fixture(scope="session")
def bundled_carbon():
    with open(fixtures.data_path(fixtures.CARBON_FIXTURE), "rb") as handle:
        return {t.region: t for t in parse_carbon_traces(handle)}


@pytest.fixture(scope="session")
def bundled_workloads():
    with open(fixtures.data_path(fixtures.WORKLOAD_FIXTURE), "rb") as handle:
        return parse_workload_traces(handle)
