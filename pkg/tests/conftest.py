import pytest

from spikesched.costmodel import ArrayConfig, network_cost
from spikesched.network import parse_network_text

from importlib import resources


def load_bundled(name):
    text = resources.files("spikesched").joinpath(f"networks/{name}.net").read_text()
    return parse_network_text(text)


@pytest.fixture(scope="session")
def mnist_net():
    return load_bundled("mnist")


@pytest.fixture(scope="session")
def nmnist_net():
    return load_bundled("nmnist")


@pytest.fixture(scope="session")
def dvs_net():
    return load_bundled("dvs128")


@pytest.fixture(scope="session")
def mnist_costs(mnist_net):
    return network_cost(mnist_net, ArrayConfig(32, 32), 1)
