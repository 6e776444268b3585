import os

import pytest

from sosroa import cli

DATA = os.path.join(os.path.dirname(__file__), "data")


def config_path(name):
    return os.path.join(DATA, name)


@pytest.fixture(scope="session")
def smib_config():
    return config_path("smib.json")


@pytest.fixture(scope="session")
def smib_estimate_dir(tmp_path_factory, smib_config):
    """One full CLI estimation run on the two-machine system, shared across
    tests that only need a valid estimate file."""
    outdir = tmp_path_factory.mktemp("smib_estimate")
    rc = cli.main(["estimate", "--config", smib_config,
                   "--out", str(outdir), "--seed", "3",
                   "--max-outer", "1", "--resolution", "11"])
    assert rc == cli.EXIT_OK
    return outdir


@pytest.fixture(scope="session")
def smib_estimate_file(smib_estimate_dir):
    return str(smib_estimate_dir / "estimate.json")
