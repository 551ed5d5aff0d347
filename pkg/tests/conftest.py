import dataclasses

import numpy as np
import pytest

import rhsbeam as rb
from rhsbeam.experiment import build_codebooks, make_config
from rhsbeam.model import ArrayModel


@pytest.fixture(scope="session")
def desk_config():
    return make_config("desk")


@pytest.fixture(scope="session")
def desk_array(desk_config):
    return ArrayModel.from_config(desk_config.system)


@pytest.fixture(scope="session")
def desk_books(desk_config, desk_array):
    """Desk-scale codebooks, built once per session (a few seconds)."""
    return build_codebooks(desk_config, desk_array)


@pytest.fixture(scope="session")
def tiny_config():
    """Minimal geometry for fast protocol and I/O tests."""
    kv = {"n_elements": "8", "n_feeds": "2", "frequency_hz": "10e9",
          "element_spacing_m": "0.0225", "alpha_per_m": "0.9"}
    cfg = make_config("desk", file_kv=kv,
                      overrides={"n_psi": 4, "n_mu": 2, "n_layers": 2,
                                 "k_users": 2, "trials": 3,
                                 "snr_db": (10.0,), "seed": 5})
    return cfg


@pytest.fixture(scope="session")
def tiny_array(tiny_config):
    return ArrayModel.from_config(tiny_config.system)


@pytest.fixture(scope="session")
def tiny_books(tiny_config, tiny_array):
    return build_codebooks(tiny_config, tiny_array)


@pytest.fixture(scope="session")
def example_setup():
    """Full-scale 256-element array with the 32 x 5 grid of the worked
    three-user walkthrough; built once (tens of seconds)."""
    import rhsbeam.codebooks as cbm
    from rhsbeam.optimizer import SampleGrid

    cfg = rb.SystemConfig(carrier_frequency=30e9, n_elements=256)
    arr = ArrayModel.from_config(cfg)
    grid = SampleGrid(psi_min=-0.5, psi_max=0.5, mu_min=0.005, mu_max=0.33,
                      n_psi=32, n_mu=5)
    angular = cbm.build_angular_codebook(grid, arr, 5)
    sbc = cbm.build_single_beam_codebook(grid, arr)
    return arr, grid, angular, sbc


@pytest.fixture()
def rng():
    return np.random.default_rng(42)
