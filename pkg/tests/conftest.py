import numpy as np
import pytest

from etiv import Dataset, DgpConfig, MhConfig, MomentModel, generate_dataset


@pytest.fixture(scope="session")
def small_dataset() -> Dataset:
    return generate_dataset(DgpConfig(n=250, seed=11, rho=0.5))


@pytest.fixture(scope="session")
def small_base_model(small_dataset) -> MomentModel:
    return MomentModel.for_dataset(small_dataset)


@pytest.fixture(scope="session")
def quick_mh() -> MhConfig:
    return MhConfig(n_burn=100, n_draws=800, seed=5)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
