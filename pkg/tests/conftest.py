import numpy as np
import pytest

from onfire import backend


@pytest.fixture(params=backend.available_backends())
def any_backend(request):
    """Run the test once per available kernel backend."""
    backend.use(request.param)
    yield request.param
    backend.use("auto")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def synth_root(tmp_path_factory):
    """Small deterministic synthetic dataset shared across tests."""
    from onfire.data import synth_dataset

    root = tmp_path_factory.mktemp("synth")
    synth_dataset(root, n_per_class=24, image_size=48, seed=7, write_masks=True)
    return root
