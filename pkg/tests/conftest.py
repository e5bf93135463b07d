import pytest

import dcqe


@pytest.fixture(scope="session")
def default_cfg():
    return dcqe.default_config()


@pytest.fixture(scope="session")
def default_timing(default_cfg):
    return dcqe.TimingModel.from_config(default_cfg)


@pytest.fixture(scope="session")
def small_run(default_cfg):
    """One shared mid-size run for tests that only need realistic streams."""
    return dcqe.run_simulation(default_cfg, 50_000, seed=424242)


@pytest.fixture(scope="session")
def small_matched(default_cfg, small_run):
    return dcqe.match_coincidences(
        small_run, default_cfg.coincidence_window, dcqe.nominal_offsets(default_cfg)
    )
