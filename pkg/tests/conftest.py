import pytest

from remote_grounding.world import WorldParams, generate_environment, make_episodes

SMALL = WorldParams(n_viewpoints=24, n_rooms=2, objects_per_room=4)


@pytest.fixture(scope="session")
def small_params():
    return SMALL


@pytest.fixture(scope="session")
def small_env():
    return generate_environment(3, SMALL)


@pytest.fixture(scope="session")
def env():
    return generate_environment(7)


@pytest.fixture(scope="session")
def episodes(env):
    return make_episodes(env, 30, seed=1, d_min=1, d_max=5)
