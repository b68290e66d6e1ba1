import numpy as np
import pytest

from qpsim.config import SceneBuilder, load_config, scene_path


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def appendix_a():
    return load_config(scene_path("appendix_a"))


@pytest.fixture(scope="session")
def ant_config():
    return load_config(scene_path("ant"))


def two_body_scene(gravity=(0.0, 0.0, 0.0), stiffness=10000.0, damping=0.0, child_inertia=(1.0, 1.0, 1.0),
                   actuated=True, limits=()):
    """Two free unit-mass bodies joined by a revolute joint about z."""
    b = SceneBuilder(dt=0.01, gravity=gravity)
    b.add_body("a", mass=1.0, inertia=(1.0, 1.0, 1.0))
    b.add_body("b", mass=1.0, inertia=child_inertia)
    b.add_joint("j", "a", "b", stiffness=stiffness, damping=damping, angular_stiffness=stiffness,
                parent_offset=(0.5, 0.0, 0.0), child_offset=(-0.5, 0.0, 0.0), axis=(0.0, 0.0, 1.0),
                angle_limits=limits)
    if actuated:
        b.add_actuator("m", strength=1.0, joint="j")
    return b.finalize()


def free_body_scene(gravity=(0.0, 0.0, -9.8), dt=0.01):
    b = SceneBuilder(dt=dt, gravity=gravity)
    b.add_body("ball", mass=1.0)
    return b.finalize()
