import numpy as np
import pytest

from sketchjoint import shapes
from sketchjoint.render import Camera


@pytest.fixture
def cabinet():
    return shapes.make_cabinet()


@pytest.fixture
def fridge():
    return shapes.make_fridge()


@pytest.fixture
def wheel_cart():
    return shapes.make_wheel_cart()


def front_camera(mesh, direction=(0.0, 1.0, 0.35), distance=1.6, size=128):
    """Camera looking at the mesh center from the given direction."""
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    return Camera(
        eye=d * distance,
        target=np.zeros(3),
        up=np.array([0.0, 0.0, 1.0]),
        vfov=np.deg2rad(40.0),
        width=size,
        height=size,
    )


@pytest.fixture
def camera_factory():
    return front_camera
