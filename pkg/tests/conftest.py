import numpy as np
import pytest

from wrenchflow import dynamics as dyn
from wrenchflow.robotmodel import (BodySpec, FallThresholds, JointSpec, RobotModel,
                                   SurfaceRegion, planar_humanoid_fixture)


@pytest.fixture(scope="session")
def fixture_model():
    return planar_humanoid_fixture()


@pytest.fixture(scope="session")
def free_body_model():
    """Single free-floating planar body: mass 2 kg, inertia 0.5, CoM at origin."""
    body = BodySpec(0, "block", None, 2.0, np.zeros(2), 0.5,
                    np.array([[0.1, 0.0], [-0.1, 0.0], [0.0, 0.1]]))
    region = SurfaceRegion(1, 0, np.zeros(2), body.surface_points_m.copy())
    model = RobotModel((body,), (), (region,), 3, np.zeros(0),
                       FallThresholds(0.0, 10.0))
    model.validate()
    return model


def random_state(model, rng, spread=1.0):
    q_base = rng.normal(0.0, spread, 3)
    q_joint = rng.normal(0.0, 0.6 * spread, model.n)
    v = rng.normal(0.0, spread, model.nv)
    return dyn.GeneralizedState(0.0, q_base, q_joint, v)
