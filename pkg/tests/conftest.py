import logging

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from pwralign.geometry import RigidTransform, axis_angle_matrix

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(autouse=True)
def _quiet_logs():
    logging.getLogger("pwralign").setLevel(logging.ERROR)
    yield


def random_transform(rng, max_shift=2.0) -> RigidTransform:
    axis = rng.normal(size=3)
    return RigidTransform(axis_angle_matrix(axis, rng.uniform(-np.pi, np.pi)),
                          rng.uniform(-max_shift, max_shift, size=3))


seeds = st.integers(min_value=0, max_value=2**32 - 1)


@st.composite
def transforms(draw):
    return random_transform(np.random.default_rng(draw(seeds)))


def cube_surface(n, rng, origin=(0.0, 0.0, 0.0), side=1.0):
    """``n`` points sampled uniformly on the surface of an axis-aligned cube."""
    u = rng.uniform(0, side, size=(n, 3))
    face = rng.integers(0, 6, size=n)
    u[np.arange(n), face // 2] = np.where(face % 2 == 0, 0.0, side)
    return u + np.asarray(origin)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
