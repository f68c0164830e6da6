import numpy as np
import pytest

from loopflow.scenes import render, standard_suite


@pytest.fixture(scope="session")
def suite_renders():
    """Every standard scene rendered once per test session."""
    return {spec.name: render(spec) for spec in standard_suite(0)}


@pytest.fixture(scope="session")
def cover_scene(suite_renders):
    return suite_renders["cover"]


@pytest.fixture(scope="session")
def rotor_scene(suite_renders):
    return suite_renders["rotor_plate"]


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
