import json
import os

import numpy as np
import pytest

import jumpcontrol as jc

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


def load_fixture(name):
    with open(os.path.join(FIXTURES, name)) as fh:
        return jc.problem_from_dict(json.load(fh))


@pytest.fixture(scope="session")
def m2():
    """Two states, state 1 absorbing, action a jumps 0 -> 1 at rate a."""
    return load_fixture("m2.json")


@pytest.fixture(scope="session")
def threestate():
    """Seeded random 3-state, 2-action fixture committed to the repo."""
    return load_fixture("threestate.json")


@pytest.fixture(scope="session")
def aflat():
    """Degenerate model: rates and costs do not depend on the action.

    The penalty term vanishes on action-independent functions, so the
    penalized solutions collapse onto the single-action primal solution.
    """
    return jc.Problem(
        states=("u", "v", "w"),
        actions=("a", "b"),
        rates=np.array([
            [[0.2, 0.5, 0.3], [0.2, 0.5, 0.3]],
            [[0.1, 0.0, 0.9], [0.1, 0.0, 0.9]],
            [[0.4, 0.4, 0.0], [0.4, 0.4, 0.0]],
        ]),
        lambda0=np.array([0.6, 0.4]),
        running_cost=np.array([[0.3, 0.3], [0.1, 0.1], [0.0, 0.0]]),
        terminal_cost=np.array([1.0, 0.0, 0.5]),
        horizon=1.0,
    )


@pytest.fixture(scope="session")
def single_action():
    """|A| = 1: the HJB equation degenerates to the linear equation."""
    return jc.Problem(
        states=("0", "1", "2"),
        actions=("only",),
        rates=np.array([[[0.0, 0.7, 0.3]], [[0.5, 0.0, 0.5]], [[0.2, 0.8, 0.0]]]),
        lambda0=np.array([1.0]),
        running_cost=np.array([[0.2], [0.0], [0.6]]),
        terminal_cost=np.array([0.0, 1.0, 0.3]),
        horizon=1.0,
    )


@pytest.fixture(scope="session")
def zero_rate():
    """No dynamics at all: lambda = 0, f = 0."""
    return jc.Problem(
        states=("0", "1"),
        actions=("a", "b"),
        rates=np.zeros((2, 2, 2)),
        lambda0=np.array([1.0, 1.0]),
        running_cost=np.zeros((2, 2)),
        terminal_cost=np.array([2.0, -1.0]),
        horizon=1.0,
    )
