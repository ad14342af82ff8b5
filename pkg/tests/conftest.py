import numpy as np
import pytest

from eqrate.games import Game

RPS_U1 = np.array([[0.0, -1.0, 1.0], [1.0, 0.0, -1.0], [-1.0, 1.0, 0.0]])
CHICKEN_U1 = np.array([[0.0, -1.0], [1.0, -12.0]])


@pytest.fixture(scope="session")
def rps():
    return Game(
        players=("p1", "p2"),
        action_labels=(("rock", "paper", "scissors"),) * 2,
        utilities=(RPS_U1, -RPS_U1),
    )


@pytest.fixture(scope="session")
def rps_dup_rock():
    """RPS with player 1's rock duplicated."""
    u1 = np.vstack([RPS_U1[0], RPS_U1[0], RPS_U1[1], RPS_U1[2]])
    return Game(
        players=("p1", "p2"),
        action_labels=(
            ("rock1", "rock2", "paper", "scissors"),
            ("rock", "paper", "scissors"),
        ),
        utilities=(u1, -u1),
    )


@pytest.fixture(scope="session")
def chicken():
    return Game(
        players=("p1", "p2"),
        action_labels=(("swerve", "straight"),) * 2,
        utilities=(CHICKEN_U1, CHICKEN_U1.T),
    )


@pytest.fixture(scope="session")
def chicken_dup_straight():
    """Chicken with player 1's straight duplicated."""
    u1 = np.vstack([CHICKEN_U1[0], CHICKEN_U1[1], CHICKEN_U1[1]])
    u2 = np.vstack([CHICKEN_U1.T[0], CHICKEN_U1.T[1], CHICKEN_U1.T[1]])
    return Game(
        players=("p1", "p2"),
        action_labels=(("swerve", "straight1", "straight2"), ("swerve", "straight")),
        utilities=(u1, u2),
    )


def random_game(shape, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    n = len(shape)
    return Game(
        players=tuple(f"pl{i}" for i in range(n)),
        action_labels=tuple(tuple(f"a{i}_{j}" for j in range(s)) for i, s in enumerate(shape)),
        utilities=tuple(scale * rng.normal(size=shape) for _ in range(n)),
    )
