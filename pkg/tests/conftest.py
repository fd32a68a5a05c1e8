import numpy as np
import pytest

from peergrade import GradingGraph, Model, PeerGrade, SynthConfig, generate


def make_graph(rows, **kwargs) -> GradingGraph:
    """rows: (assignment, grader, gradee, score) tuples."""
    return GradingGraph([PeerGrade(a, v, u, z) for (a, v, u, z) in rows], **kwargs)


@pytest.fixture(scope="session")
def small_pg1():
    """An 80-student single-assignment network with 3 super-graded submissions."""
    cfg = SynthConfig(
        n_students=80, n_assignments=1, grades_per_grader=4,
        n_ground_truth=3, super_grades=20, model=Model.PG1, seed=101,
    )
    return generate(cfg)


@pytest.fixture(scope="session")
def hci_shaped():
    """Full-size network shaped like a large MOOC assignment: 3600 students,
    4 grades each, 3 submissions super-graded by 160 students."""
    cfg = SynthConfig(
        n_students=3600, n_assignments=1, grades_per_grader=4,
        n_ground_truth=3, super_grades=160, model=Model.PG1, seed=0,
    )
    return generate(cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
