from dataclasses import replace

import numpy as np
import pytest

from switchid.config import DataConfig
from switchid.experiments import training_set
from switchid.pendulum import C1, C2, PendulumParams
from switchid.sysid import CandidateLibrary, CoefficientMatrix, SwitchedModel, fit_switched_model
from switchid.tree import constant_tree, fit_tree

# single-class linear test system x' = A x + B u
LIN_A = np.array([[1.0, 0.005, 0.0], [-0.1, 0.99, 0.01], [0.05, 0.02, 0.95]])
LIN_B = np.array([0.0, 0.2, -0.5])


@pytest.fixture(scope="session")
def linear_system() -> SwitchedModel:
    """Single-class linear model whose tree always answers C2."""
    cm = CoefficientMatrix(np.column_stack([LIN_A, LIN_B]), C2, 0.0)
    return SwitchedModel(CandidateLibrary.linear(), replace(cm, cls=C1), cm, constant_tree(C2), 0.005)


@pytest.fixture(scope="session")
def plant():
    return PendulumParams()


@pytest.fixture(scope="session")
def pendulum_model(plant):
    """Switched model identified from a small truth-labelled noisy dataset."""
    d = replace(DataConfig(), n_dropdown=8, n_torque=8, n_steps=800)
    trajs = training_set(plant, d)
    lab = np.concatenate([t.classes for t in trajs])
    tree = fit_tree(np.vstack([t.split_features() for t in trajs]), lab)
    return fit_switched_model(trajs, lab, tree)


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    if acceptance_log.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(acceptance_log.RESULTS):
            terminalreporter.write_line(acceptance_log.RESULTS[n])
