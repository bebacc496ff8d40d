"""
Shared fixtures: the worked double-integrator examples and the reference systems.
"""
from pathlib import Path

import numpy as np
import pytest

from securestate.services.builtins import fourdim_system, three_inertia_system
from securestate.services.expressions import parse_signal
from securestate.services.linsys import AttackScenario, LinearSystem, constant_inputs, simulate

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"

FOURDIM_GAMMA = (1, 3, 4, 6)
FOURDIM_SIGNALS = {
    1: "2000 + k/(k+1)",
    3: "3000 + k/(k+2)",
    4: "1500*sin(2*k+1)",
    6: "3000*cos(2*k+3)",
}
THREE_INERTIA_GAMMA = (1, 2, 3, 4)
THREE_INERTIA_SIGNALS = {
    1: "125 + sqrt(k)",
    2: "143*cos(k)",
    3: "234*sin(k+1) - 143*cos(k)",
    4: "16 - 80*sin(k+3)",
}
THREE_INERTIA_X0 = [0.2, 1.2, 0.19, 1.1, 0.3, 1.6]


def expression_attack(gamma, signals) -> AttackScenario:
    compiled = {i: parse_signal(source) for i, source in signals.items()}

    def signal(k, i):
        return compiled[i](k) if i in compiled else 0.0

    return AttackScenario(gamma=tuple(gamma), signal=signal)


@pytest.fixture
def scenario_dir() -> Path:
    return SCENARIO_DIR


@pytest.fixture
def double_integrator() -> LinearSystem:
    """A = [[1,1],[0,1]], C = [[1,2],[1,0],[1,1]], no input"""
    return LinearSystem.from_matrices(A=[[1, 1], [0, 1]], C=[[1, 2], [1, 0], [1, 1]])


@pytest.fixture
def example2_trajectory(double_integrator):
    attack = AttackScenario.from_table((1, 2), {(k, i): v for k in range(5) for i, v in ((1, 2.0), (2, 3.0))})
    return simulate(double_integrator, [1, 2], None, attack, 4)


@pytest.fixture
def example3_trajectory(double_integrator):
    attack = AttackScenario.from_table((1,), {(0, 1): 3.5, (1, 1): 3.5})
    return simulate(double_integrator, [2, 1], None, attack, 1)


@pytest.fixture
def fourdim() -> LinearSystem:
    return fourdim_system()


@pytest.fixture
def fourdim_attack() -> AttackScenario:
    return expression_attack(FOURDIM_GAMMA, FOURDIM_SIGNALS)


@pytest.fixture
def three_inertia() -> LinearSystem:
    return three_inertia_system()


@pytest.fixture
def three_inertia_trajectory(three_inertia):
    torque = parse_signal("9.5 + 0.1*sin(k)")
    inputs = np.array([[torque(k)] for k in range(8)])
    attack = expression_attack(THREE_INERTIA_GAMMA, THREE_INERTIA_SIGNALS)
    return simulate(three_inertia, THREE_INERTIA_X0, inputs, attack, 8)


@pytest.fixture
def fourdim_case1(fourdim, fourdim_attack):
    return simulate(fourdim, [25.2, -16.2, 123.3, 4.9], constant_inputs(3.6, 4), fourdim_attack, 4)
