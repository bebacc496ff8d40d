"""
Named reference systems usable as ``system: {builtin: <name>}`` in scenario files.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

from securestate.errors import ConfigError
from securestate.services.linsys import LinearSystem

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BuiltinSystem:
    name: str
    description: str
    system: LinearSystem
    default_input: Optional[str] = None


def _double_integrator() -> LinearSystem:
    return LinearSystem.from_matrices(
        A=[[1, 1], [0, 1]],
        C=[[1, 2], [1, 0], [1, 1]],
    )


def fourdim_system() -> LinearSystem:
    A = [
        [2.3, -0.6, 3.8, 0.4],
        [3.2, -1.6, 0.7, 0.4],
        [1.7, 2.8, 5.2, 4.3],
        [-3.1, 2.4, 3.7, 4.8],
    ]
    C = [
        [1, 0, 0, 1],
        [1, 0, 1, 0],
        [1, 1, 0, 0],
        [0, 1, 1, 0],
        [0, 1, 0, 1],
        [0, 0, 1, 1],
    ]
    return LinearSystem.from_matrices(A=A, C=C, B=np.ones((4, 1)))


def three_inertia_system(
    k1: float = 1.38,
    k2: float = 1.38,
    T: float = 0.005,
    J1: float = 0.01,
    J2: float = 0.02,
    J3: float = 0.03,
    b1: float = 0.006,
    b2: float = 0.006,
    b3: float = 0.006,
) -> LinearSystem:
    """
    Forward-Euler discretization of a drive motor, middle body and load
    coupled by two torsional shafts.

    State: [θ1, θ̇1, θ2, θ̇2, θ3, θ̇3]; input: motor torque T_m.
    Sensors: θ1, θ2, θ3, θ1−θ2, θ1−θ3, θ1+θ2−θ3, θ1−θ2+θ3.
    """
    A = [
        [1, T, 0, 0, 0, 0],
        [-k1 * T / J1, 1 - b1 * T / J1, k1 * T / J1, 0, 0, 0],
        [0, 0, 1, T, 0, 0],
        [k1 * T / J2, 0, -(k1 + k2) * T / J2, 1 - b2 * T / J2, k2 * T / J2, 0],
        [0, 0, 0, 0, 1, T],
        [0, 0, k2 * T / J3, 0, -k2 * T / J3, 1 - b3 * T / J3],
    ]
    B = [[0], [T / J1], [0], [0], [0], [0]]
    C = [
        [1, 0, 0, 0, 0, 0],
        [0, 0, 1, 0, 0, 0],
        [0, 0, 0, 0, 1, 0],
        [1, 0, -1, 0, 0, 0],
        [1, 0, 0, 0, -1, 0],
        [1, 0, 1, 0, -1, 0],
        [1, 0, -1, 0, 1, 0],
    ]
    return LinearSystem.from_matrices(A=A, C=C, B=B)


_FACTORIES: Dict[str, Callable[[], BuiltinSystem]] = {
    "example1": lambda: BuiltinSystem("example1", "2-state double integrator, 3 sensors", _double_integrator()),
    "example2": lambda: BuiltinSystem("example2", "2-state double integrator, 3 sensors", _double_integrator()),
    "example3": lambda: BuiltinSystem("example3", "2-state double integrator, 3 sensors", _double_integrator()),
    "fourdim": lambda: BuiltinSystem("fourdim", "4-state system, 6 pairwise-sum sensors, u = 3.6", fourdim_system(), "3.6"),
    "three_inertia": lambda: BuiltinSystem(
        "three_inertia", "three-inertia drive train, 7 angle sensors", three_inertia_system(), "9.5 + 0.1*sin(k)"
    ),
}

BUILTIN_NAMES = tuple(_FACTORIES)


def get_builtin(name: str) -> BuiltinSystem:
    factory = _FACTORIES.get(name)
    if factory is None:
        raise ConfigError(
            [{"field": "system.builtin", "message": f"unknown builtin {name!r}; choose one of {', '.join(BUILTIN_NAMES)}"}]
        )
    logger.debug(f"Loaded builtin system {name}")
    return factory()
