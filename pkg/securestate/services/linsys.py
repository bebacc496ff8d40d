"""
Discrete-time LTI system with sparse sensor attacks.

    x_{k+1} = A x_k + B u_k
    y_k     = C x_k + a_k,   Supp(a_k) ⊆ Γ

Sensor indices are 1-based at every public boundary.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from securestate.errors import DimensionError

logger = logging.getLogger(__name__)

AttackSignal = Callable[[int, int], float]


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _as_matrix(value, name: str) -> np.ndarray:
    try:
        matrix = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise DimensionError(f"{name} is not a real matrix: {exc}") from exc
    if matrix.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise DimensionError(f"{name} has non-finite entries")
    return matrix


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """Matrices A (n×n), B (n×p), C (q×n); p = 0 means autonomous"""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        C = _as_matrix(self.C, "C")
        n = A.shape[0]
        if A.shape != (n, n) or n < 1:
            raise DimensionError(f"A must be square with n >= 1, got shape {A.shape}")
        if C.shape[1] != n or C.shape[0] < 1:
            raise DimensionError(f"C must be q×{n} with q >= 1, got shape {C.shape}")
        if self.B is None or np.size(self.B) == 0:
            B = np.zeros((n, 0))
        else:
            B = _as_matrix(self.B, "B")
            if B.shape[0] != n:
                raise DimensionError(f"B must have {n} rows, got shape {B.shape}")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "B", _frozen(B))
        object.__setattr__(self, "C", _frozen(C))

    @classmethod
    def from_matrices(cls, A, C, B=None) -> "LinearSystem":
        return cls(A=A, B=B, C=C)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[1]

    @property
    def q(self) -> int:
        return self.C.shape[0]

    def step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        if self.p == 0:
            return self.A @ x
        return self.A @ x + self.B @ u


def _zero_signal(k: int, i: int) -> float:
    return 0.0


@dataclass(frozen=True)
class AttackScenario:
    """Fixed attacked index set Γ and the per-step signal a_{k,i} for i ∈ Γ"""

    gamma: Tuple[int, ...] = ()
    signal: AttackSignal = _zero_signal

    def __post_init__(self):
        gamma = tuple(sorted(int(i) for i in self.gamma))
        if len(set(gamma)) != len(gamma):
            raise DimensionError(f"attacked set has duplicate sensors: {list(self.gamma)}")
        if any(i < 1 for i in gamma):
            raise DimensionError(f"sensor indices are 1-based, got {list(gamma)}")
        object.__setattr__(self, "gamma", gamma)

    @property
    def s(self) -> int:
        return len(self.gamma)

    @classmethod
    def none(cls) -> "AttackScenario":
        return cls()

    @classmethod
    def from_table(cls, gamma: Iterable[int], table: Mapping[Tuple[int, int], float]) -> "AttackScenario":
        """Finite (step, sensor) -> value table; zero everywhere else"""
        gamma = tuple(gamma)
        values: Dict[Tuple[int, int], float] = {}
        for (k, i), value in table.items():
            if i not in gamma:
                raise DimensionError(f"attack table entry on sensor {i} outside the attacked set {list(gamma)}")
            values[(int(k), int(i))] = float(value)

        def signal(k: int, i: int) -> float:
            return values.get((k, i), 0.0)

        return cls(gamma=gamma, signal=signal)

    def validate_for(self, q: int) -> None:
        if any(i > q for i in self.gamma):
            raise DimensionError(
                f"attacked set {list(self.gamma)} is not a subset of sensors 1..{q}",
                [{"field": "attack.gamma", "message": f"sensor index exceeds q={q}", "value": list(self.gamma)}],
            )

    def vector(self, k: int, q: int) -> np.ndarray:
        a = np.zeros(q)
        for i in self.gamma:
            a[i - 1] = float(self.signal(k, i))
        return a


def inject_attack(clean: np.ndarray, attack: AttackScenario, k: int) -> np.ndarray:
    """y_k = C x_k + a_k with a_{k,i} = 0 for i ∉ Γ"""
    clean = np.asarray(clean, dtype=float)
    if clean.ndim != 1:
        raise DimensionError(f"clean output must be a vector, got shape {clean.shape}")
    attack.validate_for(clean.shape[0])
    return clean + attack.vector(k, clean.shape[0])


@dataclass(frozen=True, eq=False)
class Measurements:
    """What a defender sees: y_0..y_K and u_0..u_{K-1}"""

    outputs: np.ndarray
    inputs: np.ndarray

    def __post_init__(self):
        outputs = np.array(self.outputs, dtype=float)
        inputs = np.array(self.inputs, dtype=float)
        if outputs.ndim != 2:
            raise DimensionError(f"outputs must be (K+1)×q, got shape {outputs.shape}")
        if inputs.ndim != 2 and inputs.size == 0:
            inputs = np.zeros((max(outputs.shape[0] - 1, 0), 0))
        if inputs.ndim != 2:
            raise DimensionError(f"inputs must be K×p, got shape {inputs.shape}")
        object.__setattr__(self, "outputs", _frozen(outputs))
        object.__setattr__(self, "inputs", _frozen(inputs))

    @property
    def last_step(self) -> int:
        return self.outputs.shape[0] - 1

    def input_at(self, k: int, p: int) -> np.ndarray:
        if p == 0:
            return np.zeros(0)
        return self.inputs[k]


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: np.ndarray
    inputs: np.ndarray
    clean_outputs: np.ndarray
    measured_outputs: np.ndarray
    gamma: Tuple[int, ...] = field(default=())

    @property
    def K(self) -> int:
        return self.states.shape[0] - 1

    @property
    def measurements(self) -> Measurements:
        return Measurements(outputs=self.measured_outputs, inputs=self.inputs)

    @property
    def attacks(self) -> np.ndarray:
        return self.measured_outputs - self.clean_outputs


def _input_matrix(sys: LinearSystem, inputs, K: int) -> np.ndarray:
    if sys.p == 0:
        if inputs is not None and np.size(inputs) > 0:
            raise DimensionError(f"autonomous system (p=0) got non-empty inputs")
        return np.zeros((K, 0))
    if inputs is None:
        raise DimensionError(f"system has p={sys.p} inputs but no input sequence was given")
    U = np.array(inputs, dtype=float)
    if U.ndim == 1 and sys.p == 1:
        U = U.reshape(-1, 1)
    if U.ndim != 2 or U.shape[1] != sys.p:
        raise DimensionError(f"inputs must be K×{sys.p}, got shape {U.shape}")
    if U.shape[0] < K:
        raise DimensionError(f"need at least {K} input vectors, got {U.shape[0]}")
    if not np.all(np.isfinite(U[:K])):
        raise DimensionError("inputs have non-finite entries")
    return U[:K].copy()


def simulate(
    sys: LinearSystem,
    x0: Sequence[float],
    inputs,
    attack: Optional[AttackScenario],
    K: int,
) -> Trajectory:
    """
    Run the recurrence for K steps.

    Returns K+1 states x_0..x_K and K+1 measurements y_0..y_K; inputs
    u_0..u_{K-1} are taken from the first K rows of ``inputs``.
    """
    if K < 0:
        raise DimensionError(f"step count K must be >= 0, got {K}")
    x = np.array(x0, dtype=float).reshape(-1)
    if x.shape[0] != sys.n:
        raise DimensionError(f"x0 has length {x.shape[0]}, system has n={sys.n}")
    if not np.all(np.isfinite(x)):
        raise DimensionError("x0 has non-finite entries")
    attack = attack or AttackScenario.none()
    attack.validate_for(sys.q)
    U = _input_matrix(sys, inputs, K)

    states = np.zeros((K + 1, sys.n))
    clean = np.zeros((K + 1, sys.q))
    measured = np.zeros((K + 1, sys.q))
    states[0] = x
    for k in range(K + 1):
        clean[k] = sys.C @ states[k]
        measured[k] = inject_attack(clean[k], attack, k)
        if k < K:
            states[k + 1] = sys.step(states[k], U[k])

    logger.debug(f"Simulated {K} steps (n={sys.n}, q={sys.q}, attacked={list(attack.gamma)})")
    return Trajectory(
        states=_frozen(states),
        inputs=_frozen(U),
        clean_outputs=_frozen(clean),
        measured_outputs=_frozen(measured),
        gamma=attack.gamma,
    )


def constant_inputs(value: Union[float, Sequence[float]], K: int) -> np.ndarray:
    u = np.atleast_1d(np.array(value, dtype=float))
    return np.tile(u, (K, 1))


def inputs_from_callable(fn: Callable[[int], Sequence[float]], K: int, p: int) -> np.ndarray:
    U = np.zeros((K, p))
    for k in range(K):
        U[k] = np.atleast_1d(np.array(fn(k), dtype=float))
    return U
