"""
Attack sequences that defeat the two reconstructors, and their checkers.

Both synthesizers pose the defeat conditions as a homogeneous linear system
in the attack values z (supported on the true attacked set over the
certified steps), take its null space and pick the direction that
maximizes the induced estimate bias, scaled to unit norm.
"""
import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import null_space, svd

from securestate.config import settings
from securestate.errors import DimensionError, PreconditionError
from securestate.services.combinat import choose, enumerate_subsets, subset_ordinal
from securestate.services.linsys import AttackScenario, LinearSystem
from securestate.services.observability import (
    ObservabilityAnalyzer,
    Subset,
    build_stacked,
    kept_sensors,
)
from securestate.services.reconstruct import left_inverse

logger = logging.getLogger(__name__)

SESVS = "SESVS"
SESGC = "SESGC"


@dataclass(frozen=True, eq=False)
class StackedAttack:
    """a_{k−r+1}(Υ) … a_k(Υ): attack values on the sensors kept by the deleted set Υ"""

    subset: Subset
    values: np.ndarray
    k: int
    r: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(values)):
            raise DimensionError("stacked attack has non-finite entries")
        object.__setattr__(self, "subset", tuple(sorted(self.subset)))
        object.__setattr__(self, "values", values)


def stack_attack(attack: AttackScenario, q: int, subset: Sequence[int], k: int, r: int) -> StackedAttack:
    attack.validate_for(q)
    kept = kept_sensors(q, subset)
    if k - r + 1 < 0:
        raise DimensionError(f"window end k={k} is earlier than r-1={r - 1}")
    values = []
    for step in range(k - r + 1, k + 1):
        a = attack.vector(step, q)
        values.extend(a[i - 1] for i in kept)
    return StackedAttack(subset=tuple(subset), values=np.array(values), k=k, r=r)


@dataclass(eq=False)
class DefeatCertificate:
    target_method: str
    gamma: Subset
    k: int
    r: int
    subsets: List[Subset]
    bias: np.ndarray
    attacks: List[StackedAttack]
    values: Dict[Tuple[int, int], float]
    tau: int = 1
    rounds: int = 0
    families_tried: int = 1
    ordinals: List[int] = field(default_factory=list)

    @property
    def steps(self) -> Tuple[int, int]:
        return self.k - self.r + 1, self.k + self.rounds

    def attack_scenario(self) -> AttackScenario:
        """Injects the certified values on the true attacked set, zero outside the certified steps"""
        return AttackScenario.from_table(self.gamma, self.values)


class DefeatCheck(NamedTuple):
    holds: bool
    bias: np.ndarray


def _is_zero(vector: np.ndarray, zero_tol: float) -> bool:
    return float(np.linalg.norm(vector)) <= zero_tol


def _agree(a: np.ndarray, b: np.ndarray, tol_rel: float, zero_tol: float) -> bool:
    scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)))
    return float(np.linalg.norm(a - b)) <= max(tol_rel * scale, zero_tol)


def _operators(sys: LinearSystem, subset: Sequence[int], r: int, length: int):
    ops = build_stacked(sys, subset, r)
    if length != ops.O.shape[0]:
        raise DimensionError(
            f"stacked attack for deleted {list(ops.subset)} has length {length}, expected r·(q−|Υ|) = {ops.O.shape[0]}"
        )
    return ops


def check_sesvs_defeat(
    sys: LinearSystem,
    r: int,
    subsets: Sequence[Sequence[int]],
    attacks: Sequence[StackedAttack],
    tau: int = 1,
) -> DefeatCheck:
    """
    True iff L_{Υ₁}A_{k,Υ₁} = L_{Υρ}A_{k,Υρ} for every ρ and the common value is nonzero.

    ``subsets`` are the C(q−s, τ) hypotheses of size s+τ; the common value is
    the offset the defeated cluster carries away from the true state.
    """
    if len(subsets) != len(attacks) or not subsets:
        raise DimensionError(f"got {len(subsets)} subsets and {len(attacks)} stacked attacks")
    sizes = {len(subset) for subset in subsets}
    if len(sizes) != 1:
        raise DimensionError(f"defeat family mixes subset sizes {sorted(sizes)}")
    m = sizes.pop()
    s = m - tau
    if s < 0:
        raise DimensionError(f"subset size {m} is smaller than tau={tau}")
    expected = choose(sys.q - s, tau)
    if len(subsets) != expected:
        raise DimensionError(f"a defeat family for q={sys.q}, s={s}, tau={tau} has {expected} subsets, got {len(subsets)}")

    biases = []
    for subset, attack in zip(subsets, attacks):
        if tuple(sorted(subset)) != attack.subset:
            raise DimensionError(f"stacked attack for {list(attack.subset)} paired with subset {list(subset)}")
        ops = _operators(sys, subset, r, attack.values.shape[0])
        biases.append(left_inverse(ops) @ attack.values)

    bias = biases[0]
    if _is_zero(bias, settings.defeat_zero_tol):
        return DefeatCheck(False, bias)
    holds = all(_agree(bias, other, settings.defeat_tol_rel, settings.defeat_zero_tol) for other in biases[1:])
    return DefeatCheck(holds, bias)


def check_sesgc_defeat(sys: LinearSystem, v_subset: Sequence[int], attacks: Sequence[StackedAttack]) -> DefeatCheck:
    """
    True iff w₀ = L_{Γv}A_{k,Γv} ≠ 0 and w_ρ = A·w_{ρ−1} for every later window.

    ``attacks`` holds the stacked attacks for the windows ending at k, k+1, …, k+ς.
    """
    if not attacks:
        raise DimensionError("need the stacked attack of at least the first window")
    v = tuple(sorted(v_subset))
    r = attacks[0].r
    for attack in attacks:
        if attack.subset != v or attack.r != r:
            raise DimensionError(f"stacked attack for {list(attack.subset)} at r={attack.r} does not belong to v={list(v)}, r={r}")
    ops = _operators(sys, v, r, attacks[0].values.shape[0])
    for attack in attacks[1:]:
        if attack.values.shape[0] != ops.O.shape[0]:
            raise DimensionError(f"stacked attack has length {attack.values.shape[0]}, expected {ops.O.shape[0]}")
    L = left_inverse(ops)
    biases = [L @ attack.values for attack in attacks]
    if _is_zero(biases[0], settings.defeat_zero_tol):
        return DefeatCheck(False, biases[0])
    holds = all(
        _agree(current, sys.A @ previous, settings.defeat_tol_rel, settings.defeat_zero_tol)
        for previous, current in zip(biases, biases[1:])
    )
    return DefeatCheck(holds, biases[0])


class _Unknowns:
    """Index map z ↔ a_{step, sensor} for the attackable (step, sensor) pairs"""

    def __init__(self, steps: Sequence[int], sensors: Sequence[int]):
        self.steps = list(steps)
        self.sensors = list(sensors)
        self.index = {(step, i): n for n, (step, i) in enumerate((step, i) for step in self.steps for i in self.sensors)}

    @property
    def size(self) -> int:
        return len(self.index)

    def selector(self, q: int, subset: Sequence[int], first: int, last: int) -> np.ndarray:
        """Maps z to the stacked attack over steps first..last on the sensors kept by ``subset``"""
        kept = kept_sensors(q, subset)
        S = np.zeros(((last - first + 1) * len(kept), self.size))
        for t, step in enumerate(range(first, last + 1)):
            for row, i in enumerate(kept):
                column = self.index.get((step, i))
                if column is not None:
                    S[t * len(kept) + row, column] = 1.0
        return S

    def table(self, z: np.ndarray) -> Dict[Tuple[int, int], float]:
        return {key: float(z[n]) for key, n in self.index.items()}


def _best_direction(constraints: Optional[np.ndarray], bias_map: np.ndarray) -> Optional[np.ndarray]:
    """Unit-bias z in the null space of ``constraints`` maximizing ‖bias_map z‖, or None if only z = 0 is left"""
    size = bias_map.shape[1]
    N = np.eye(size) if constraints is None or constraints.size == 0 else null_space(constraints)
    if N.shape[1] == 0:
        return None
    projected = bias_map @ N
    if projected.size == 0:
        return None
    _, sigma, Vt = svd(projected)
    scale = max(1.0, float(np.linalg.norm(bias_map, 2)))
    if sigma.size == 0 or sigma[0] <= settings.defeat_zero_tol * scale:
        return None
    z = N @ Vt[0]
    bias = bias_map @ z
    z = z / np.linalg.norm(bias)
    bias = bias_map @ z
    pivot = int(np.argmax(np.abs(bias)))
    if bias[pivot] < 0:
        z = -z
    return z


def synthesize_sesvs_defeat(
    sys: LinearSystem,
    r: Optional[int],
    true_gamma: Sequence[int],
    k: int,
    exhaustive: bool = False,
    analyzer: Optional[ObservabilityAnalyzer] = None,
) -> Optional[DefeatCertificate]:
    """
    Search q−s hypotheses of size s+1 that share one nonzero estimate offset.

    Hypotheses containing the whole true set delete every attacked sensor and
    always recover the true state, so the family is drawn from the others.
    Families are tried in canonical order; the first feasible one wins.
    """
    gamma = tuple(sorted(true_gamma))
    s = len(gamma)
    if not gamma:
        logger.info("[defeat:SESVS] empty attacked set, nothing to synthesize")
        return None
    if sys.q < s + 2:
        raise PreconditionError(f"same-value search needs q >= s+2 = {s + 2}, system has q={sys.q}")
    AttackScenario(gamma=gamma).validate_for(sys.q)
    analyzer = analyzer or ObservabilityAnalyzer(sys)
    r = analyzer.lower_bound(s + 1) if r is None else r
    if k - r + 1 < 0:
        raise DimensionError(f"window end k={k} is earlier than r-1={r - 1}")

    unknowns = _Unknowns(range(k - r + 1, k + 1), gamma)
    pool = []
    for index in enumerate_subsets(sys.q, s + 1):
        if set(gamma) <= set(index.subset):
            continue
        ops = build_stacked(sys, index.subset, r)
        if not ops.full_rank:
            logger.debug(f"[defeat:SESVS] skipping rank-deficient hypothesis {list(index.subset)} at r={r}")
            continue
        pool.append((index.subset, left_inverse(ops) @ unknowns.selector(sys.q, index.subset, k - r + 1, k)))

    family_size = sys.q - s
    limit = None if exhaustive else settings.max_defeat_families
    tried = 0
    for family in combinations(pool, family_size):
        if limit is not None and tried >= limit:
            logger.warning(f"[defeat:SESVS] stopped after {limit} families; pass exhaustive=True to search all")
            break
        tried += 1
        first = family[0][1]
        constraints = np.vstack([first - M for _, M in family[1:]]) if len(family) > 1 else None
        z = _best_direction(constraints, first)
        if z is None:
            continue
        subsets = [subset for subset, _ in family]
        values = unknowns.table(z)
        scenario = AttackScenario.from_table(gamma, values)
        logger.info(f"[defeat:SESVS] family {[list(S) for S in subsets]} feasible after {tried} tries")
        return DefeatCertificate(
            target_method=SESVS,
            gamma=gamma,
            k=k,
            r=r,
            subsets=subsets,
            bias=first @ z,
            attacks=[stack_attack(scenario, sys.q, subset, k, r) for subset in subsets],
            values=values,
            families_tried=tried,
            ordinals=[subset_ordinal(sys.q, subset) for subset in subsets],
        )

    logger.info(f"[defeat:SESVS] no feasible family among {tried} tried for attacked set {list(gamma)}")
    return None


def synthesize_sesgc_defeat(
    sys: LinearSystem,
    true_gamma: Sequence[int],
    k: int,
    rounds: int,
    r: Optional[int] = None,
    analyzer: Optional[ObservabilityAnalyzer] = None,
) -> Optional[DefeatCertificate]:
    """
    Find a wrong hypothesis v whose estimate offset w obeys w ↦ A·w for ``rounds`` windows.

    The offset then passes every dynamics check, so v survives alongside the
    true hypothesis. v ranges over the size-s sets other than the true one;
    the true set deletes every attacked sensor and has zero offset.
    """
    gamma = tuple(sorted(true_gamma))
    s = len(gamma)
    if rounds < 0:
        raise PreconditionError(f"rounds must be >= 0, got {rounds}")
    if not gamma:
        logger.info("[defeat:SESGC] empty attacked set, nothing to synthesize")
        return None
    AttackScenario(gamma=gamma).validate_for(sys.q)
    analyzer = analyzer or ObservabilityAnalyzer(sys)
    r = analyzer.lower_bound(s) if r is None else r
    if k - r + 1 < 0:
        raise DimensionError(f"window end k={k} is earlier than r-1={r - 1}")

    tried = 0
    for index in enumerate_subsets(sys.q, s):
        v = index.subset
        attacked_kept = [i for i in kept_sensors(sys.q, v) if i in gamma]
        if v == gamma or not attacked_kept:
            continue
        ops = build_stacked(sys, v, r)
        if not ops.full_rank:
            logger.debug(f"[defeat:SESGC] skipping rank-deficient hypothesis {list(v)} at r={r}")
            continue
        tried += 1
        L = left_inverse(ops)
        unknowns = _Unknowns(range(k - r + 1, k + rounds + 1), attacked_kept)
        maps = [L @ unknowns.selector(sys.q, v, k + rho - r + 1, k + rho) for rho in range(rounds + 1)]
        constraints = np.vstack([maps[rho] - sys.A @ maps[rho - 1] for rho in range(1, rounds + 1)]) if rounds else None
        z = _best_direction(constraints, maps[0])
        if z is None:
            logger.debug(f"[defeat:SESGC] hypothesis {list(v)} admits only the zero attack")
            continue
        values = unknowns.table(z)
        scenario = AttackScenario.from_table(gamma, values)
        logger.info(f"[defeat:SESGC] hypothesis {list(v)} (ordinal {index.ordinal}) survives {rounds} rounds")
        return DefeatCertificate(
            target_method=SESGC,
            gamma=gamma,
            k=k,
            r=r,
            subsets=[v],
            bias=maps[0] @ z,
            attacks=[stack_attack(scenario, sys.q, v, k + rho, r) for rho in range(rounds + 1)],
            values=values,
            rounds=rounds,
            families_tried=tried,
            ordinals=[index.ordinal],
        )

    logger.info(f"[defeat:SESGC] no wrong hypothesis can survive {rounds} rounds against attacked set {list(gamma)}")
    return None
