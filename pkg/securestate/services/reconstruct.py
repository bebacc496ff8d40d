"""
Candidate-state reconstruction over sensor-subset hypotheses.

Every size-m hypothesis Γ_j deletes the sensors it names and solves the
stacked least-squares problem O x = Y − D U for x_{k−r+1}.  Two decoders
sit on top of the resulting candidate family:

- ``sesvs_reconstruct`` groups the size-(s+τ) candidates into clusters of
  equal value and accepts the cluster holding at least C(q−s, τ) members.
- ``sesgc_reconstruct`` keeps the size-s candidates whose implied states
  obey x_{k+1} = A x_k + B u_k as the window slides forward.
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
from scipy.linalg import lstsq
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from securestate.config import settings
from securestate.errors import DimensionError, NotSparseObservableError, PreconditionError, WindowError
from securestate.services.combinat import choose, enumerate_subsets, sesvs_guarantee_holds
from securestate.services.linsys import LinearSystem, Measurements
from securestate.services.observability import (
    MeasurementWindow,
    ObservabilityAnalyzer,
    StackedOperators,
    Subset,
    build_stacked,
    stack_measurements,
)

logger = logging.getLogger(__name__)

RANK_POLICIES = ("raise_r", "skip")


class Outcome(str, Enum):
    UNIQUE = "unique"
    AMBIGUOUS = "ambiguous"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True, eq=False)
class Candidate:
    ordinal: int
    subset: Subset
    estimate: np.ndarray
    solver_ok: bool
    rank: int


@dataclass(eq=False)
class CandidateSet:
    candidates: List[Candidate]
    k: int
    r: int
    subset_size: int

    def __len__(self) -> int:
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    def by_ordinal(self, ordinal: int) -> Candidate:
        return self.candidates[ordinal - 1]

    @property
    def deficient(self) -> List[int]:
        return [c.ordinal for c in self.candidates if not c.solver_ok]

    @property
    def estimates(self) -> np.ndarray:
        return np.vstack([c.estimate for c in self.candidates])


@dataclass(eq=False)
class Cluster:
    members: List[int]
    representative: np.ndarray
    spread: float

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(eq=False)
class ReconstructionReport:
    outcome: Outcome
    method: str
    k: int
    r: int
    state: Optional[np.ndarray] = None
    representatives: List[np.ndarray] = field(default_factory=list)
    candidates: Optional[CandidateSet] = None
    clusters: List[Cluster] = field(default_factory=list)
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    elapsed: float = 0.0

    @property
    def start(self) -> int:
        """The reconstructed step k − r + 1"""
        return self.k - self.r + 1

    @property
    def window_used(self) -> Tuple[int, int]:
        return self.k, self.r

    @property
    def is_unique(self) -> bool:
        return self.outcome == Outcome.UNIQUE


def left_inverse(ops: StackedOperators) -> np.ndarray:
    """L = (OᵀO)⁻¹Oᵀ at full column rank; the pseudo-inverse otherwise"""
    return np.linalg.pinv(ops.O)


def solve_candidate(ops: StackedOperators, win: MeasurementWindow, ordinal: int = 0) -> Candidate:
    if ops.subset != win.subset or ops.r != win.r:
        raise DimensionError(
            f"operators (subset={list(ops.subset)}, r={ops.r}) do not match window "
            f"(subset={list(win.subset)}, r={win.r})"
        )
    if win.Y.shape[0] != ops.O.shape[0] or win.U.shape[0] != ops.D.shape[1]:
        raise DimensionError(f"window lengths Y={win.Y.shape[0]}, U={win.U.shape[0]} do not fit O={ops.O.shape}, D={ops.D.shape}")
    rhs = win.Y - ops.D @ win.U if ops.D.size else win.Y
    estimate, _, _, _ = lstsq(ops.O, rhs, lapack_driver="gelsy")
    solver_ok = ops.full_rank and bool(np.all(np.isfinite(estimate)))
    return Candidate(ordinal=ordinal, subset=ops.subset, estimate=estimate, solver_ok=solver_ok, rank=ops.rank)


class CandidateSolver:
    """
    Solves every size-m hypothesis for a fixed window length r.

    The stacked operators depend only on (subset, r), so they are built once
    and reused as the window end k slides.
    """

    def __init__(self, sys: LinearSystem, meas: Measurements, m: int, r: int, workers: Optional[int] = None):
        if not 0 <= m < sys.q:
            raise DimensionError(f"hypothesis size m must lie in 0..{sys.q - 1}, got {m}")
        if meas.outputs.shape[1] != sys.q:
            raise DimensionError(f"measurements have {meas.outputs.shape[1]} sensors, system has q={sys.q}")
        self.sys = sys
        self.meas = meas
        self.m = m
        self.r = r
        self.workers = workers or settings.max_workers
        self.subsets = [index.subset for index in enumerate_subsets(sys.q, m)]
        self.operators = [build_stacked(sys, subset, r) for subset in self.subsets]
        self.solves = 0

    @property
    def deficient(self) -> List[int]:
        return [ordinal for ordinal, ops in enumerate(self.operators, start=1) if not ops.full_rank]

    def _solve(self, item: Tuple[int, StackedOperators], k: int) -> Candidate:
        ordinal, ops = item
        return solve_candidate(ops, stack_measurements(self.meas, ops.subset, k, self.r), ordinal)

    def at(self, k: int) -> CandidateSet:
        items = list(enumerate(self.operators, start=1))
        if self.workers > 1 and len(items) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                candidates = list(pool.map(lambda item: self._solve(item, k), items))
        else:
            candidates = [self._solve(item, k) for item in items]
        candidates.sort(key=lambda c: c.ordinal)
        self.solves += len(candidates)
        return CandidateSet(candidates=candidates, k=k, r=self.r, subset_size=self.m)


def candidate_set(
    sys: LinearSystem,
    meas: Measurements,
    k: int,
    r: int,
    m: int,
    workers: Optional[int] = None,
) -> CandidateSet:
    """X(k, r) for m = s, Y_τ(k, r) for m = s + τ"""
    return CandidateSolver(sys, meas, m, r, workers).at(k)


def _close(estimates: np.ndarray, eq_tol_abs: float, eq_tol_rel: float) -> np.ndarray:
    diff = np.abs(estimates[:, None, :] - estimates[None, :, :])
    magnitude = np.abs(estimates)
    scale = np.maximum(magnitude[:, None, :], magnitude[None, :, :])
    return np.all(diff <= eq_tol_abs + eq_tol_rel * scale, axis=2)


def cluster_candidates(
    candidates: Sequence[Candidate],
    eq_tol_abs: Optional[float] = None,
    eq_tol_rel: Optional[float] = None,
) -> List[Cluster]:
    """
    Single-linkage clusters of the well-posed candidates.

    Two estimates are linked when every coordinate satisfies
    |a − b| <= eq_tol_abs + eq_tol_rel · max(|a|, |b|); clusters are the
    connected components of that graph, ordered by their smallest ordinal.
    """
    eq_tol_abs = settings.eq_tol_abs if eq_tol_abs is None else eq_tol_abs
    eq_tol_rel = settings.eq_tol_rel if eq_tol_rel is None else eq_tol_rel
    usable = sorted((c for c in candidates if c.solver_ok), key=lambda c: c.ordinal)
    if not usable:
        return []
    estimates = np.vstack([c.estimate for c in usable])
    graph = csr_matrix(_close(estimates, eq_tol_abs, eq_tol_rel))
    count, labels = connected_components(graph, directed=False)

    clusters = []
    for label in range(count):
        idx = np.flatnonzero(labels == label)
        block = estimates[idx]
        clusters.append(
            Cluster(
                members=[usable[i].ordinal for i in idx],
                representative=block.mean(axis=0),
                spread=float(np.max(block.max(axis=0) - block.min(axis=0))),
            )
        )
    clusters.sort(key=lambda c: c.members[0])
    return clusters


def _check_policy(rank_policy: str) -> None:
    if rank_policy not in RANK_POLICIES:
        raise PreconditionError(f"rank_policy must be one of {RANK_POLICIES}, got {rank_policy!r}")


def _window_length(analyzer: ObservabilityAnalyzer, m: int, r: Optional[int], diagnostics: Dict[str, Any], tag: str) -> int:
    """
    r defaults to the m-sparse observable lower bound.  With r given, a
    system that is not m-sparse observable is still searched: hypotheses
    that stay unobservable at every r are excluded like rank-deficient ones.
    """
    report = analyzer.report(m)
    diagnostics["lower_bound"] = report.lower_bound_b
    diagnostics["unobservable"] = report.unobservable
    if report.observable:
        return report.lower_bound_b if r is None else r
    if r is None:
        raise NotSparseObservableError(m, report.failing_subset)
    logger.warning(
        f"[{tag}] not {m}-sparse observable; hypotheses {report.unobservable} are unobservable at every r and are excluded"
    )
    return r


def _solver_with_fallback(
    sys: LinearSystem,
    meas: Measurements,
    k: int,
    r: int,
    m: int,
    rank_policy: str,
    workers: Optional[int],
    diagnostics: Dict[str, Any],
    tag: str,
) -> Tuple[CandidateSolver, int]:
    """
    Build the solver at window r; on rank-deficient hypotheses under
    ``raise_r`` retry at r+1 with the reconstructed step k−r+1 held fixed.
    Hypotheses no window can make observable never trigger a retry.
    """
    never = set(diagnostics.get("unobservable", []))
    solver = CandidateSolver(sys, meas, m, r, workers)
    fallbacks = []
    while rank_policy == "raise_r" and set(solver.deficient) - never:
        if r >= sys.n:
            logger.warning(f"[{tag}] hypotheses {solver.deficient} stay rank deficient at r={r}; excluding them")
            break
        if k + 1 > meas.last_step:
            logger.warning(f"[{tag}] cannot extend window past step {meas.last_step}; excluding {solver.deficient}")
            break
        logger.warning(f"[{tag}] hypotheses {solver.deficient} rank deficient at r={r}; retrying at r={r + 1}")
        fallbacks.append({"from_r": r, "to_r": r + 1, "deficient": solver.deficient})
        k, r = k + 1, r + 1
        solver = CandidateSolver(sys, meas, m, r, workers)
    if solver.deficient:
        logger.debug(f"[{tag}] excluded rank-deficient hypotheses {solver.deficient} at r={r}")
    diagnostics["fallbacks"] = fallbacks
    diagnostics["excluded"] = solver.deficient
    return solver, k


def sesvs_reconstruct(
    sys: LinearSystem,
    meas: Measurements,
    k: int,
    s: int,
    tau: int = 1,
    eq_tol_abs: Optional[float] = None,
    eq_tol_rel: Optional[float] = None,
    r: Optional[int] = None,
    rank_policy: str = "raise_r",
    workers: Optional[int] = None,
    analyzer: Optional[ObservabilityAnalyzer] = None,
) -> ReconstructionReport:
    """
    Same-value search over the C(q, s+τ) hypotheses.

    Unique when exactly one cluster has at least C(q−s, τ) members,
    Ambiguous when several do and Infeasible when none does.
    """
    started = time.perf_counter()
    _check_policy(rank_policy)
    if s < 0 or tau < 1:
        raise PreconditionError(f"need s >= 0 and tau >= 1, got s={s}, tau={tau}")
    m = s + tau
    if sys.q < m + 1:
        raise PreconditionError(
            f"same-value search needs q >= s+tau+1 = {m + 1} sensors, system has q={sys.q}; "
            f"the system cannot be {m}-sparse observable",
            [{"field": "method.s", "message": "(s+tau)-sparse observability cannot hold", "q": sys.q, "s": s, "tau": tau}],
        )
    analyzer = analyzer or ObservabilityAnalyzer(sys, workers)
    threshold = choose(sys.q - s, tau)
    guarantee = sesvs_guarantee_holds(sys.q, s, tau)
    diagnostics: Dict[str, Any] = {"threshold": threshold, "guarantee": guarantee}
    r = _window_length(analyzer, m, r, diagnostics, "SESVS")
    solver, k = _solver_with_fallback(sys, meas, k, r, m, rank_policy, workers, diagnostics, "SESVS")
    r = solver.r
    cset = solver.at(k)
    clusters = cluster_candidates(cset.candidates, eq_tol_abs, eq_tol_rel)
    qualifying = [c for c in clusters if c.size >= threshold]
    diagnostics["solves"] = solver.solves
    diagnostics["qualifying"] = [c.members for c in qualifying]

    method = f"SESVS(tau={tau})"
    if len(qualifying) == 1:
        outcome = Outcome.UNIQUE
        state = qualifying[0].representative
    elif len(qualifying) > 1:
        outcome = Outcome.AMBIGUOUS
        state = None
        if guarantee:
            logger.warning(f"[SESVS] {len(qualifying)} qualifying clusters although the majority rule holds; check eq_tol")
    else:
        outcome = Outcome.INFEASIBLE
        state = None

    logger.info(
        f"[SESVS] k={k}, r={r}, {len(cset)} candidates, {len(clusters)} clusters, "
        f"threshold {threshold}: {outcome.value}"
    )
    return ReconstructionReport(
        outcome=outcome,
        method=method,
        k=k,
        r=r,
        state=state,
        representatives=[c.representative for c in qualifying],
        candidates=cset,
        clusters=clusters,
        diagnostics=diagnostics,
        elapsed=time.perf_counter() - started,
    )


def _residual(sys: LinearSystem, meas: Measurements, current: np.ndarray, previous: np.ndarray, step: int) -> np.ndarray:
    predicted = sys.A @ previous
    if sys.p:
        predicted = predicted + sys.B @ meas.input_at(step, sys.p)
    return current - predicted


def sesgc_reconstruct(
    sys: LinearSystem,
    meas: Measurements,
    k: int,
    s: int,
    r: Optional[int] = None,
    residual_tol: Optional[float] = None,
    max_rounds: Optional[int] = None,
    eq_tol_abs: Optional[float] = None,
    eq_tol_rel: Optional[float] = None,
    rank_policy: str = "raise_r",
    workers: Optional[int] = None,
    analyzer: Optional[ObservabilityAnalyzer] = None,
) -> ReconstructionReport:
    """
    Dynamics-consistency search over the C(q, s) hypotheses.

    Round ς keeps the hypotheses j in D_{ς−1} with
    ‖x^{(j)}_{k−r+1+ς} − A x^{(j)}_{k−r+ς} − B u_{k−r+ς}‖₂ <= residual_tol
    and stops as soon as the surviving first-window estimates agree.
    """
    started = time.perf_counter()
    _check_policy(rank_policy)
    residual_tol = settings.residual_tol if residual_tol is None else residual_tol
    max_rounds = sys.n + 5 if max_rounds is None else max_rounds
    if max_rounds < 0:
        raise PreconditionError(f"max_rounds must be >= 0, got {max_rounds}")
    analyzer = analyzer or ObservabilityAnalyzer(sys, workers)
    diagnostics: Dict[str, Any] = {"residual_tol": residual_tol, "rounds": []}
    r = _window_length(analyzer, s, r, diagnostics, "SESGC")
    solver, k = _solver_with_fallback(sys, meas, k, r, s, rank_policy, workers, diagnostics, "SESGC")
    r = solver.r
    first = solver.at(k)
    survivors: Set[int] = {c.ordinal for c in first if c.solver_ok}
    diagnostics["initial"] = sorted(survivors)

    def surviving_clusters() -> List[Cluster]:
        return cluster_candidates([first.by_ordinal(j) for j in sorted(survivors)], eq_tol_abs, eq_tol_rel)

    previous = first
    rounds = 0
    clusters = surviving_clusters()
    outcome = None
    while survivors and len(clusters) > 1:
        if rounds >= max_rounds:
            logger.warning(f"[SESGC] max_rounds={max_rounds} reached with {len(clusters)} distinct survivors")
            break
        if k + rounds + 1 > meas.last_step:
            logger.warning(f"[SESGC] measurements exhausted at step {meas.last_step} with {len(clusters)} distinct survivors")
            diagnostics["exhausted"] = True
            break
        rounds += 1
        current = solver.at(k + rounds)
        step = k - r + rounds
        residuals = {
            j: float(np.linalg.norm(_residual(sys, meas, current.by_ordinal(j).estimate, previous.by_ordinal(j).estimate, step)))
            for j in sorted(survivors)
        }
        survivors = {j for j, norm in residuals.items() if norm <= residual_tol}
        diagnostics["rounds"].append({"round": rounds, "survivors": sorted(survivors), "residuals": residuals})
        logger.info(f"[SESGC] round {rounds}: {len(survivors)} survivors {sorted(survivors)}")
        previous = current
        clusters = surviving_clusters()

    if not survivors:
        outcome = Outcome.INFEASIBLE
    elif len(clusters) == 1:
        outcome = Outcome.UNIQUE
    else:
        outcome = Outcome.AMBIGUOUS

    diagnostics["survivors"] = sorted(survivors)
    diagnostics["solves"] = solver.solves
    state = clusters[0].representative if outcome == Outcome.UNIQUE else None
    logger.info(f"[SESGC] k={k}, r={r}, rounds={rounds}: {outcome.value}")
    return ReconstructionReport(
        outcome=outcome,
        method=f"SESGC(rounds={rounds})",
        k=k,
        r=r,
        state=state,
        representatives=[c.representative for c in clusters] if survivors else [],
        candidates=first,
        clusters=clusters,
        diagnostics=diagnostics,
        elapsed=time.perf_counter() - started,
    )


def known_support_reconstruct(
    sys: LinearSystem,
    meas: Measurements,
    k: int,
    gamma: Sequence[int],
    r: Optional[int] = None,
) -> ReconstructionReport:
    """Single solve with the attacked set known: delete Γ and invert the stack"""
    started = time.perf_counter()
    analyzer = ObservabilityAnalyzer(sys)
    gamma = tuple(sorted(gamma))
    min_r = analyzer.min_r(gamma)
    if min_r is None:
        raise NotSparseObservableError(len(gamma), gamma)
    r = min_r if r is None else r
    ops = build_stacked(sys, gamma, r)
    if not ops.full_rank:
        raise WindowError(f"window r={r} is below the minimal full-rank window {min_r} for deleted {list(gamma)}")
    candidate = solve_candidate(ops, stack_measurements(meas, gamma, k, r), ordinal=1)
    logger.info(f"[known] deleted {list(gamma)}, k={k}, r={r}: {candidate.estimate}")
    return ReconstructionReport(
        outcome=Outcome.UNIQUE,
        method="known",
        k=k,
        r=r,
        state=candidate.estimate,
        representatives=[candidate.estimate],
        candidates=CandidateSet(candidates=[candidate], k=k, r=r, subset_size=len(gamma)),
        diagnostics={"lower_bound": min_r, "solves": 1, "left_inverse": left_inverse(ops)},
        elapsed=time.perf_counter() - started,
    )
