"""
Stacked observation operators for deleted-row sensor subsets.

For a deleted index set S (the hypothesised attacked sensors) and window r,

    Y_{k,S} = O_S x_{k-r+1} + D_S U_{k-1}

where O_S stacks C(S) A^i and D_S is the block lower-triangular input
convolution. Rank decisions everywhere go through ``numerical_rank`` so
the sparse-observability certificate and the candidate solver agree.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from securestate.config import settings
from securestate.errors import DimensionError, NotSparseObservableError, WindowError
from securestate.services.combinat import enumerate_subsets, sesvs_guarantee_holds
from securestate.services.linsys import LinearSystem, Measurements, Trajectory

logger = logging.getLogger(__name__)

Subset = Tuple[int, ...]


def rank_tolerance(M: np.ndarray, singular_values: Optional[np.ndarray] = None) -> float:
    if M.size == 0:
        return 0.0
    if singular_values is None:
        singular_values = np.linalg.svd(M, compute_uv=False)
    sigma_max = singular_values[0] if singular_values.size else 0.0
    return max(M.shape) * sigma_max * np.finfo(float).eps * settings.rank_tol_scale


def numerical_rank(M: np.ndarray) -> int:
    """Number of singular values above max(rows, cols) · σ_max · ε · rank_tol_scale"""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0
    singular_values = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(singular_values > rank_tolerance(M, singular_values)))


def _normalize_subset(S: Sequence[int], count: int) -> Subset:
    subset = tuple(sorted(int(i) for i in S))
    if len(set(subset)) != len(subset):
        raise DimensionError(f"index set {list(S)} has duplicates")
    bad = [i for i in subset if i < 1 or i > count]
    if bad:
        raise DimensionError(
            f"row indices {bad} out of range 1..{count}",
            [{"field": "subset", "message": "index out of range", "value": bad}],
        )
    return subset


def kept_sensors(q: int, S: Sequence[int]) -> Subset:
    deleted = set(_normalize_subset(S, q))
    return tuple(i for i in range(1, q + 1) if i not in deleted)


def delete_rows(M: np.ndarray, S: Sequence[int]) -> np.ndarray:
    """M(S): M with the (1-based) rows in S removed, order preserved"""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    subset = _normalize_subset(S, M.shape[0])
    if not subset:
        return M.copy()
    return np.delete(M, [i - 1 for i in subset], axis=0)


@dataclass(frozen=True, eq=False)
class StackedOperators:
    O: np.ndarray
    D: np.ndarray
    r: int
    subset: Subset
    kept: Subset
    n: int

    @cached_property
    def rank(self) -> int:
        return numerical_rank(self.O)

    @property
    def full_rank(self) -> bool:
        return self.rank == self.n


def build_stacked(sys: LinearSystem, S: Sequence[int], r: int) -> StackedOperators:
    if r < 1:
        raise WindowError(f"window length r must be >= 1, got {r}")
    subset = _normalize_subset(S, sys.q)
    if len(subset) >= sys.q:
        raise DimensionError(
            f"deleting all {sys.q} sensors leaves no measurements",
            [{"field": "subset", "message": "cannot delete the full sensor set", "value": list(subset)}],
        )
    C_S = delete_rows(sys.C, subset)
    rows = C_S.shape[0]

    powers = [np.eye(sys.n)]
    for _ in range(1, r):
        powers.append(powers[-1] @ sys.A)
    O = np.vstack([C_S @ Ai for Ai in powers])

    D = np.zeros((r * rows, (r - 1) * sys.p))
    if sys.p:
        markov = [C_S @ Ai @ sys.B for Ai in powers[: max(r - 1, 0)]]
        for i in range(1, r):
            for j in range(i):
                D[i * rows:(i + 1) * rows, j * sys.p:(j + 1) * sys.p] = markov[i - j - 1]

    return StackedOperators(
        O=O,
        D=D,
        r=r,
        subset=subset,
        kept=kept_sensors(sys.q, subset),
        n=sys.n,
    )


def min_r_for_full_rank(sys: LinearSystem, S: Sequence[int]) -> Optional[int]:
    """Smallest r <= n with rank(O_S) = n, or None when (A, C(S)) is unobservable"""
    for r in range(1, sys.n + 1):
        if build_stacked(sys, S, r).full_rank:
            return r
    return None


@dataclass
class ObservabilityReport:
    s: int
    per_subset_min_r: Dict[Subset, Optional[int]] = field(default_factory=dict)

    @property
    def observable(self) -> bool:
        return all(r is not None for r in self.per_subset_min_r.values())

    @property
    def failing_subset(self) -> Optional[Subset]:
        for subset, r in self.per_subset_min_r.items():
            if r is None:
                return subset
        return None

    @property
    def lower_bound_b(self) -> Optional[int]:
        if not self.observable:
            return None
        return max(self.per_subset_min_r.values())

    @property
    def unobservable(self) -> List[int]:
        """Ordinals of the deletions that no window length makes observable"""
        return [ordinal for ordinal, r in enumerate(self.per_subset_min_r.values(), start=1) if r is None]

    @property
    def observable_bound(self) -> Optional[int]:
        """Largest minimal window over the deletions that are observable at all"""
        windows = [r for r in self.per_subset_min_r.values() if r is not None]
        return max(windows) if windows else None


class ObservabilityAnalyzer:
    """
    Per-system cache of minimal window lengths.

    The C(q, s) sweep is embarrassingly parallel; with ``workers > 1`` the
    subsets are mapped on a thread pool and collected in canonical order.
    """

    def __init__(self, sys: LinearSystem, workers: Optional[int] = None):
        self.sys = sys
        self.workers = workers or settings.max_workers
        self._min_r: Dict[Subset, Optional[int]] = {}
        self._reports: Dict[int, ObservabilityReport] = {}

    def min_r(self, S: Sequence[int]) -> Optional[int]:
        subset = _normalize_subset(S, self.sys.q)
        if subset not in self._min_r:
            self._min_r[subset] = min_r_for_full_rank(self.sys, subset)
            logger.debug(f"min r for deleted {list(subset)}: {self._min_r[subset]}")
        return self._min_r[subset]

    def report(self, s: int) -> ObservabilityReport:
        if not 0 <= s <= self.sys.q - 1:
            raise DimensionError(f"sparsity s must lie in 0..{self.sys.q - 1}, got {s}")
        if s in self._reports:
            return self._reports[s]
        subsets = [index.subset for index in enumerate_subsets(self.sys.q, s)]
        missing = [subset for subset in subsets if subset not in self._min_r]
        if self.workers > 1 and len(missing) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                for subset, r in zip(missing, pool.map(lambda S: min_r_for_full_rank(self.sys, S), missing)):
                    self._min_r[subset] = r
        report = ObservabilityReport(s=s, per_subset_min_r={subset: self.min_r(subset) for subset in subsets})
        self._reports[s] = report
        return report

    def is_s_sparse_observable(self, s: int) -> bool:
        return self.report(s).observable

    def lower_bound(self, s: int) -> int:
        report = self.report(s)
        if not report.observable:
            raise NotSparseObservableError(s, report.failing_subset)
        return report.lower_bound_b

    def s_max(self) -> Optional[int]:
        # (s+1)-sparse observability implies s-sparse observability
        best = None
        for s in range(self.sys.q):
            if not self.is_s_sparse_observable(s):
                break
            best = s
        return best


def is_s_sparse_observable(sys: LinearSystem, s: int) -> bool:
    return ObservabilityAnalyzer(sys).is_s_sparse_observable(s)


def sparse_observable_lower_bound(sys: LinearSystem, s: int) -> int:
    """b = max over size-s deletions of the minimal full-rank window; b <= n"""
    return ObservabilityAnalyzer(sys).lower_bound(s)


@dataclass
class GuaranteeRow:
    s: int
    tau: int
    sparse_observable: bool
    guarantee: bool
    lower_bound: Optional[int]


@dataclass
class SystemAudit:
    n: int
    q: int
    s_max: Optional[int]
    lower_bounds: Dict[int, int]
    guarantee_table: List[GuaranteeRow]


def audit_system(
    sys: LinearSystem,
    tau_max: Optional[int] = None,
    analyzer: Optional[ObservabilityAnalyzer] = None,
) -> SystemAudit:
    """s_max, the lower bound b for every s <= s_max, and the majority-rule table over (s, τ)"""
    analyzer = analyzer or ObservabilityAnalyzer(sys)
    s_max = analyzer.s_max()
    lower_bounds = {}
    if s_max is not None:
        lower_bounds = {s: analyzer.lower_bound(s) for s in range(s_max + 1)}
    table = []
    if s_max is not None:
        for s in range(s_max + 1):
            last_tau = sys.q - s - 1 if tau_max is None else min(tau_max, sys.q - s - 1)
            for tau in range(1, last_tau + 1):
                observable = s + tau <= s_max
                table.append(
                    GuaranteeRow(
                        s=s,
                        tau=tau,
                        sparse_observable=observable,
                        guarantee=sesvs_guarantee_holds(sys.q, s, tau),
                        lower_bound=lower_bounds.get(s + tau),
                    )
                )
    logger.info(f"Audit: n={sys.n}, q={sys.q}, s_max={s_max}, lower bounds={lower_bounds}")
    return SystemAudit(n=sys.n, q=sys.q, s_max=s_max, lower_bounds=lower_bounds, guarantee_table=table)


@dataclass(frozen=True, eq=False)
class MeasurementWindow:
    Y: np.ndarray
    U: np.ndarray
    r: int
    k: int
    subset: Subset


def _as_measurements(data: Union[Trajectory, Measurements]) -> Measurements:
    if isinstance(data, Trajectory):
        return data.measurements
    return data


def stack_measurements(
    data: Union[Trajectory, Measurements],
    S: Sequence[int],
    k: int,
    r: int,
) -> MeasurementWindow:
    """Y stacks y_j(S) for j = k-r+1..k; U stacks u_j for j = k-r+1..k-1"""
    meas = _as_measurements(data)
    if r < 1:
        raise WindowError(f"window length r must be >= 1, got {r}")
    if k < r - 1:
        raise WindowError(
            f"window end k={k} is earlier than r-1={r - 1}",
            [{"field": "k", "message": "k must be >= r - 1", "k": k, "r": r}],
        )
    if k > meas.last_step:
        raise WindowError(
            f"window end k={k} is past the last measurement step {meas.last_step}",
            [{"field": "k", "message": "insufficient trajectory length", "k": k, "available": meas.last_step}],
        )
    q = meas.outputs.shape[1]
    subset = _normalize_subset(S, q)
    start = k - r + 1
    outputs = meas.outputs[start:k + 1]
    Y = delete_rows(outputs.T, subset).T.reshape(-1)
    p = meas.inputs.shape[1]
    if p and r > 1:
        if meas.inputs.shape[0] < k:
            raise WindowError(f"inputs end at step {meas.inputs.shape[0] - 1}, window needs u up to {k - 1}")
        U = meas.inputs[start:k].reshape(-1)
    else:
        U = np.zeros((r - 1) * p)
    return MeasurementWindow(Y=Y, U=U, r=r, k=k, subset=subset)
