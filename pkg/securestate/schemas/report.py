"""
Schemas for audit, reconstruction and synthesis reports
"""
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class GuaranteeEntry(BaseModel):
    s: int
    tau: int
    sparse_observable: bool
    guarantee: bool
    lower_bound: Optional[int] = None


class AuditReport(BaseModel):
    n: int
    p: int
    q: int
    s_max: Optional[int] = None
    lower_bounds: Dict[int, int] = Field(default_factory=dict)
    guarantee_table: List[GuaranteeEntry] = Field(default_factory=list)


class CandidateEntry(BaseModel):
    ordinal: int
    subset: List[int]
    estimate: List[float]
    solver_ok: bool


class ClusterEntry(BaseModel):
    members: List[int]
    representative: List[float]
    spread: float


class RoundEntry(BaseModel):
    round: int
    survivors: List[int]
    residuals: Dict[int, float]


class FallbackEntry(BaseModel):
    from_r: int
    to_r: int
    deficient: List[int]


class MethodReport(BaseModel):
    """One reconstructor's outcome; ``skipped`` is set when its preconditions fail"""
    method: str
    outcome: str
    exit_code: int
    k: Optional[int] = None
    r: Optional[int] = None
    start: Optional[int] = None
    state: Optional[List[float]] = None
    representatives: List[List[float]] = Field(default_factory=list)
    lower_bound: Optional[int] = None
    threshold: Optional[int] = None
    guarantee: Optional[bool] = None
    solves: int = 0
    excluded: List[int] = Field(default_factory=list)
    unobservable: List[int] = Field(default_factory=list)
    fallbacks: List[FallbackEntry] = Field(default_factory=list)
    clusters: List[ClusterEntry] = Field(default_factory=list)
    rounds: List[RoundEntry] = Field(default_factory=list)
    survivors: List[int] = Field(default_factory=list)
    candidates: List[CandidateEntry] = Field(default_factory=list)
    skipped: Optional[str] = None


class RunReport(BaseModel):
    scenario: str
    command: str = "reconstruct"
    exit_code: int
    true_state: List[float]
    audit: AuditReport
    methods: List[MethodReport] = Field(default_factory=list)
    timings: Dict[str, float] = Field(default_factory=dict)
    resolved_config: Dict[str, Any] = Field(default_factory=dict)


class AuditRunReport(BaseModel):
    scenario: str
    command: str = "audit"
    exit_code: int = 0
    audit: AuditReport
    timings: Dict[str, float] = Field(default_factory=dict)
    resolved_config: Dict[str, Any] = Field(default_factory=dict)


class AttackValue(BaseModel):
    step: int
    sensor: int
    value: float


class SynthesisReport(BaseModel):
    scenario: str
    command: str = "attack-synth"
    exit_code: int
    target: str
    found: bool
    gamma: List[int]
    k: int
    r: int
    rounds: int = 0
    families_tried: int = 0
    subsets: List[List[int]] = Field(default_factory=list)
    ordinals: List[int] = Field(default_factory=list)
    bias: Optional[List[float]] = None
    values: List[AttackValue] = Field(default_factory=list)
    check_holds: Optional[bool] = None
    closed_loop: Optional[MethodReport] = None
    closed_loop_bias: Optional[List[float]] = None
    verified: bool = False
    timings: Dict[str, float] = Field(default_factory=dict)
    resolved_config: Dict[str, Any] = Field(default_factory=dict)
