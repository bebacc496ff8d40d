"""
Schemas for scenario files
"""
from typing import Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

Number = Union[int, float]
Signal = Union[Number, str]


class SystemConfig(BaseModel):
    """Either a named builtin or explicit row-major matrices"""
    model_config = ConfigDict(extra="forbid")

    builtin: Optional[str] = None
    A: Optional[List[List[float]]] = None
    B: Optional[List[List[float]]] = None
    C: Optional[List[List[float]]] = None

    @model_validator(mode="after")
    def check_source(self):
        explicit = self.A is not None or self.C is not None or self.B is not None
        if self.builtin and explicit:
            raise ValueError("give either 'builtin' or matrices A/B/C, not both")
        if not self.builtin and (self.A is None or self.C is None):
            raise ValueError("explicit systems need both A and C")
        return self


class AttackConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    gamma: List[int] = Field(default_factory=list)
    signals: Dict[int, Signal] = Field(default_factory=dict)


class MethodConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["sesvs", "sesgc", "both", "known"] = "both"
    s: Optional[int] = Field(None, ge=0)
    tau: int = Field(1, ge=1)
    start: int = Field(0, ge=0, description="Reconstructed step k - r + 1")
    rank_policy: Literal["raise_r", "skip"] = "raise_r"


class OverridesConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    r: Optional[int] = Field(None, ge=1)
    eq_tol: Optional[float] = Field(None, gt=0)
    eq_tol_rel: Optional[float] = Field(None, ge=0)
    residual_tol: Optional[float] = Field(None, gt=0)
    max_rounds: Optional[int] = Field(None, ge=0)


class SynthesisConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    target: Literal["sesvs", "sesgc"] = "sesvs"
    k: Optional[int] = Field(None, ge=0, description="Window end; defaults to start + r - 1")
    rounds: int = Field(1, ge=0)
    exhaustive: bool = False


class ScenarioConfig(BaseModel):
    """Schema for a scenario file"""
    model_config = ConfigDict(extra="forbid")

    name: Optional[str] = None
    system: SystemConfig
    x0: List[float]
    input: Optional[Union[Number, str, List[Number], List[List[Number]]]] = None
    attack: AttackConfig = Field(default_factory=AttackConfig)
    horizon: int = Field(..., ge=0, description="Last measurement step K")
    method: MethodConfig = Field(default_factory=MethodConfig)
    overrides: OverridesConfig = Field(default_factory=OverridesConfig)
    synthesis: Optional[SynthesisConfig] = None
