import math
from typing import Annotated, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.config import settings


class AgentConfig(BaseModel):
    """
    Hyperparameters of the low-switching LSVI agent.
    Defaults: λ = 1, β = c·d·H·√ι, p = 0.05.
    """
    model_config = ConfigDict(
        extra="forbid",
        populate_by_name=True,
        json_schema_extra={
            "example": {
                "lambda": 1.0,
                "beta": "auto",
                "c_beta": 1.0,
                "p": 0.05,
                "mode": "low_switch",
            }
        },
    )

    lam: float = Field(1.0, gt=0.0, alias="lambda", description="Ridge regularizer λ")
    beta: Union[float, Literal["auto"]] = Field("auto", description="Bonus multiplier or 'auto'")
    c_beta: float = Field(1.0, gt=0.0, description="Constant c in β = c·d·H·√ι")
    p: float = Field(0.05, gt=0.0, lt=1.0, description="Failure probability")
    mode: Literal["low_switch", "always_switch"] = "low_switch"
    K: Optional[int] = Field(None, ge=1, description="Planned episode count")
    strict_paper: bool = Field(False, description="Disable the Q floor at 0")
    recompute_every_episode: bool = Field(False, description="Debug equivalence mode")
    track_optimism: bool = Field(True, description="Compare each fresh Q estimate with Q*")

    @field_validator("beta")
    def validate_beta(cls, v):
        if v != "auto" and not v > 0:
            raise ValueError("beta must be positive or 'auto'")
        return v

    def iota(self, d: int, H: int, K: int) -> float:
        return math.log(2.0 * d * K * H / self.p)

    def resolve_beta(self, d: int, H: int, K: Optional[int] = None) -> float:
        """Numeric β; 'auto' needs the planned episode count"""
        if self.beta != "auto":
            return float(self.beta)
        episodes = K if K is not None else self.K
        if episodes is None:
            raise ValueError("beta='auto' requires the planned episode count K")
        return self.c_beta * d * H * math.sqrt(self.iota(d, H, episodes))


class HardInstanceParams(BaseModel):
    """
    Combination-lock family: d = 4·d0, H = 2·H0.
    h_star is the 1-based lock length; correct_actions are 0-based action ids at u.
    """
    model_config = ConfigDict(extra="forbid")

    d0: int = Field(..., ge=2)
    H0: int = Field(..., ge=1)
    h_star: Union[int, Literal["sample"]] = "sample"
    correct_actions: Union[List[int], Literal["sample"]] = "sample"
    j_star: Literal[0, 1] = 1
    seed: int = 0

    @model_validator(mode="after")
    def validate_lock(self):
        if self.h_star != "sample" and not 1 <= self.h_star <= self.H0:
            raise ValueError(f"h_star must lie in [1, {self.H0}]")
        if self.correct_actions != "sample":
            if self.h_star == "sample":
                raise ValueError("correct_actions requires a fixed h_star")
            if len(self.correct_actions) != self.h_star:
                raise ValueError("correct_actions must have length h_star")
            if any(not 0 <= i < self.d0 for i in self.correct_actions):
                raise ValueError(f"correct_actions entries must lie in [0, {self.d0})")
        return self

    def resolve(self) -> Tuple[int, List[int]]:
        """Fixed or seeded-sampled (h_star, correct_actions)"""
        rng = np.random.default_rng(self.seed)
        h_star = self.h_star if self.h_star != "sample" else int(rng.integers(1, self.H0 + 1))
        if self.correct_actions != "sample":
            return h_star, list(self.correct_actions)
        return h_star, [int(i) for i in rng.integers(0, self.d0, size=h_star)]


class TabularRandomEnv(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["tabular_random"]
    S: int = Field(..., ge=1)
    A: int = Field(..., ge=1)
    H: int = Field(..., ge=1)
    sparsity: float = Field(1.0, gt=0.0, le=1.0)
    instance_seed: Optional[int] = None


class LinearRandomEnv(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["linear_random"]
    d: int = Field(..., ge=1)
    H: int = Field(..., ge=1)
    n_states: int = Field(..., ge=1)
    n_actions: int = Field(2, ge=1)
    feature_mode: Literal["simplex", "corners"] = "simplex"
    instance_seed: Optional[int] = None


class HardInstanceEnv(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["hard_instance"]
    d0: int = Field(..., ge=2)
    H0: int = Field(..., ge=1)
    h_star: Union[int, Literal["sample"]] = "sample"
    correct_actions: Union[List[int], Literal["sample"]] = "sample"
    j_star: Literal[0, 1] = 1
    instance_seed: Optional[int] = None

    def params(self, seed: int) -> HardInstanceParams:
        return HardInstanceParams(
            d0=self.d0,
            H0=self.H0,
            h_star=self.h_star,
            correct_actions=self.correct_actions,
            j_star=self.j_star,
            seed=seed,
        )


class FromFileEnv(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["from_file"]
    path: str


EnvironmentConfig = Annotated[
    Union[TabularRandomEnv, LinearRandomEnv, HardInstanceEnv, FromFileEnv],
    Field(discriminator="kind"),
]


class ExperimentConfig(BaseModel):
    """
    Complete experiment description: one environment family, one agent
    configuration, a K schedule and replicate seeds.
    """
    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={
            "example": {
                "config_version": 1,
                "environment": {"kind": "tabular_random", "S": 2, "A": 2, "H": 2, "sparsity": 1.0},
                "K_schedule": [100],
                "seeds": [0],
            }
        },
    )

    config_version: Literal[1] = 1
    environment: EnvironmentConfig
    agent: AgentConfig = Field(default_factory=AgentConfig)
    K_schedule: List[int] = Field(..., min_length=1)
    seeds: List[int] = Field(..., min_length=1)
    output_dir: str = Field(default_factory=lambda: settings.output_dir)
    parallelism: int = Field(1, ge=1)
    baseline: bool = Field(False, description="Also run always_switch on every (K, seed) for comparison")

    @field_validator("K_schedule")
    def validate_schedule(cls, v):
        if any(k < 1 for k in v):
            raise ValueError("episode budgets must be >= 1")
        if len(set(v)) != len(v):
            raise ValueError("K_schedule entries must be distinct")
        return v

    @field_validator("seeds")
    def validate_seeds(cls, v):
        if len(set(v)) != len(v):
            raise ValueError("seeds must be distinct")
        return v

    @model_validator(mode="after")
    def validate_agent_budget(self):
        if self.agent.K is not None and self.agent.K not in self.K_schedule:
            raise ValueError(f"agent.K={self.agent.K} is not in K_schedule {self.K_schedule}")
        return self

    def agent_for(self, K: int) -> AgentConfig:
        """Agent config with the planned episode count set to K (β recomputed per K)"""
        return self.agent.model_copy(update={"K": K})
