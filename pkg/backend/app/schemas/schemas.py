import math
from datetime import datetime
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

Point = Tuple[float, float]


# Mobilidade
class UserPosition(BaseModel):
    x: float
    y: float

    @model_validator(mode="after")
    def _finite(self) -> "UserPosition":
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("coordenadas devem ser finitas")
        return self


class MobilityProfile(BaseModel):
    """
    Probabilidades [ficar, frente, trás, esquerda, direita] e passo em metros.
    """
    probabilities: Tuple[float, float, float, float, float] = (0.2, 0.2, 0.2, 0.2, 0.2)
    step: float = 1.0

    @field_validator("probabilities")
    @classmethod
    def _valid_distribution(cls, value):
        if any(p < 0.0 for p in value):
            raise ValueError("probabilidades devem ser não negativas")
        if abs(sum(value) - 1.0) > 1e-12:
            raise ValueError("probabilidades devem somar 1")
        return value

    @field_validator("step")
    @classmethod
    def _positive_step(cls, value: float) -> float:
        if value <= 0.0:
            raise ValueError("passo deve ser positivo")
        return value


# Rádio
class Topology(BaseModel):
    bs_positions: List[Point]
    cloud_position: Point = (0.0, 50.0)
    coverage_radius: float = 60.0

    @model_validator(mode="after")
    def _check(self) -> "Topology":
        if not self.bs_positions:
            raise ValueError("pelo menos uma BS")
        if self.coverage_radius <= 0.0:
            raise ValueError("raio de cobertura deve ser positivo")
        return self

    @property
    def num_bs(self) -> int:
        return len(self.bs_positions)


class RadioParams(BaseModel):
    bandwidth: float = 1.0
    power: float = 1.0
    noise_psd: float = 1e-5
    payload: float = 1.0
    delay_cap: float = 1.0
    num_rbs: int = 12
    pathloss_mode: Literal["linear", "squared"] = "linear"
    fading_model: Literal["rayleigh", "none"] = "rayleigh"

    @model_validator(mode="after")
    def _positive(self) -> "RadioParams":
        values = (self.bandwidth, self.power, self.noise_psd, self.payload, self.delay_cap)
        if min(values) <= 0.0 or self.num_rbs <= 0:
            raise ValueError("parâmetros de rádio devem ser positivos")
        return self


# Checkpoint
class MatrixRecord(BaseModel):
    rows: int
    cols: int
    entries: List[float]

    @model_validator(mode="after")
    def _shape(self) -> "MatrixRecord":
        if len(self.entries) != self.rows * self.cols:
            raise ValueError("entries deve ter rows * cols elementos")
        return self


class Checkpoint(BaseModel):
    kind: str
    meta: Dict[str, float] = Field(default_factory=dict)
    matrices: Dict[str, MatrixRecord]


# Trace
class SlotRecord(BaseModel):
    episode: int
    slot: int
    joint_action: List[int]
    syncs_requested: List[bool]
    sync_success: List[bool]
    uplink_rbs: List[Optional[int]]
    uplink_delays: List[float]
    served_rb: List[Optional[int]]
    serving_bs: List[Optional[int]]
    assoc_counts: List[int]
    rates: List[float]
    true_positions: List[Point]
    twin_positions: List[Point]
    received: List[bool]
    sync_error: float
    total_rate: float
    reward: float
    local_rewards: List[float]
    user_gains: List[List[float]]
    cloud_gains: List[float]
    violations: List[str] = Field(default_factory=list)


# Resultados
class CurveRow(BaseModel):
    epoch: int
    loss: float
    mean_reward: float
    eps: float


class EvaluationSummary(BaseModel):
    method: str
    episodes: int
    mean_reward: float
    mean_dnt_error: float
    mean_total_rate: float
    syncs_per_slot: Dict[int, int]
    step_mean_syncs: List[float]
    step_mean_dnt_error: List[float]
    sync_failures: int


class MethodComparison(BaseModel):
    reward_improvement_pct: float
    rate_improvement_pct: float
    dnt_error_difference: float


class EvaluationReport(BaseModel):
    summaries: Dict[str, EvaluationSummary]
    comparison: Optional[MethodComparison] = None


class SweepRow(BaseModel):
    axis: str
    value: float
    method: str
    mean_total_rate: float
    mean_dnt_error: float
    mean_reward: float


class PredictorReport(BaseModel):
    per_user_mse: List[float]
    mse: float
    persistence_mse: float
    final_loss: float
    gain: float = 1.0


class AuditReport(BaseModel):
    slots: int
    violations: Dict[str, int]
    sync_failures: int


# API
class EpisodeRequest(BaseModel):
    policy: Literal["random", "all-sync", "no-sync"] = "random"
    seed: int = 0
    preset: Optional[Literal["paper-text", "paper-table2"]] = None
    num_users: Optional[int] = None
    horizon: Optional[int] = None


class EpisodeResponse(BaseModel):
    policy: str
    slots: int
    mean_reward: float
    mean_dnt_error: float
    mean_total_rate: float
    sync_failures: int


class AuditRequest(BaseModel):
    slots: int = 1000
    seed: int = 0
    num_users: Optional[int] = None


class TrainRequest(BaseModel):
    method: Literal["vdn", "iql"] = "vdn"
    seed: int = 0
    epochs: int = 5
    num_users: int = 4
    num_rbs: int = 4
    agent_hidden: int = 8
    predictor_hidden: int = 8
    predictor_epochs: int = 2
    num_trajectories: int = 20
    horizon: int = 10


class EpochMetricResponse(BaseModel):
    epoch: int
    loss: float
    mean_reward: float
    eps: float

    class Config:
        from_attributes = True


class RunResponse(BaseModel):
    id: int
    kind: str
    method: Optional[str]
    seed: int
    status: str
    created_at: datetime
    summary_json: Optional[str] = None

    class Config:
        from_attributes = True
