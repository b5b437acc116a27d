from pathlib import Path
from typing import List, Literal, Optional, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .exceptions import ConfigError
from ..schemas.schemas import MobilityProfile, RadioParams, Topology

load_dotenv()

PRESETS_DIR = Path(__file__).resolve().parents[2] / "presets"
PRESETS = ("paper-text", "paper-table2")


class Settings(BaseSettings):
    PROJECT_NAME: str = "DNT Sync"
    VERSION: str = "0.1.0"
    API_V1_STR: str = "/api/v1"
    CORS_ORIGINS: List[str] = []

    # Registro de execuções
    DATABASE_URL: str = "sqlite:///./dnt_runs.db"
    LOG_LEVEL: str = "INFO"

    # Semente mestre; todos os fluxos aleatórios derivam dela
    SEED: int = 0

    # Topologia (área 300 x 100, 3 BSs, nuvem em [0, 50])
    AREA_WIDTH: float = 300.0
    AREA_HEIGHT: float = 100.0
    BS_POSITIONS: List[Tuple[float, float]] = [(-100.0, 0.0), (0.0, 0.0), (100.0, 0.0)]  # M = 3
    CLOUD_POSITION: Tuple[float, float] = (0.0, 50.0)
    COVERAGE_RADIUS: float = 60.0

    # Usuários e mobilidade
    NUM_USERS: int = 12  # U (cenário do texto: 12, tabela de parâmetros: 10)
    MOVE_PROBABILITIES: List[float] = [0.2, 0.2, 0.2, 0.2, 0.2]  # p_u
    USER_PROFILES: Optional[List[List[float]]] = None
    STEP_SIZE: float = 1.0  # delta l
    CONFINE_TO_COVERAGE: bool = False

    # Rádio
    NUM_RBS: int = 12  # N
    BANDWIDTH: float = 1.0  # B
    POWER: float = 1.0  # P
    NOISE_PSD: float = 1e-5  # N_0
    PAYLOAD: float = 1.0  # D_m
    DELAY_CAP: float = 1.0  # alpha
    PATHLOSS_MODE: Literal["linear", "squared"] = "linear"
    FADING_MODEL: Literal["rayleigh", "none"] = "rayleigh"
    REFINEMENT_ROUNDS: int = 1

    # Recompensa
    EPSILON: float = 0.25  # epsilon
    PENALTY: float = -5.0  # rho

    # Preditor GRU
    PREDICTOR_HIDDEN: int = 128  # N^h
    WINDOW_K: int = 5  # K
    PREDICTOR_LR: float = 1e-3  # lambda_G
    PREDICTOR_BATCH: int = 32
    PREDICTOR_EPOCHS: int = 50
    NUM_TRAJECTORIES: int = 2000
    TRAJECTORY_LEN: int = 30
    POSITION_SCALE: float = 150.0

    # VDN / IQL
    AGENT_HIDDEN: int = 128  # theta^h
    AGENT_LR: float = 1e-4  # lambda_Q
    GAMMA: float = 0.2  # gamma
    EPOCHS: int = 75  # G
    HORIZON: int = 30  # T
    BATCH_SIZE: int = 64  # |D_g|
    REPLAY_CAPACITY: int = 10_000
    UPDATES_PER_EPOCH: int = 4
    TARGET_SYNC_PERIOD: int = 10  # C
    EXPLORE_START: float = 0.9
    EXPLORE_END: float = 0.05
    EXPLORE_FRACTION: float = 0.6
    EVAL_EPISODES: int = 5

    model_config = SettingsConfigDict(
        case_sensitive=True,
        env_prefix="DNT_",
        extra="ignore",
    )


settings = Settings()


class MobilityConfig(BaseModel):
    num_users: int
    profiles: List[MobilityProfile]
    area_width: float
    area_height: float
    confine_to_coverage: bool = False

    @model_validator(mode="after")
    def _check(self) -> "MobilityConfig":
        if self.num_users <= 0:
            raise ValueError("num_users deve ser positivo")
        if len(self.profiles) != self.num_users:
            raise ValueError("um perfil de mobilidade por usuário")
        if self.area_width <= 0 or self.area_height <= 0:
            raise ValueError("área inválida")
        return self


class PredictorConfig(BaseModel):
    hidden: int
    window_k: int
    lr: float
    batch_size: int
    epochs: int
    num_trajectories: int
    trajectory_len: int
    position_scale: float

    @model_validator(mode="after")
    def _check(self) -> "PredictorConfig":
        counts = (self.hidden, self.window_k, self.batch_size, self.epochs,
                  self.num_trajectories, self.trajectory_len)
        if min(counts) <= 0:
            raise ValueError("parâmetros do preditor devem ser positivos")
        if self.lr <= 0 or self.position_scale <= 0:
            raise ValueError("lr e escala devem ser positivos")
        if self.trajectory_len <= self.window_k:
            raise ValueError("trajectory_len deve exceder window_k")
        return self


class MarlConfig(BaseModel):
    hidden: int
    lr: float
    gamma: float
    epochs: int
    horizon: int
    batch_size: int
    replay_capacity: int
    updates_per_epoch: int
    target_sync_period: int
    explore_start: float
    explore_end: float
    explore_fraction: float
    eval_episodes: int

    @model_validator(mode="after")
    def _check(self) -> "MarlConfig":
        counts = (self.hidden, self.epochs, self.horizon, self.batch_size,
                  self.replay_capacity, self.updates_per_epoch,
                  self.target_sync_period, self.eval_episodes)
        if min(counts) <= 0:
            raise ValueError("parâmetros MARL devem ser positivos")
        if self.lr <= 0:
            raise ValueError("lr deve ser positivo")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma deve estar em [0, 1)")
        for eps in (self.explore_start, self.explore_end):
            if not 0.0 <= eps <= 1.0:
                raise ValueError("taxa de exploração fora de [0, 1]")
        if not 0.0 < self.explore_fraction <= 1.0:
            raise ValueError("explore_fraction deve estar em (0, 1]")
        return self


class ExperimentConfig(BaseModel):
    """
    Configuração aninhada e validada de um experimento.
    """
    topology: Topology
    radio: RadioParams
    mobility: MobilityConfig
    predictor: PredictorConfig
    marl: MarlConfig
    epsilon: float
    penalty: float
    refinement_rounds: int = 1
    seed: int = 0

    @field_validator("epsilon")
    @classmethod
    def _epsilon_open_interval(cls, value: float) -> float:
        if not 0.0 < value < 1.0:
            raise ValueError("epsilon deve estar em (0, 1)")
        return value

    @field_validator("penalty")
    @classmethod
    def _penalty_negative(cls, value: float) -> float:
        if value >= 0.0:
            raise ValueError("rho deve ser negativo")
        return value

    @field_validator("refinement_rounds")
    @classmethod
    def _rounds_positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("refinement_rounds deve ser >= 1")
        return value

    @property
    def num_users(self) -> int:
        return self.mobility.num_users

    @property
    def num_bs(self) -> int:
        return len(self.topology.bs_positions)

    @classmethod
    def from_settings(cls, s: Settings) -> "ExperimentConfig":
        try:
            if s.USER_PROFILES is not None:
                rows = s.USER_PROFILES
            else:
                rows = [s.MOVE_PROBABILITIES] * s.NUM_USERS
            profiles = [MobilityProfile(probabilities=row, step=s.STEP_SIZE) for row in rows]
            return cls(
                topology=Topology(
                    bs_positions=s.BS_POSITIONS,
                    cloud_position=s.CLOUD_POSITION,
                    coverage_radius=s.COVERAGE_RADIUS,
                ),
                radio=RadioParams(
                    bandwidth=s.BANDWIDTH,
                    power=s.POWER,
                    noise_psd=s.NOISE_PSD,
                    payload=s.PAYLOAD,
                    delay_cap=s.DELAY_CAP,
                    num_rbs=s.NUM_RBS,
                    pathloss_mode=s.PATHLOSS_MODE,
                    fading_model=s.FADING_MODEL,
                ),
                mobility=MobilityConfig(
                    num_users=s.NUM_USERS,
                    profiles=profiles,
                    area_width=s.AREA_WIDTH,
                    area_height=s.AREA_HEIGHT,
                    confine_to_coverage=s.CONFINE_TO_COVERAGE,
                ),
                predictor=PredictorConfig(
                    hidden=s.PREDICTOR_HIDDEN,
                    window_k=s.WINDOW_K,
                    lr=s.PREDICTOR_LR,
                    batch_size=s.PREDICTOR_BATCH,
                    epochs=s.PREDICTOR_EPOCHS,
                    num_trajectories=s.NUM_TRAJECTORIES,
                    trajectory_len=s.TRAJECTORY_LEN,
                    position_scale=s.POSITION_SCALE,
                ),
                marl=MarlConfig(
                    hidden=s.AGENT_HIDDEN,
                    lr=s.AGENT_LR,
                    gamma=s.GAMMA,
                    epochs=s.EPOCHS,
                    horizon=s.HORIZON,
                    batch_size=s.BATCH_SIZE,
                    replay_capacity=s.REPLAY_CAPACITY,
                    updates_per_epoch=s.UPDATES_PER_EPOCH,
                    target_sync_period=s.TARGET_SYNC_PERIOD,
                    explore_start=s.EXPLORE_START,
                    explore_end=s.EXPLORE_END,
                    explore_fraction=s.EXPLORE_FRACTION,
                    eval_episodes=s.EVAL_EPISODES,
                ),
                epsilon=s.EPSILON,
                penalty=s.PENALTY,
                refinement_rounds=s.REFINEMENT_ROUNDS,
                seed=s.SEED,
            )
        except ValidationError as exc:
            raise ConfigError(f"Configuração inválida: {exc}") from exc

    def with_overrides(self, **changes) -> "ExperimentConfig":
        """
        Copia a configuração alterando campos de primeiro nível e revalida.
        """
        data = self.model_dump()
        data.update(changes)
        try:
            return ExperimentConfig.model_validate(data)
        except ValidationError as exc:
            raise ConfigError(f"Configuração inválida: {exc}") from exc


def preset_path(name: str) -> Path:
    if name not in PRESETS:
        raise ConfigError(f"Preset desconhecido: {name}")
    return PRESETS_DIR / f"{name}.env"


def load_settings(
    config_path: Optional[Path] = None,
    preset: Optional[str] = None,
    **overrides,
) -> Settings:
    """
    Resolve preset -> arquivo de configuração -> overrides explícitos.
    """
    env_files = []
    if preset is not None:
        env_files.append(preset_path(preset))
    if config_path is not None:
        config_path = Path(config_path)
        if not config_path.is_file():
            raise ConfigError(f"Arquivo de configuração não encontrado: {config_path}")
        env_files.append(config_path)
    try:
        return Settings(_env_file=tuple(env_files) or None, **overrides)
    except ValidationError as exc:
        raise ConfigError(f"Configuração inválida: {exc}") from exc


def load_experiment(
    config_path: Optional[Path] = None,
    preset: Optional[str] = None,
    **overrides,
) -> ExperimentConfig:
    return ExperimentConfig.from_settings(load_settings(config_path, preset, **overrides))
