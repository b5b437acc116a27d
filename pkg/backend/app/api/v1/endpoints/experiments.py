from fastapi import APIRouter, Depends, HTTPException
from sqlalchemy.orm import Session
from typing import Any

from ....core.config import load_experiment
from ....core.exceptions import ConfigError, DivergenceError
from ....core.rng import RngStreams
from ....db.session import get_db
from ....schemas.schemas import (
    AuditReport,
    AuditRequest,
    EpisodeRequest,
    EpisodeResponse,
    RunResponse,
    TrainRequest,
)
from ....services import registry
from ....services.experiments import evaluate, prepare_predictor, train_marl
from ....services.harness import LearnedPolicy, fuzz_audit, make_policy, run_episode

router = APIRouter()

def _config(preset=None, **overrides):
    overrides = {k: v for k, v in overrides.items() if v is not None}
    try:
        return load_experiment(preset=preset, **overrides)
    except ConfigError as exc:
        raise HTTPException(status_code=422, detail=str(exc))

@router.post("/episode", response_model=EpisodeResponse)
def simular_episodio(request: EpisodeRequest) -> Any:
    """
    Roda um episódio com política roteirizada e gêmeo por persistência.
    """
    config = _config(request.preset, NUM_USERS=request.num_users, HORIZON=request.horizon, SEED=request.seed)
    policy = make_policy(request.policy, config)
    result = run_episode(config, policy, None, RngStreams(config.seed))
    return EpisodeResponse(
        policy=request.policy,
        slots=len(result.records),
        mean_reward=result.mean_reward,
        mean_dnt_error=result.mean_sync_error,
        mean_total_rate=result.mean_total_rate,
        sync_failures=len(result.failures),
    )

@router.post("/audit", response_model=AuditReport)
def auditar_restricoes(request: AuditRequest) -> Any:
    """
    Slots com política aleatória; conta violações das restrições por identificador.
    """
    if request.slots <= 0:
        raise HTTPException(status_code=422, detail="slots deve ser positivo")
    config = _config(NUM_USERS=request.num_users, SEED=request.seed)
    return fuzz_audit(config, request.slots, RngStreams(config.seed))

@router.post("/train", response_model=RunResponse)
def treinar(
    request: TrainRequest,
    db: Session = Depends(get_db),
) -> Any:
    """
    Treino curto de VDN ou IQL, registrado no banco com a curva por época.
    """
    config = _config(
        SEED=request.seed,
        EPOCHS=request.epochs,
        NUM_USERS=request.num_users,
        NUM_RBS=request.num_rbs,
        AGENT_HIDDEN=request.agent_hidden,
        PREDICTOR_HIDDEN=request.predictor_hidden,
        PREDICTOR_EPOCHS=request.predictor_epochs,
        NUM_TRAJECTORIES=request.num_trajectories,
        HORIZON=request.horizon,
        TRAJECTORY_LEN=request.horizon,
        BATCH_SIZE=min(request.horizon, 64),
        EVAL_EPISODES=1,
    )
    run = registry.create_run(db, "train", config.seed, config.model_dump_json(), method=request.method)
    rngs = RngStreams(config.seed)
    try:
        predictor, _, _ = prepare_predictor(config, rngs)
        result = train_marl(config, request.method, predictor, rngs)
    except DivergenceError as exc:
        registry.finish_run(db, run, "diverged")
        raise HTTPException(status_code=409, detail=str(exc))
    registry.add_epoch_metrics(db, run, result.curve)
    summary, _ = evaluate(config, LearnedPolicy(result.nets), predictor, rngs, method=request.method)
    return registry.finish_run(db, run, "done", summary.model_dump_json())
