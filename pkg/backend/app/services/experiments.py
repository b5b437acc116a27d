"""
Orquestração dos experimentos: preditor, treino VDN/IQL, avaliação,
comparação entre métodos e varreduras de epsilon e número de usuários.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..core.config import ExperimentConfig
from ..core.exceptions import DivergenceError, NonFiniteGradientError
from ..core.rng import RngStreams
from ..schemas.schemas import CurveRow, EvaluationSummary, MethodComparison, PredictorReport, SweepRow
from .harness import (
    EVAL_PHASE,
    TRAIN_PHASE,
    EpisodeResult,
    LearnedPolicy,
    Policy,
    run_episode,
    summarize,
)
from .marl import (
    ActionSpace,
    AgentNet,
    ReplayMemory,
    exploration_rate,
    iql_train_step,
    init_agent,
    sync_targets,
    vdn_train_step,
)
from .mobility import Area, generate_trajectories
from .predictor import (
    PredictorModel,
    build_windows,
    calibrate,
    evaluate_mse,
    init_predictor,
    persistence_mse,
    train,
)

logger = logging.getLogger(__name__)

DATASET_PHASE = 3
HOLDOUT_FRACTION = 0.1
METHODS = ("vdn", "iql")
SWEEP_AXES = ("epsilon", "num_users")


@dataclass
class TrainingRun:
    method: str
    nets: List[AgentNet]
    curve: List[CurveRow] = field(default_factory=list)


def generate_dataset(config: ExperimentConfig, rngs: RngStreams) -> np.ndarray:
    pc = config.predictor
    return generate_trajectories(
        config.num_users,
        pc.num_trajectories,
        pc.trajectory_len,
        config.mobility.profiles,
        rngs.generator("mobility", DATASET_PHASE),
        config.topology,
        Area(config.mobility.area_width, config.mobility.area_height),
        confine_to_coverage=config.mobility.confine_to_coverage,
    )


def prepare_predictor(
    config: ExperimentConfig,
    rngs: RngStreams,
    trajectories: Optional[np.ndarray] = None,
) -> Tuple[PredictorModel, List[float], PredictorReport]:
    """
    Treina o preditor em trajetórias reais, calibra o ganho da saída num
    conjunto de validação e mede o MSE num conjunto separado (as últimas 10%
    das trajetórias, com outras 10% antes delas para validação).
    """
    pc = config.predictor
    if trajectories is None:
        trajectories = generate_dataset(config, rngs)
    if trajectories.shape[2] != config.num_users:
        raise ValueError("trajetórias com número de usuários diferente da configuração")
    total = len(trajectories)
    split = max(1, int(round(total * HOLDOUT_FRACTION))) if total > 2 else 0
    fit_end = total - 2 * split
    train_set = build_windows(trajectories[:fit_end], pc.window_k)
    validation = build_windows(trajectories[fit_end:total - split], pc.window_k) if split else train_set
    heldout = build_windows(trajectories[total - split:], pc.window_k) if split else train_set

    motion = max(p.step for p in config.mobility.profiles)
    model = init_predictor(
        config.num_users, pc.hidden, pc.window_k, rngs.generator("init", 0), pc.position_scale, motion,
    )
    try:
        model, curve = train(model, train_set, pc.lr, pc.batch_size, pc.epochs, rngs.generator("predictor"))
    except NonFiniteGradientError as exc:
        raise DivergenceError(f"preditor divergiu: {exc}") from exc
    model = calibrate(model, validation)
    per_user, mse = evaluate_mse(model, heldout)
    _, baseline = persistence_mse(heldout)
    logger.info("Preditor: MSE %.4g (persistência %.4g)", mse, baseline)
    report = PredictorReport(
        per_user_mse=per_user.tolist(),
        mse=mse,
        persistence_mse=baseline,
        final_loss=curve[-1] if curve else float("nan"),
        gain=model.gain,
    )
    return model, curve, report


def train_marl(
    config: ExperimentConfig,
    method: str,
    predictor: Optional[PredictorModel],
    rngs: RngStreams,
) -> TrainingRun:
    """
    G épocas de coleta (um episódio com exploração decrescente) seguida de
    atualizações em lotes do replay. Métodos diferentes com a mesma semente
    veem os mesmos episódios de ambiente.
    """
    if method not in METHODS:
        raise ValueError(f"método desconhecido: {method}")
    mc = config.marl
    num_rbs = config.radio.num_rbs
    space = ActionSpace(config.num_users)
    init_rng = rngs.generator("init", 1)
    nets = [init_agent(config.num_users, mc.hidden, init_rng) for _ in range(config.num_bs)]
    targets = [net.clone() for net in nets]
    memory = ReplayMemory(mc.replay_capacity)
    replay_rng = rngs.generator("replay")
    step = vdn_train_step if method == "vdn" else iql_train_step

    run = TrainingRun(method=method, nets=nets)
    for epoch in range(mc.epochs):
        eps = exploration_rate(epoch, mc.epochs, mc.explore_start, mc.explore_end, mc.explore_fraction)
        result = run_episode(config, LearnedPolicy(nets, eps), predictor, rngs, epoch, TRAIN_PHASE, collect=True)
        memory.push(result.episode)
        losses = []
        for _ in range(mc.updates_per_epoch):
            batch = memory.sample(mc.batch_size, replay_rng)
            try:
                nets, value = step(nets, targets, batch, mc.lr, mc.gamma, space, num_rbs)
            except NonFiniteGradientError as exc:
                logger.error("%s divergiu na época %d: %s", method.upper(), epoch, exc)
                raise DivergenceError(f"{method} divergiu na época {epoch}") from exc
            losses.append(value)
        targets = sync_targets(nets, targets, epoch + 1, mc.target_sync_period)
        row = CurveRow(epoch=epoch, loss=float(np.mean(losses)), mean_reward=result.mean_reward, eps=eps)
        run.curve.append(row)
        logger.info(
            "%s época %d/%d: perda %.4g, recompensa média %.4g, eps %.3f",
            method.upper(), epoch + 1, mc.epochs, row.loss, row.mean_reward, eps,
        )
    run.nets = nets
    return run


def train_vdn(config: ExperimentConfig, predictor: Optional[PredictorModel], rngs: RngStreams) -> TrainingRun:
    return train_marl(config, "vdn", predictor, rngs)


def train_iql(config: ExperimentConfig, predictor: Optional[PredictorModel], rngs: RngStreams) -> TrainingRun:
    return train_marl(config, "iql", predictor, rngs)


def evaluate(
    config: ExperimentConfig,
    policy: Policy,
    predictor: Optional[PredictorModel],
    rngs: RngStreams,
    episodes: Optional[int] = None,
    method: Optional[str] = None,
) -> Tuple[EvaluationSummary, List[EpisodeResult]]:
    """Rollouts gulosos (sem exploração) em episódios de avaliação."""
    episodes = episodes or config.marl.eval_episodes
    if isinstance(policy, LearnedPolicy):
        policy.explore_eps = 0.0
    results = [run_episode(config, policy, predictor, rngs, index, EVAL_PHASE) for index in range(episodes)]
    summary = summarize(method or policy.name, results)
    logger.info(
        "Avaliação %s: recompensa %.4g, erro do gêmeo %.4g, taxa %.4g",
        summary.method, summary.mean_reward, summary.mean_dnt_error, summary.mean_total_rate,
    )
    return summary, results


def _improvement(ours: float, theirs: float) -> float:
    if theirs == 0.0:
        return 0.0 if ours == 0.0 else float("inf")
    return 100.0 * (ours - theirs) / abs(theirs)


def compare_methods(vdn: EvaluationSummary, iql: EvaluationSummary) -> MethodComparison:
    return MethodComparison(
        reward_improvement_pct=_improvement(vdn.mean_reward, iql.mean_reward),
        rate_improvement_pct=_improvement(vdn.mean_total_rate, iql.mean_total_rate),
        dnt_error_difference=vdn.mean_dnt_error - iql.mean_dnt_error,
    )


def with_axis(config: ExperimentConfig, axis: str, value: float) -> ExperimentConfig:
    if axis == "epsilon":
        return config.with_overrides(epsilon=float(value))
    if axis == "num_users":
        users = int(value)
        mobility = config.mobility.model_copy(update={
            "num_users": users,
            "profiles": [config.mobility.profiles[0]] * users,
        })
        return config.with_overrides(mobility=mobility.model_dump())
    raise ValueError(f"eixo de varredura desconhecido: {axis}")


def sweep(
    config: ExperimentConfig,
    axis: str,
    values: Iterable[float],
    rngs: RngStreams,
    methods: Sequence[str] = METHODS,
    use_predictor: bool = True,
) -> List[SweepRow]:
    """
    Retreina e avalia cada método em cada ponto da grade, com as mesmas
    sementes para todos os métodos.
    """
    rows = []
    for index, value in enumerate(values):
        point = with_axis(config, axis, value)
        point_rngs = rngs.fork(index)
        predictor = prepare_predictor(point, point_rngs)[0] if use_predictor else None
        for method in methods:
            run = train_marl(point, method, predictor, point_rngs)
            summary, _ = evaluate(point, LearnedPolicy(run.nets), predictor, point_rngs, method=method)
            rows.append(SweepRow(
                axis=axis,
                value=float(value),
                method=method,
                mean_total_rate=summary.mean_total_rate,
                mean_dnt_error=summary.mean_dnt_error,
                mean_reward=summary.mean_reward,
            ))
            logger.info("Varredura %s=%s %s: erro %.4g, taxa %.4g", axis, value, method, summary.mean_dnt_error, summary.mean_total_rate)
    return rows
