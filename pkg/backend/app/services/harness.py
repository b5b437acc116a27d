"""
Laço do ambiente: mobilidade, observação, ações, alocação, gêmeo digital e
recompensa por slot, mais auditoria das restrições e replay do trace.
"""
from __future__ import annotations

import logging
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..core.config import ExperimentConfig
from ..core.rng import RngStreams
from ..schemas.schemas import AuditReport, EvaluationSummary, SlotRecord
from .allocator import SyncFailure, allocate_all
from .marl import ActionSpace, AgentNet, Episode, act_epsilon_greedy, encode_local_state
from .mobility import Area, initial_positions, step_users
from .predictor import PredictorModel, predict_next
from .radio import Allocation, ChannelState, audit_allocation, build_channel, downlink_rates, draw_fading
from .twin import (
    PhysicalState,
    TwinState,
    association_counts,
    compose_twin,
    coverage_matrix,
    local_rewards,
    observe,
    sync_error,
    team_reward,
)

logger = logging.getLogger(__name__)

TRAIN_PHASE = 0
EVAL_PHASE = 1
AUDIT_PHASE = 2


# Políticas
class Policy:
    name = "policy"

    def reset(self) -> None:
        pass

    def select(self, coverage: np.ndarray, encoded: np.ndarray, masks: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError


class RandomPolicy(Policy):
    """Uniforme sobre as ações válidas de cada BS."""
    name = "random"

    def select(self, coverage, encoded, masks, rng):
        return np.array([rng.choice(np.flatnonzero(mask)) for mask in masks])


class ScriptedPolicy(Policy):
    """
    Cada usuário coberto é associado à BS de menor índice que o cobre,
    limitado a N - sync usuários por BS. `sync` fixa o bit de sincronização.
    """

    def __init__(self, sync: bool, num_rbs: int):
        self.sync = bool(sync)
        self.num_rbs = num_rbs
        self.name = "all-sync" if sync else "no-sync"

    def select(self, coverage, encoded, masks, rng):
        covered = coverage.any(axis=0)
        owner = np.argmax(coverage, axis=0)
        actions = []
        for m in range(len(coverage)):
            users = np.flatnonzero(covered & (owner == m))[: self.num_rbs - int(self.sync)]
            actions.append(int(self.sync) + int(np.sum(1 << (users + 1))))
        return np.array(actions)


class LearnedPolicy(Policy):
    name = "learned"

    def __init__(self, nets: Sequence[AgentNet], explore_eps: float = 0.0):
        self.nets = list(nets)
        self.explore_eps = explore_eps

    def reset(self) -> None:
        for net in self.nets:
            net.reset()

    def select(self, coverage, encoded, masks, rng):
        return np.array([
            act_epsilon_greedy(net, encoded[m], masks[m], self.explore_eps, rng)
            for m, net in enumerate(self.nets)
        ])


def make_policy(name: str, config: ExperimentConfig, nets: Optional[Sequence[AgentNet]] = None) -> Policy:
    if name == "random":
        return RandomPolicy()
    if name in ("all-sync", "no-sync"):
        return ScriptedPolicy(sync=name == "all-sync", num_rbs=config.radio.num_rbs)
    if name == "learned":
        if nets is None:
            raise ValueError("política aprendida exige redes")
        return LearnedPolicy(nets)
    raise ValueError(f"política desconhecida: {name}")


# Episódio
@dataclass
class EpisodeResult:
    records: List[SlotRecord]
    episode: Optional[Episode] = None
    failures: List[SyncFailure] = field(default_factory=list)

    @property
    def mean_reward(self) -> float:
        return float(np.mean([r.reward for r in self.records]))

    @property
    def mean_sync_error(self) -> float:
        return float(np.mean([r.sync_error for r in self.records]))

    @property
    def mean_total_rate(self) -> float:
        return float(np.mean([r.total_rate for r in self.records]))


def audit_constraints(
    allocation: Allocation,
    syncs: Sequence[bool],
    assoc: np.ndarray,
    delays: np.ndarray,
    delay_cap: float,
) -> List[str]:
    """
    Restrições 8b-8f da alocação, 8g (atraso do uplink <= alpha) e
    "action" quando a alocação serve algo que a ação não pediu.
    """
    violations = audit_allocation(allocation)
    uplink = allocation.y.any(axis=1)
    if np.any(uplink & (np.asarray(delays) > delay_cap)):
        violations.append("8g")
    served = allocation.x.any(axis=2)
    if np.any(uplink & ~np.asarray(syncs, dtype=bool)) or np.any(served & ~np.asarray(assoc, dtype=bool)):
        violations.append("action")
    return violations


def _encode_all(positions: np.ndarray, config: ExperimentConfig):
    phys = PhysicalState(positions=positions)
    coverage = coverage_matrix(positions, config.topology)
    scale = config.predictor.position_scale
    encoded = np.stack([encode_local_state(m, phys, config.topology, scale) for m in range(config.num_bs)])
    return phys, coverage, encoded


def run_episode(
    config: ExperimentConfig,
    policy: Policy,
    predictor: Optional[PredictorModel],
    rngs: RngStreams,
    episode_index: int = 0,
    phase: int = TRAIN_PHASE,
    collect: bool = False,
    horizon: Optional[int] = None,
) -> EpisodeResult:
    """
    Um episódio de T slots. Sem preditor, o gêmeo repete o último estado (persistência).

    Mobilidade e desvanecimento usam fluxos próprios indexados por
    (phase, episode_index), então métodos diferentes veem o mesmo ambiente.
    """
    horizon = horizon or config.marl.horizon
    space = ActionSpace(config.num_users)
    radio = config.radio
    area = Area(config.mobility.area_width, config.mobility.area_height)
    confine = config.topology if config.mobility.confine_to_coverage else None
    profiles = config.mobility.profiles
    mobility_rng = rngs.generator("mobility", phase, episode_index)
    fading_rng = rngs.generator("fading", phase, episode_index)
    explore_rng = rngs.generator("exploration", phase, episode_index)

    positions = initial_positions(config.num_users, config.topology, area, mobility_rng)
    window_k = predictor.window_k if predictor is not None else 1
    history = deque([positions.copy()], maxlen=window_k)
    twin = TwinState(positions=positions.copy(), received=np.ones(config.num_users, dtype=bool))
    positions = step_users(positions, profiles, mobility_rng, area, confine)

    policy.reset()
    records: List[SlotRecord] = []
    failures: List[SyncFailure] = []
    buffers: Dict[str, list] = {k: [] for k in ("global", "local", "coverage", "actions", "rewards", "local_rewards")}

    for t in range(horizon):
        phys, coverage, encoded = _encode_all(positions, config)
        masks = np.stack([space.valid_mask(c, radio.num_rbs) for c in coverage])
        actions = policy.select(coverage, encoded, masks, explore_rng)
        syncs = space.sync_flags(actions)
        assoc = space.assoc_matrix(actions)

        fading = draw_fading(config.num_users, config.num_bs, fading_rng, radio.fading_model)
        channel = build_channel(positions, config.topology, fading, radio.pathloss_mode)
        outcome = allocate_all(syncs, assoc, channel, radio, config.refinement_rounds, slot=t)
        failures.extend(outcome.failures)
        rates = downlink_rates(outcome.allocation, channel, radio)

        if predictor is not None:
            prediction = predict_next(predictor, list(history))
        else:
            prediction = history[-1].ravel()
        observations = [observe(m, phys, config.topology) for m in range(config.num_bs)]
        twin = compose_twin(twin, prediction, observations, outcome.sync_success)
        history.append(twin.positions.copy())

        counts = association_counts(assoc)
        reward = team_reward(phys, twin, rates, counts, config.epsilon, config.penalty)
        serving = [outcome.allocation.serving(u) for u in range(config.num_users)]
        local = local_rewards(
            phys, twin, rates, assoc, [s[0] if s else None for s in serving], coverage,
            config.epsilon, config.penalty,
        )
        records.append(SlotRecord(
            episode=episode_index,
            slot=t,
            joint_action=[int(a) for a in actions],
            syncs_requested=[bool(s) for s in syncs],
            sync_success=[bool(s) for s in outcome.sync_success],
            uplink_rbs=[outcome.allocation.uplink_rb(m) for m in range(config.num_bs)],
            uplink_delays=[float(d) for d in outcome.delays],
            served_rb=[s[1] if s else None for s in serving],
            serving_bs=[s[0] if s else None for s in serving],
            assoc_counts=[int(c) for c in counts],
            rates=[float(r) for r in rates],
            true_positions=[tuple(p) for p in phys.positions.tolist()],
            twin_positions=[tuple(p) for p in twin.positions.tolist()],
            received=[bool(r) for r in twin.received],
            sync_error=sync_error(phys, twin),
            total_rate=float(np.sum(rates)),
            reward=reward,
            local_rewards=[float(r) for r in local],
            user_gains=channel.user_gain.tolist(),
            cloud_gains=channel.cloud_gain.tolist(),
            violations=audit_constraints(outcome.allocation, syncs, assoc, outcome.delays, radio.delay_cap),
        ))
        if collect:
            buffers["global"].append(positions.copy())
            buffers["local"].append(encoded)
            buffers["coverage"].append(coverage)
            buffers["actions"].append(actions)
            buffers["rewards"].append(reward)
            buffers["local_rewards"].append(local)

        positions = step_users(positions, profiles, mobility_rng, area, confine)

    episode = None
    if collect:
        _, coverage, encoded = _encode_all(positions, config)
        episode = Episode(
            global_states=np.stack(buffers["global"] + [positions]),
            local_states=np.stack(buffers["local"] + [encoded]),
            coverage=np.stack(buffers["coverage"] + [coverage]),
            actions=np.stack(buffers["actions"]).astype(int),
            rewards=np.array(buffers["rewards"]),
            local_rewards=np.stack(buffers["local_rewards"]),
        )
    return EpisodeResult(records=records, episode=episode, failures=failures)


def replay_slot(record: SlotRecord, config: ExperimentConfig) -> Dict[str, object]:
    """
    Recalcula taxas, erro do gêmeo e recompensa só a partir de uma linha do trace.
    """
    num_bs, num_users = config.num_bs, config.num_users
    alloc = Allocation.empty(num_bs, num_users, config.radio.num_rbs)
    for u, (bs, rb) in enumerate(zip(record.serving_bs, record.served_rb)):
        if bs is not None:
            alloc.x[bs, u, rb] = True
    for m, rb in enumerate(record.uplink_rbs):
        if rb is not None:
            alloc.y[m, rb] = True
    channel = ChannelState(user_gain=np.array(record.user_gains), cloud_gain=np.array(record.cloud_gains))
    rates = downlink_rates(alloc, channel, config.radio)
    phys = PhysicalState(positions=np.array(record.true_positions))
    twin = TwinState(positions=np.array(record.twin_positions), received=np.array(record.received))
    return {
        "rates": rates,
        "total_rate": float(np.sum(rates)),
        "sync_error": sync_error(phys, twin),
        "reward": team_reward(phys, twin, rates, np.array(record.assoc_counts), config.epsilon, config.penalty),
    }


def summarize(method: str, results: Sequence[EpisodeResult]) -> EvaluationSummary:
    records = [r for result in results for r in result.records]
    horizon = max(len(result.records) for result in results)
    step_syncs, step_errors = [], []
    for t in range(horizon):
        at_t = [result.records[t] for result in results if t < len(result.records)]
        step_syncs.append(float(np.mean([sum(r.sync_success) for r in at_t])))
        step_errors.append(float(np.mean([r.sync_error for r in at_t])))
    histogram = Counter(sum(r.sync_success) for r in records)
    return EvaluationSummary(
        method=method,
        episodes=len(results),
        mean_reward=float(np.mean([r.reward for r in records])),
        mean_dnt_error=float(np.mean([r.sync_error for r in records])),
        mean_total_rate=float(np.mean([r.total_rate for r in records])),
        syncs_per_slot={int(k): int(v) for k, v in sorted(histogram.items())},
        step_mean_syncs=step_syncs,
        step_mean_dnt_error=step_errors,
        sync_failures=sum(len(result.failures) for result in results),
    )


def fuzz_audit(config: ExperimentConfig, slots: int, rngs: RngStreams) -> AuditReport:
    """Episódios com política aleatória até `slots` slots; conta violações por restrição."""
    violations: Counter = Counter()
    failures = 0
    done = 0
    episode_index = 0
    policy = RandomPolicy()
    while done < slots:
        horizon = min(config.marl.horizon, slots - done)
        result = run_episode(config, policy, None, rngs, episode_index, phase=AUDIT_PHASE, horizon=horizon)
        for record in result.records:
            violations.update(record.violations)
        failures += len(result.failures)
        done += len(result.records)
        episode_index += 1
    if violations:
        logger.warning("Auditoria encontrou violações: %s", dict(violations))
    return AuditReport(slots=done, violations=dict(sorted(violations.items())), sync_failures=failures)
