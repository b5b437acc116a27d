"""
Redes Q recorrentes por BS, codificação e máscara de ações, política
epsilon-gulosa, memória de replay por episódio, redes-alvo e as atualizações
VDN (soma de Qs locais) e IQL (recompensa local).
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Deque, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.exceptions import DivergenceError, EmptySequenceError
from ..schemas.schemas import Topology
from .nncore import (
    DTYPE,
    GruCellParams,
    GruGrads,
    GruTape,
    from_record,
    gru_backward,
    gru_cell_forward,
    gru_from_checkpoint,
    gru_unroll,
    init_dense,
    init_gru_params,
    load_checkpoint,
    save_checkpoint,
    sgd_step,
    sgd_update_gru,
)
from .twin import PhysicalState, coverage_matrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ActionCode:
    sync: bool
    assoc: Tuple[bool, ...]


class ActionSpace:
    """
    Índice <-> ActionCode: bit 0 = sincroniza, bit u+1 = associa o usuário u.
    |A| = 2^(U+1); ações inválidas são mascaradas, nunca removidas.
    """

    def __init__(self, num_users: int):
        if num_users <= 0:
            raise ValueError("num_users deve ser positivo")
        self.num_users = num_users
        self.size = 2 ** (num_users + 1)
        self.bits = ((np.arange(self.size)[:, None] >> np.arange(num_users + 1)) & 1).astype(bool)
        self._popcount = self.bits.sum(axis=1)

    def decode(self, index: int) -> ActionCode:
        row = self.bits[index]
        return ActionCode(sync=bool(row[0]), assoc=tuple(bool(b) for b in row[1:]))

    def encode(self, code: ActionCode) -> int:
        if len(code.assoc) != self.num_users:
            raise ValueError("assoc deve ter U bits")
        bits = (int(code.sync),) + tuple(int(b) for b in code.assoc)
        return sum(b << i for i, b in enumerate(bits))

    def valid_mask(self, covered: np.ndarray, num_rbs: int) -> np.ndarray:
        covered = np.asarray(covered, dtype=bool)
        outside = (self.bits[:, 1:] & ~covered).any(axis=1)
        return ~outside & (self._popcount <= num_rbs)

    def sync_flags(self, actions: np.ndarray) -> np.ndarray:
        return self.bits[np.asarray(actions, dtype=int), 0]

    def assoc_matrix(self, actions: np.ndarray) -> np.ndarray:
        """(M, U) de associação a partir dos índices das ações conjuntas."""
        return self.bits[np.asarray(actions, dtype=int), 1:]


@dataclass
class AgentNet:
    gru: GruCellParams
    head: np.ndarray  # (|A|, theta_h)
    hidden: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.hidden is None:
            self.reset()

    def reset(self) -> None:
        self.hidden = np.zeros(self.gru.hidden_dim, dtype=DTYPE)

    def clone(self) -> "AgentNet":
        gru = GruCellParams(**{k: v.copy() for k, v in self.gru.as_dict().items()})
        return AgentNet(gru=gru, head=self.head.copy())

    def matrices(self) -> Dict[str, np.ndarray]:
        matrices = dict(self.gru.as_dict())
        matrices["head"] = self.head
        return matrices


def init_agent(
    num_users: int,
    hidden: int,
    rng: Optional[np.random.Generator] = None,
    zero: bool = False,
) -> AgentNet:
    input_dim = 3 * num_users
    return AgentNet(
        gru=init_gru_params(input_dim, hidden, rng, zero=zero),
        head=init_dense(2 ** (num_users + 1), hidden, rng, zero=zero),
    )


def encode_local_state(bs: int, phys: PhysicalState, topology: Topology, scale: float = 150.0) -> np.ndarray:
    """
    2U posições normalizadas (zeros fora da cobertura) seguidas da máscara de cobertura de U bits.
    """
    covered = coverage_matrix(phys.positions, topology)[bs]
    positions = np.where(covered[:, None], phys.positions / scale, 0.0)
    return np.concatenate([positions.ravel(), covered.astype(DTYPE)])


def q_values(net: AgentNet, encoded_state: np.ndarray) -> np.ndarray:
    net.hidden, _ = gru_cell_forward(net.gru, encoded_state, net.hidden)
    return net.head @ net.hidden


def act_epsilon_greedy(
    net: AgentNet,
    encoded_state: np.ndarray,
    valid_mask: np.ndarray,
    explore_eps: float,
    rng: np.random.Generator,
) -> int:
    """
    Índice da ação escolhida. O estado oculto avança mesmo quando explora.
    """
    q = q_values(net, encoded_state)
    valid = np.flatnonzero(valid_mask)
    if len(valid) == 0:
        raise ValueError("nenhuma ação válida")
    if rng.random() < explore_eps:
        return int(rng.choice(valid))
    return int(np.argmax(np.where(valid_mask, q, -np.inf)))


def q_tot(per_agent_q: Sequence[float]) -> float:
    return float(np.sum(per_agent_q))


def exploration_rate(epoch: int, total_epochs: int, start: float = 0.9, end: float = 0.05, fraction: float = 0.6) -> float:
    decay_epochs = max(1.0, fraction * total_epochs)
    progress = min(1.0, epoch / decay_epochs)
    return start + (end - start) * progress


# Replay
@dataclass
class Episode:
    """
    Episódio inteiro de T slots; índices de estado vão de 0 a T.
    """
    global_states: np.ndarray  # (T+1, U, 2)
    local_states: np.ndarray  # (T+1, M, 3U)
    coverage: np.ndarray  # (T+1, M, U) bool
    actions: np.ndarray  # (T, M) int
    rewards: np.ndarray  # (T,)
    local_rewards: np.ndarray  # (T, M)

    def __len__(self) -> int:
        return len(self.actions)

    def transition(self, t: int) -> "Transition":
        return Transition(
            global_state=self.global_states[t],
            joint_action=self.actions[t],
            reward=float(self.rewards[t]),
            next_global_state=self.global_states[t + 1],
            local_states=self.local_states[t],
            next_local_states=self.local_states[t + 1],
            local_rewards=self.local_rewards[t],
            terminal=t == len(self) - 1,
        )


@dataclass(frozen=True)
class Transition:
    global_state: np.ndarray
    joint_action: np.ndarray
    reward: float
    next_global_state: np.ndarray
    local_states: np.ndarray
    next_local_states: np.ndarray
    local_rewards: np.ndarray
    terminal: bool


@dataclass(frozen=True)
class Batch:
    episodes: Tuple[Episode, ...]
    episode_index: np.ndarray  # (B,) índice em episodes
    slots: np.ndarray  # (B,)

    def __len__(self) -> int:
        return len(self.slots)


class ReplayMemory:
    """
    Guarda episódios inteiros; descarta os mais antigos (FIFO) quando o total
    de transições passa da capacidade.
    """

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ValueError("capacidade deve ser positiva")
        self.capacity = capacity
        self._episodes: Deque[Episode] = deque()
        self._size = 0

    def __len__(self) -> int:
        return self._size

    @property
    def episodes(self) -> Tuple[Episode, ...]:
        return tuple(self._episodes)

    def push(self, episode: Episode) -> None:
        self._episodes.append(episode)
        self._size += len(episode)
        while self._size > self.capacity and len(self._episodes) > 1:
            self._size -= len(self._episodes.popleft())

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if self._size == 0:
            raise EmptySequenceError("memória de replay vazia")
        flat = rng.choice(self._size, size=batch_size, replace=self._size < batch_size)
        bounds = np.cumsum([len(e) for e in self._episodes])
        owner = np.searchsorted(bounds, flat, side="right")
        slots = flat - np.concatenate([[0], bounds[:-1]])[owner]
        used, episode_index = np.unique(owner, return_inverse=True)
        return Batch(
            episodes=tuple(self._episodes[int(i)] for i in used),
            episode_index=episode_index.ravel(),
            slots=slots,
        )


# Treino
@dataclass
class _AgentPass:
    tape: GruTape
    q_taken: np.ndarray  # (B,)
    next_max: np.ndarray  # (B,) max do alvo sobre ações válidas em t+1
    actions: np.ndarray  # (B,)


def _unroll_agent(
    m: int,
    net: AgentNet,
    target: AgentNet,
    batch: Batch,
    space: ActionSpace,
    num_rbs: int,
) -> _AgentPass:
    """
    Reconstrói os estados ocultos desde o início de cada episódio amostrado;
    a rede online vê s_0..s_{T-1} e a rede-alvo vê s_0..s_T.
    """
    states = np.stack([e.local_states[:, m] for e in batch.episodes], axis=1)  # (T+1, E, 3U)
    coverage = np.stack([e.coverage[:, m] for e in batch.episodes], axis=1)  # (T+1, E, U)
    actions = np.array([batch.episodes[e].actions[t, m] for e, t in zip(batch.episode_index, batch.slots)])

    tape = gru_unroll(net.gru, states[:-1])
    hidden = tape.hidden_states[batch.slots, batch.episode_index]  # (B, theta_h)
    q_taken = np.einsum("bh,bh->b", net.head[actions], hidden)

    target_hidden = gru_unroll(target.gru, states).hidden_states
    next_slots = batch.slots + 1
    next_q = target_hidden[next_slots, batch.episode_index] @ target.head.T  # (B, |A|)
    next_cov = coverage[next_slots, batch.episode_index]
    masks = np.stack([space.valid_mask(c, num_rbs) for c in next_cov])
    next_max = np.where(masks, next_q, -np.inf).max(axis=1)
    return _AgentPass(tape=tape, q_taken=q_taken, next_max=next_max, actions=actions)


def _terminal(batch: Batch) -> np.ndarray:
    return np.array([t == len(batch.episodes[e]) - 1 for e, t in zip(batch.episode_index, batch.slots)])


def _rewards(batch: Batch) -> np.ndarray:
    return np.array([batch.episodes[e].rewards[t] for e, t in zip(batch.episode_index, batch.slots)])


def _local_rewards(batch: Batch) -> np.ndarray:
    return np.stack([batch.episodes[e].local_rewards[t] for e, t in zip(batch.episode_index, batch.slots)])


def td_target(transition: Transition, next_max: Sequence[float], gamma: float) -> float:
    """
    r + gamma * sum_m max_a Q~_m(s_{t+1}, a); sem bootstrap no último slot.
    """
    if transition.terminal:
        return transition.reward
    return transition.reward + gamma * float(np.sum(next_max))


def _agent_grads(
    net: AgentNet,
    passed: _AgentPass,
    batch: Batch,
    q_grad: np.ndarray,
) -> Tuple[GruGrads, np.ndarray]:
    """Retropropaga dL/dQ_m (por amostra) pela cabeça e pela GRU desenrolada."""
    hidden = passed.tape.hidden_states
    d_head = np.zeros_like(net.head)
    np.add.at(d_head, passed.actions, q_grad[:, None] * hidden[batch.slots, batch.episode_index])
    hidden_grads = np.zeros_like(hidden)
    np.add.at(hidden_grads, (batch.slots, batch.episode_index), q_grad[:, None] * net.head[passed.actions])
    grads, _ = gru_backward(passed.tape, net.gru, hidden_grads)
    return grads, d_head


def vdn_loss_and_grads(
    nets: Sequence[AgentNet],
    targets: Sequence[AgentNet],
    batch: Batch,
    gamma: float,
    space: ActionSpace,
    num_rbs: int,
) -> Tuple[float, List[Tuple[GruGrads, np.ndarray]]]:
    """
    L = media_b (y_b - Q_tot,b)^2, com Q_tot a soma dos Qs locais. Cada agente
    recebe o erro compartilhado vezes o gradiente do seu próprio Q.
    """
    passes = [_unroll_agent(m, net, tgt, batch, space, num_rbs) for m, (net, tgt) in enumerate(zip(nets, targets))]
    bootstrap = np.where(_terminal(batch), 0.0, gamma * np.sum([p.next_max for p in passes], axis=0))
    y = _rewards(batch) + bootstrap
    delta = np.sum([p.q_taken for p in passes], axis=0) - y
    value = float(np.mean(delta ** 2))
    q_grad = 2.0 * delta / len(batch)
    grads = [_agent_grads(net, p, batch, q_grad) for net, p in zip(nets, passes)]
    return value, grads


def iql_loss_and_grads(
    nets: Sequence[AgentNet],
    targets: Sequence[AgentNet],
    batch: Batch,
    gamma: float,
    space: ActionSpace,
    num_rbs: int,
) -> Tuple[float, List[Tuple[GruGrads, np.ndarray]]]:
    """
    Cada agente minimiza seu próprio erro TD com a recompensa local r^m.
    A perda reportada é media_b sum_m delta_m^2.
    """
    local = _local_rewards(batch)
    terminal = _terminal(batch)
    value = 0.0
    grads = []
    for m, (net, tgt) in enumerate(zip(nets, targets)):
        passed = _unroll_agent(m, net, tgt, batch, space, num_rbs)
        y = local[:, m] + np.where(terminal, 0.0, gamma * passed.next_max)
        delta = passed.q_taken - y
        value += float(np.mean(delta ** 2))
        grads.append(_agent_grads(net, passed, batch, 2.0 * delta / len(batch)))
    return value, grads


def vdn_loss(nets, targets, batch, gamma, space, num_rbs) -> float:
    return vdn_loss_and_grads(nets, targets, batch, gamma, space, num_rbs)[0]


def _apply(nets: Sequence[AgentNet], grads, lr: float) -> List[AgentNet]:
    updated = []
    for net, (gru_grads, d_head) in zip(nets, grads):
        updated.append(AgentNet(gru=sgd_update_gru(net.gru, gru_grads, lr), head=sgd_step(net.head, d_head, lr)))
    return updated


def _checked(value: float, method: str) -> float:
    if not np.isfinite(value):
        logger.error("Perda %s não finita: %s", method, value)
        raise DivergenceError(f"perda {method} não finita")
    return value


def vdn_train_step(nets, targets, batch: Batch, lr: float, gamma: float, space: ActionSpace, num_rbs: int):
    value, grads = vdn_loss_and_grads(nets, targets, batch, gamma, space, num_rbs)
    _checked(value, "VDN")
    return _apply(nets, grads, lr), value


def iql_train_step(nets, targets, batch: Batch, lr: float, gamma: float, space: ActionSpace, num_rbs: int):
    value, grads = iql_loss_and_grads(nets, targets, batch, gamma, space, num_rbs)
    _checked(value, "IQL")
    return _apply(nets, grads, lr), value


def sync_targets(nets: Sequence[AgentNet], targets: Sequence[AgentNet], epoch: int, period: int) -> List[AgentNet]:
    """Cópia integral das redes online a cada `period` épocas."""
    if epoch % period != 0:
        return list(targets)
    logger.debug("Redes-alvo sincronizadas na época %d", epoch)
    return [net.clone() for net in nets]


def save_agents(directory: Path, nets: Sequence[AgentNet], meta: Optional[Dict[str, float]] = None) -> None:
    directory = Path(directory)
    for m, net in enumerate(nets):
        save_checkpoint(directory / f"agent_{m}.json", "agent", net.matrices(), meta)


def load_agents(directory: Path) -> List[AgentNet]:
    paths = sorted(Path(directory).glob("agent_*.json"), key=lambda p: int(p.stem.split("_")[1]))
    if not paths:
        raise FileNotFoundError(f"nenhum checkpoint de agente em {directory}")
    nets = []
    for path in paths:
        checkpoint = load_checkpoint(path)
        nets.append(AgentNet(gru=gru_from_checkpoint(checkpoint), head=from_record(checkpoint.matrices["head"])))
    return nets
