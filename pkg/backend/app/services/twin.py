"""
Estado físico, observação parcial por BS, composição do gêmeo digital e recompensa.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from ..schemas.schemas import Topology

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PhysicalState:
    positions: np.ndarray  # (U, 2)

    @property
    def num_users(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class LocalObservation:
    bs: int
    covered_users: Tuple[int, ...]
    positions: np.ndarray  # (len(covered_users), 2)


@dataclass(frozen=True)
class TwinState:
    positions: np.ndarray  # (U, 2)
    received: np.ndarray  # (U,) bool; False => predicted

    @property
    def num_users(self) -> int:
        return len(self.positions)

    def provenance(self) -> List[str]:
        return ["received" if flag else "predicted" for flag in self.received]


def coverage_matrix(positions: np.ndarray, topology: Topology) -> np.ndarray:
    """(M, U) booleano; a borda do disco conta como coberta."""
    bs = np.asarray(topology.bs_positions, dtype=float)
    dist = np.linalg.norm(bs[:, None, :] - np.asarray(positions, dtype=float)[None, :, :], axis=-1)
    return dist <= topology.coverage_radius


def observe(bs: int, phys: PhysicalState, topology: Topology) -> LocalObservation:
    if not 0 <= bs < topology.num_bs:
        raise IndexError(f"BS {bs} inexistente")
    covered = np.flatnonzero(coverage_matrix(phys.positions, topology)[bs])
    return LocalObservation(
        bs=bs,
        covered_users=tuple(int(u) for u in covered),
        positions=phys.positions[covered].copy(),
    )


def compose_twin(
    prev_twin: TwinState,
    predictions: np.ndarray,
    observations: Sequence[LocalObservation],
    sync_success: Sequence[bool],
) -> TwinState:
    """
    Usuários cobertos por uma BS que sincronizou recebem a posição observada;
    os demais (inclusive os sem cobertura) ficam com a predição.
    """
    predictions = np.asarray(predictions, dtype=float).reshape(-1, 2)
    if len(predictions) != prev_twin.num_users:
        raise ValueError("predictions deve ter U posições")
    positions = predictions.copy()
    received = np.zeros(len(predictions), dtype=bool)
    for obs, synced in zip(observations, sync_success):
        if not synced or not obs.covered_users:
            continue
        users = list(obs.covered_users)
        positions[users] = obs.positions
        received[users] = True
    return TwinState(positions=positions, received=received)


def sync_error(phys: PhysicalState, twin: TwinState) -> float:
    if phys.num_users != twin.num_users:
        raise ValueError("estados com tamanhos diferentes")
    return float(np.sum((phys.positions - twin.positions) ** 2) / phys.num_users)


def association_counts(assoc: np.ndarray) -> np.ndarray:
    """xi_u = sum_m z_{m,u} a partir da matriz (M, U) de associação."""
    return np.asarray(assoc, dtype=int).sum(axis=0)


def team_reward(
    phys: PhysicalState,
    twin: TwinState,
    rates: np.ndarray,
    assoc_counts: np.ndarray,
    epsilon: float,
    rho: float,
) -> float:
    assoc_counts = np.asarray(assoc_counts)
    if np.all(assoc_counts == 1):
        return float(-(1.0 - epsilon) * sync_error(phys, twin) + epsilon * np.sum(rates))
    over = assoc_counts > 1
    return float(np.sum(assoc_counts[over] * rho))


def local_rewards(
    phys: PhysicalState,
    twin: TwinState,
    rates: np.ndarray,
    assoc: np.ndarray,
    serving_bs: Sequence,
    coverage: np.ndarray,
    epsilon: float,
    rho: float,
) -> np.ndarray:
    """
    Recompensa local por BS para o IQL.

    Se a BS reivindica algum usuário com xi > 1, recebe a penalidade desses
    usuários; senão, eps * (taxa dos usuários que ela serve) menos
    (1 - eps)/U vezes o erro do gêmeo sobre os usuários que ela cobre.
    """
    assoc = np.asarray(assoc, dtype=bool)
    counts = association_counts(assoc)
    num_users = phys.num_users
    rewards = np.zeros(len(assoc))
    for m in range(len(assoc)):
        claimed_over = assoc[m] & (counts > 1)
        if claimed_over.any():
            rewards[m] = float(np.sum(counts[claimed_over] * rho))
            continue
        served = np.array([bs == m for bs in serving_bs], dtype=bool)
        covered = coverage[m]
        error = np.sum((phys.positions[covered] - twin.positions[covered]) ** 2) / num_users
        rewards[m] = float(epsilon * np.sum(np.asarray(rates)[served]) - (1.0 - epsilon) * error)
    return rewards
