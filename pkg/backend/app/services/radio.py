"""
Canal, interferência, taxas de downlink/uplink e atraso de sincronização.

Convenções de índice: x[m, u, n] (BS, usuário, RB) e y[m, n] (BS, RB).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List

import numpy as np

from ..schemas.schemas import RadioParams, Topology

logger = logging.getLogger(__name__)

MIN_DISTANCE = 1e-6


@dataclass(frozen=True)
class FadingDraw:
    users: np.ndarray  # (U, M)
    cloud: np.ndarray  # (M,)


@dataclass(frozen=True)
class ChannelState:
    user_gain: np.ndarray  # (U, M): h_m(l_u)
    cloud_gain: np.ndarray  # (M,): h_m(l^C)

    @property
    def num_users(self) -> int:
        return self.user_gain.shape[0]

    @property
    def num_bs(self) -> int:
        return self.user_gain.shape[1]


@dataclass
class Allocation:
    x: np.ndarray  # (M, U, N) bool
    y: np.ndarray  # (M, N) bool

    @classmethod
    def empty(cls, num_bs: int, num_users: int, num_rbs: int) -> "Allocation":
        return cls(
            x=np.zeros((num_bs, num_users, num_rbs), dtype=bool),
            y=np.zeros((num_bs, num_rbs), dtype=bool),
        )

    def copy(self) -> "Allocation":
        return Allocation(x=self.x.copy(), y=self.y.copy())

    @property
    def num_rbs(self) -> int:
        return self.y.shape[1]

    def occupancy(self) -> np.ndarray:
        """Transmissões por (BS, RB): usuários servidos mais o uplink."""
        return self.x.sum(axis=1) + self.y

    def serving(self, user: int):
        """(bs, rb) concedido ao usuário, ou None."""
        hits = np.argwhere(self.x[:, user, :])
        if len(hits) == 0:
            return None
        return int(hits[0][0]), int(hits[0][1])

    def uplink_rb(self, bs: int):
        hits = np.flatnonzero(self.y[bs])
        return int(hits[0]) if len(hits) else None


def draw_fading(num_users: int, num_bs: int, rng: np.random.Generator, model: str = "rayleigh") -> FadingDraw:
    """
    Potência de Rayleigh: exponencial de média unitária, i.i.d. por enlace e slot.
    O número de sorteios não depende das ações, então VDN e IQL veem o mesmo canal.
    """
    users = rng.exponential(1.0, size=(num_users, num_bs))
    cloud = rng.exponential(1.0, size=num_bs)
    if model == "none":
        return FadingDraw(users=np.ones_like(users), cloud=np.ones_like(cloud))
    return FadingDraw(users=users, cloud=cloud)


def _pathloss(distance: np.ndarray, mode: str) -> np.ndarray:
    distance = np.asarray(distance, dtype=float)
    if np.any(distance < MIN_DISTANCE):
        logger.warning("Distância nula até a BS; limitando a %g", MIN_DISTANCE)
        distance = np.maximum(distance, MIN_DISTANCE)
    # d = sqrt(||.||) => d^-2 = 1/||.||
    if mode == "linear":
        return 1.0 / distance
    if mode == "squared":
        return 1.0 / distance ** 2
    raise ValueError(f"pathloss_mode desconhecido: {mode}")


def channel_gain(target_point, bs_index: int, topology: Topology, fading: float, pathloss_mode: str = "linear") -> float:
    bs = np.asarray(topology.bs_positions[bs_index], dtype=float)
    distance = np.linalg.norm(np.asarray(target_point, dtype=float) - bs)
    return float(fading * _pathloss(distance, pathloss_mode))


def build_channel(positions: np.ndarray, topology: Topology, fading: FadingDraw, pathloss_mode: str = "linear") -> ChannelState:
    bs = np.asarray(topology.bs_positions, dtype=float)
    user_dist = np.linalg.norm(np.asarray(positions, dtype=float)[:, None, :] - bs[None, :, :], axis=-1)
    cloud_dist = np.linalg.norm(np.asarray(topology.cloud_position, dtype=float)[None, :] - bs, axis=-1)
    return ChannelState(
        user_gain=fading.users * _pathloss(user_dist, pathloss_mode),
        cloud_gain=fading.cloud * _pathloss(cloud_dist, pathloss_mode),
    )


def downlink_interference(user: int, serving_bs: int, rb: int, alloc: Allocation, channel: ChannelState, params: RadioParams) -> float:
    """
    Interferência de outras BSs no RB, medida na posição do usuário vítima
    (o somatório de usuários exclui i = u).
    """
    if not 0 <= rb < alloc.num_rbs:
        raise IndexError(f"RB {rb} fora de [0, {alloc.num_rbs})")
    others = np.arange(channel.num_bs) != serving_bs
    active = alloc.x[:, :, rb].sum(axis=1) - alloc.x[:, user, rb] + alloc.y[:, rb]
    return float(np.sum(active[others] * params.power * channel.user_gain[user, others]))


def downlink_interference_grid(users, serving_bs: int, rbs, alloc: Allocation, channel: ChannelState, params: RadioParams) -> np.ndarray:
    """downlink_interference para cada par (usuário, RB), forma (len(users), len(rbs))."""
    users = np.asarray(users, dtype=int)
    rbs = np.asarray(rbs, dtype=int)
    others = np.arange(channel.num_bs) != serving_bs
    active = alloc.occupancy()[others][:, rbs].astype(float)
    own = alloc.x[others][:, users][:, :, rbs].astype(float)
    gains = channel.user_gain[users][:, others]
    return params.power * (gains @ active - np.einsum("rm,mrc->rc", gains, own))


def uplink_interference(bs: int, rb: int, alloc: Allocation, channel: ChannelState, params: RadioParams) -> float:
    """
    Interferência na nuvem; o somatório percorre todos os usuários.
    """
    if not 0 <= rb < alloc.num_rbs:
        raise IndexError(f"RB {rb} fora de [0, {alloc.num_rbs})")
    others = np.arange(channel.num_bs) != bs
    active = alloc.occupancy()[:, rb]
    return float(np.sum(active[others] * params.power * channel.cloud_gain[others]))


def shannon_rate(signal: float, interference: float, params: RadioParams) -> float:
    return float(params.bandwidth * np.log2(1.0 + signal / (interference + params.bandwidth * params.noise_psd)))


def downlink_rate(user: int, bs: int, alloc: Allocation, channel: ChannelState, params: RadioParams) -> float:
    signal = params.power * channel.user_gain[user, bs]
    return sum(
        shannon_rate(signal, downlink_interference(user, bs, int(rb), alloc, channel, params), params)
        for rb in np.flatnonzero(alloc.x[bs, user])
    )


def uplink_rate(bs: int, alloc: Allocation, channel: ChannelState, params: RadioParams) -> float:
    signal = params.power * channel.cloud_gain[bs]
    return sum(
        shannon_rate(signal, uplink_interference(bs, int(rb), alloc, channel, params), params)
        for rb in np.flatnonzero(alloc.y[bs])
    )


def uplink_delay(bs: int, alloc: Allocation, channel: ChannelState, params: RadioParams) -> float:
    rate = uplink_rate(bs, alloc, channel, params)
    if rate <= 0.0:
        return float("inf")
    return params.payload / rate


def downlink_rates(alloc: Allocation, channel: ChannelState, params: RadioParams) -> np.ndarray:
    """Taxa de cada usuário somada sobre todas as BSs."""
    rates = np.zeros(channel.num_users)
    for bs, user in np.argwhere(alloc.x.any(axis=2)):
        rates[user] += downlink_rate(int(user), int(bs), alloc, channel, params)
    return rates


def uplink_delays(alloc: Allocation, channel: ChannelState, params: RadioParams) -> np.ndarray:
    return np.array([uplink_delay(m, alloc, channel, params) for m in range(channel.num_bs)])


def audit_allocation(alloc: Allocation) -> List[str]:
    """
    Restrições violadas: 8b (x binário), 8c (um RB por usuário no total),
    8d (um usuário por RB de cada BS), 8e (y binário e no máximo um RB de
    uplink por BS), 8f (RB usado por usuário ou pelo uplink, não ambos).
    """
    violations = []
    if alloc.x.dtype != bool and not np.isin(alloc.x, (0, 1)).all():
        violations.append("8b")
    if np.any(alloc.x.sum(axis=(0, 2)) > 1):
        violations.append("8c")
    if np.any(alloc.x.sum(axis=1) > 1):
        violations.append("8d")
    if (alloc.y.dtype != bool and not np.isin(alloc.y, (0, 1)).all()) or np.any(alloc.y.sum(axis=1) > 1):
        violations.append("8e")
    if np.any(alloc.occupancy() > 1):
        violations.append("8f")
    return violations
