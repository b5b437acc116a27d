"""
Alocação de RBs por BS: emparelhamento de peso máximo (húngaro) entre
usuários associados e RBs livres, escolha do RB de uplink e o laço
sequencial entre BSs.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..schemas.schemas import RadioParams
from .radio import (
    Allocation,
    ChannelState,
    downlink_interference_grid,
    downlink_rates,
    shannon_rate,
    uplink_delays,
    uplink_interference,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MatchResult:
    pairs: Tuple[Tuple[int, int], ...]  # (linha, coluna)
    total_weight: float = 0.0

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class SyncFailure:
    bs: int
    delay: float
    slot: Optional[int] = None


@dataclass
class AllocationOutcome:
    allocation: Allocation
    sync_success: np.ndarray  # (M,) bool
    delays: np.ndarray  # (M,) atraso de uplink; inf sem uplink
    failures: List[SyncFailure] = field(default_factory=list)
    unserved: List[int] = field(default_factory=list)


def hungarian_max_weight(w) -> MatchResult:
    """
    Emparelhamento de peso máximo; matrizes retangulares são resolvidas
    diretamente (equivale a completar com zeros).
    """
    w = np.asarray(w, dtype=float)
    if w.size == 0:
        return MatchResult(pairs=())
    if w.ndim != 2:
        raise ValueError("matriz de pesos deve ser 2D")
    if not np.all(np.isfinite(w)) or np.any(w < 0.0):
        raise ValueError("pesos devem ser finitos e não negativos")
    rows, cols = linear_sum_assignment(w, maximize=True)
    pairs = tuple((int(r), int(c)) for r, c in zip(rows, cols))
    return MatchResult(pairs=pairs, total_weight=float(w[rows, cols].sum()))


def build_weights(
    bs: int,
    assoc_users: Sequence[int],
    free_rbs: Sequence[int],
    fixed_alloc: Allocation,
    channel: ChannelState,
    params: RadioParams,
) -> np.ndarray:
    """
    psi[u, n]: taxa de downlink de u no RB n dada a interferência das alocações já fixadas.
    """
    users = np.asarray(assoc_users, dtype=int)
    rbs = np.asarray(free_rbs, dtype=int)
    if len(users) == 0 or len(rbs) == 0:
        return np.zeros((len(users), len(rbs)))
    interference = downlink_interference_grid(users, bs, rbs, fixed_alloc, channel, params)
    signal = params.power * channel.user_gain[users, bs][:, None]
    noise = params.bandwidth * params.noise_psd
    return params.bandwidth * np.log2(1.0 + signal / (interference + noise))


def select_uplink_rb(
    bs: int,
    sync_flag: bool,
    fixed_alloc: Allocation,
    channel: ChannelState,
    params: RadioParams,
    slot: Optional[int] = None,
) -> Optional[int]:
    """
    RB de maior taxa de uplink (menor índice no empate). Prefere RBs ainda
    sem nenhuma transmissão; nunca usa um RB já reservado para o uplink de
    outra BS. Devolve None se não houver sincronização ou se o atraso
    resultante exceder alpha.
    """
    if not sync_flag:
        return None
    rb, delay = _best_uplink(bs, fixed_alloc, channel, params)
    if rb is None or delay > params.delay_cap:
        logger.warning("Sincronização da BS %d falhou no slot %s: atraso %.4g > alpha", bs, slot, delay)
        return None
    return rb


def _best_uplink(bs: int, alloc: Allocation, channel: ChannelState, params: RadioParams) -> Tuple[Optional[int], float]:
    occupancy = alloc.occupancy()
    own_free = (occupancy[bs] == 0) & ~alloc.y.any(axis=0)
    clean = own_free & (occupancy.sum(axis=0) == 0)
    candidates = np.flatnonzero(clean if clean.any() else own_free)
    if len(candidates) == 0:
        return None, float("inf")
    signal = params.power * channel.cloud_gain[bs]
    rates = np.array([
        shannon_rate(signal, uplink_interference(bs, int(rb), alloc, channel, params), params)
        for rb in candidates
    ])
    best = int(np.argmax(rates))
    delay = params.payload / rates[best] if rates[best] > 0.0 else float("inf")
    return int(candidates[best]), float(delay)


def _match_bs(
    bs: int,
    assoc: np.ndarray,
    alloc: Allocation,
    channel: ChannelState,
    params: RadioParams,
) -> None:
    """
    Refaz o emparelhamento de usuários da BS com as demais fixas. RBs
    reservados para uplink, de qualquer BS, ficam fora da matriz de pesos.
    """
    alloc.x[bs] = False
    others = np.arange(alloc.x.shape[0]) != bs
    served_elsewhere = alloc.x[others].any(axis=(0, 2))
    wanted = np.flatnonzero(assoc[bs])
    users = wanted[~served_elsewhere[wanted]]
    free_rbs = np.flatnonzero(~alloc.y.any(axis=0))
    weights = build_weights(bs, users, free_rbs, alloc, channel, params)
    match = hungarian_max_weight(weights)
    for row, col in match.pairs:
        alloc.x[bs, users[row], free_rbs[col]] = True
    if len(match) < len(wanted):
        left_out = np.setdiff1d(wanted, [users[row] for row, _ in match.pairs])
        logger.info("BS %d: usuários associados sem RB neste slot: %s", bs, left_out.tolist())


def allocate_all(
    syncs: Sequence[bool],
    assoc: np.ndarray,
    channel: ChannelState,
    params: RadioParams,
    refinement_rounds: int = 1,
    slot: Optional[int] = None,
) -> AllocationOutcome:
    """
    Laço sequencial sobre as BSs em ordem de índice.

    Primeiro cada BS que sincroniza reserva seu RB de uplink; depois cada
    BS calcula os pesos contra as escolhas já fixadas e emparelha seus
    usuários com os RBs que não carregam uplink.

    Rodadas extras refazem o emparelhamento de cada BS contra a interferência
    completa e só são aceitas se a soma das taxas não cair.

    O sucesso da sincronização é decidido na reserva: ninguém transmite
    depois num RB de uplink, então o atraso não cresce até o fim do slot.
    """
    assoc = np.asarray(assoc, dtype=bool)
    num_bs, num_users = assoc.shape
    alloc = Allocation.empty(num_bs, num_users, params.num_rbs)
    failures: List[SyncFailure] = []

    for bs in range(num_bs):
        rb = select_uplink_rb(bs, bool(syncs[bs]), alloc, channel, params, slot)
        if rb is not None:
            alloc.y[bs, rb] = True
        elif syncs[bs]:
            failures.append(SyncFailure(bs=bs, delay=_best_uplink(bs, alloc, channel, params)[1], slot=slot))

    for bs in range(num_bs):
        _match_bs(bs, assoc, alloc, channel, params)

    for _ in range(refinement_rounds - 1):
        for bs in range(num_bs):
            candidate = alloc.copy()
            _match_bs(bs, assoc, candidate, channel, params)
            if downlink_rates(candidate, channel, params).sum() >= downlink_rates(alloc, channel, params).sum():
                alloc = candidate

    sync_success = alloc.y.any(axis=1)
    delays = np.where(sync_success, uplink_delays(alloc, channel, params), np.inf)
    unserved = np.flatnonzero(assoc.any(axis=0) & ~alloc.x.any(axis=(0, 2)))
    return AllocationOutcome(
        allocation=alloc,
        sync_success=sync_success,
        delays=delays,
        failures=failures,
        unserved=unserved.tolist(),
    )
