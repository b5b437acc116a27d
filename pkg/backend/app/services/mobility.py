"""
Mobilidade dos usuários em caminhada aleatória e geração do conjunto de trajetórias.
"""
import logging
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from ..schemas.schemas import MobilityProfile, Topology, UserPosition

logger = logging.getLogger(__name__)

# ficar, frente (+y), trás (-y), esquerda (-x), direita (+x)
MOVES = np.array([[0.0, 0.0], [0.0, 1.0], [0.0, -1.0], [-1.0, 0.0], [1.0, 0.0]])


class Area:
    """
    Retângulo centrado na origem (300 x 100 por padrão).
    """

    def __init__(self, width: float, height: float):
        self.half_width = width / 2.0
        self.half_height = height / 2.0

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        return (np.abs(points[:, 0]) <= self.half_width) & (np.abs(points[:, 1]) <= self.half_height)


def covered_by_any(points: np.ndarray, topology: Topology) -> np.ndarray:
    points = np.atleast_2d(points)
    bs = np.asarray(topology.bs_positions, dtype=float)
    dist = np.linalg.norm(points[:, None, :] - bs[None, :, :], axis=-1)
    return (dist <= topology.coverage_radius).any(axis=1)


def _cumulative(profiles: Sequence[MobilityProfile]) -> np.ndarray:
    cdf = np.cumsum(np.array([p.probabilities for p in profiles], dtype=float), axis=1)
    cdf[:, -1] = 1.0
    return cdf


def step_users(
    positions: np.ndarray,
    profiles: Sequence[MobilityProfile],
    rng: np.random.Generator,
    area: Optional[Area] = None,
    topology: Optional[Topology] = None,
) -> np.ndarray:
    """
    Um passo da caminhada aleatória para todos os usuários.

    Movimentos que saem da área (ou da união das coberturas, quando
    topology é dada) viram "ficar".
    """
    positions = np.asarray(positions, dtype=float)
    draws = rng.random(len(positions))
    choice = np.argmax(draws[:, None] < _cumulative(profiles), axis=1)
    steps = np.array([p.step for p in profiles], dtype=float)
    proposal = positions + MOVES[choice] * steps[:, None]

    allowed = np.ones(len(positions), dtype=bool)
    if area is not None:
        allowed &= area.contains(proposal)
    if topology is not None:
        allowed &= covered_by_any(proposal, topology)
    return np.where(allowed[:, None], proposal, positions)


def step_user(
    pos: UserPosition,
    profile: MobilityProfile,
    rng: np.random.Generator,
    area: Optional[Area] = None,
    topology: Optional[Topology] = None,
) -> UserPosition:
    moved = step_users(np.array([[pos.x, pos.y]]), [profile], rng, area, topology)[0]
    return UserPosition(x=float(moved[0]), y=float(moved[1]))


def initial_positions(
    num_users: int,
    topology: Topology,
    area: Area,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Posições uniformes na união dos discos de cobertura, dentro da área.
    """
    accepted = []
    while len(accepted) < num_users:
        candidates = np.column_stack([
            rng.uniform(-area.half_width, area.half_width, size=4 * num_users),
            rng.uniform(-area.half_height, area.half_height, size=4 * num_users),
        ])
        keep = covered_by_any(candidates, topology) & area.contains(candidates)
        accepted.extend(candidates[keep])
    return np.array(accepted[:num_users])


def generate_trajectories(
    num_users: int,
    num_traj: int,
    traj_len: int,
    profiles: Sequence[MobilityProfile],
    rng: np.random.Generator,
    topology: Topology,
    area: Area,
    confine_to_coverage: bool = False,
) -> np.ndarray:
    """
    Retorna um array (num_traj, traj_len, U, 2) de posições conjuntas.

    Cada trajetória usa um gerador filho derivado de rng.
    """
    if min(num_users, num_traj, traj_len) <= 0:
        raise ValueError("contagens devem ser positivas")
    if len(profiles) != num_users:
        raise ValueError("um perfil por usuário")
    confine = topology if confine_to_coverage else None
    dataset = np.empty((num_traj, traj_len, num_users, 2))
    for index, child in enumerate(rng.spawn(num_traj)):
        positions = initial_positions(num_users, topology, area, child)
        dataset[index, 0] = positions
        for slot in range(1, traj_len):
            positions = step_users(positions, profiles, child, area, confine)
            dataset[index, slot] = positions
    logger.info("Geradas %d trajetórias de %d passos para %d usuários", num_traj, traj_len, num_users)
    return dataset


def trajectory_columns(num_users: int) -> list:
    columns = ["traj", "slot"]
    for u in range(num_users):
        columns += [f"u{u}x", f"u{u}y"]
    return columns


def save_trajectories_csv(dataset: np.ndarray, path: Path) -> None:
    num_traj, traj_len, num_users, _ = dataset.shape
    traj_index, slot_index = np.meshgrid(np.arange(num_traj), np.arange(traj_len), indexing="ij")
    frame = pd.DataFrame(dataset.reshape(num_traj * traj_len, num_users * 2), columns=trajectory_columns(num_users)[2:])
    frame.insert(0, "slot", slot_index.ravel())
    frame.insert(0, "traj", traj_index.ravel())
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)


def load_trajectories_csv(path: Path) -> np.ndarray:
    frame = pd.read_csv(path, float_precision="round_trip").sort_values(["traj", "slot"])
    num_traj = frame["traj"].nunique()
    traj_len = frame["slot"].nunique()
    coords = frame.drop(columns=["traj", "slot"]).to_numpy(dtype=float)
    return coords.reshape(num_traj, traj_len, -1, 2)
