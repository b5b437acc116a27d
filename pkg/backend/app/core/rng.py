"""Fluxos aleatórios nomeados, derivados de uma semente mestre."""
from __future__ import annotations

import zlib

import numpy as np

STREAMS = ("mobility", "fading", "exploration", "init", "replay", "predictor")


def _stream_key(name: str) -> int:
    if name not in STREAMS:
        raise KeyError(f"fluxo aleatório desconhecido: {name}")
    return zlib.crc32(name.encode("utf-8"))


class RngStreams:
    """
    Geradores numpy independentes indexados por (semente mestre, nome do fluxo, faixa).

    Mudar quantos sorteios um fluxo consome nunca desloca outro, então o
    ruído de exploração não perturba as trajetórias dos usuários.
    """

    def __init__(self, seed: int):
        self._seed = int(seed)

    @property
    def seed(self) -> int:
        return self._seed

    def generator(self, name: str, *lane: int) -> np.random.Generator:
        sequence = np.random.SeedSequence(
            entropy=self._seed,
            spawn_key=(_stream_key(name), *(int(i) for i in lane)),
        )
        return np.random.default_rng(sequence)

    def fork(self, offset: int) -> RngStreams:
        """Fluxos filhos para um ponto de varredura ou uma repetição independente."""
        return RngStreams(self._seed * 1_000_003 + int(offset))
