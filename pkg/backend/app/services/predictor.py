"""
Preditor GRU do lado da nuvem: janelas de treino, perda, SGD em mini-lotes
e predição um passo à frente que alimenta o gêmeo digital.

A rede não devolve a posição absoluta: W_o h é o deslocamento a partir do
último estado da janela, em unidades de `motion` (o passo da caminhada).
Com W_o zerado o preditor coincide com a persistência.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..core.exceptions import DimensionMismatchError, DivergenceError, EmptySequenceError
from .nncore import (
    DTYPE,
    GruCellParams,
    from_record,
    gru_from_checkpoint,
    gru_sequence_backward,
    gru_sequence_forward,
    init_dense,
    init_gru_params,
    load_checkpoint,
    save_checkpoint,
    sgd_step,
    sgd_update_gru,
)

logger = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e6


@dataclass(frozen=True)
class PredictorModel:
    """
    gru recebe 4U entradas por passo: posições / scale e deslocamento
    desde o passo anterior / motion. gain multiplica a saída e é ajustado
    por calibrate() depois do treino.
    """
    gru: GruCellParams
    out: np.ndarray  # W_o: (2U, N_h)
    window_k: int
    scale: float = 150.0
    motion: float = 1.0
    gain: float = 1.0

    def __post_init__(self):
        if self.out.shape[0] % 2 or self.out.shape[1] != self.gru.hidden_dim:
            raise DimensionMismatchError("W_o deve ter forma (2U, N_h)")
        if self.gru.input_dim != 2 * self.out.shape[0]:
            raise DimensionMismatchError("entrada do preditor deve ter 4U atributos")
        if self.scale <= 0 or self.motion <= 0:
            raise ValueError("scale e motion devem ser positivos")

    @property
    def num_users(self) -> int:
        return self.out.shape[0] // 2

    @property
    def width(self) -> int:
        return self.out.shape[0]


@dataclass(frozen=True)
class WindowSet:
    """K estados consecutivos achatados e o estado seguinte, por amostra."""
    inputs: np.ndarray  # (S, K, 2U)
    targets: np.ndarray  # (S, 2U)

    def __len__(self) -> int:
        return len(self.targets)

    def subset(self, index: np.ndarray) -> "WindowSet":
        return WindowSet(inputs=self.inputs[index], targets=self.targets[index])


def init_predictor(
    num_users: int,
    hidden: int,
    window_k: int,
    rng: Optional[np.random.Generator] = None,
    scale: float = 150.0,
    motion: float = 1.0,
    zero: bool = False,
) -> PredictorModel:
    """
    GRU aleatória (ou zerada) e W_o sempre zerado: o modelo novo repete a
    última posição.
    """
    d = 2 * num_users
    return PredictorModel(
        gru=init_gru_params(2 * d, hidden, rng, zero=zero),
        out=init_dense(d, hidden, zero=True),
        window_k=window_k,
        scale=scale,
        motion=motion,
    )


def build_windows(trajectories: np.ndarray, window_k: int) -> WindowSet:
    """
    trajectories: (num_traj, traj_len, U, 2). Janelas nunca cruzam trajetórias.
    """
    trajectories = np.asarray(trajectories, dtype=DTYPE)
    if trajectories.ndim != 4:
        raise DimensionMismatchError("esperado array (num_traj, traj_len, U, 2)")
    num_traj, traj_len, num_users, _ = trajectories.shape
    if window_k <= 0 or traj_len <= window_k or num_traj == 0:
        raise EmptySequenceError(f"trajetórias de {traj_len} passos não geram janelas de {window_k}")
    flat = trajectories.reshape(num_traj, traj_len, 2 * num_users)
    starts = np.arange(traj_len - window_k)
    inputs = np.stack([flat[:, s:s + window_k] for s in starts], axis=1)
    targets = flat[:, starts + window_k]
    return WindowSet(
        inputs=inputs.reshape(-1, window_k, 2 * num_users),
        targets=targets.reshape(-1, 2 * num_users),
    )


def _padded_history(history: Sequence[np.ndarray], window_k: int, width: int) -> np.ndarray:
    if len(history) == 0:
        raise EmptySequenceError("histórico vazio")
    states = [np.asarray(s, dtype=DTYPE).reshape(width) for s in history][-window_k:]
    # completa à esquerda repetindo o estado mais antigo
    states = [states[0]] * (window_k - len(states)) + states
    return np.stack(states)


def window_features(model: PredictorModel, inputs: np.ndarray) -> np.ndarray:
    """inputs (S, K, 2U) em metros -> (K, S, 4U), o eixo de tempo primeiro."""
    inputs = np.asarray(inputs, dtype=DTYPE)
    if inputs.shape[-1] != model.width:
        raise DimensionMismatchError(f"estados com {inputs.shape[-1]} coordenadas, esperado {model.width}")
    steps = np.diff(inputs, axis=1, prepend=inputs[:, :1])
    features = np.concatenate([inputs / model.scale, steps / model.motion], axis=2)
    return np.swapaxes(features, 0, 1)


def _forward(model: PredictorModel, inputs: np.ndarray):
    """Saída bruta W_o h (S, 2U), sem gain, e o tape."""
    return gru_sequence_forward(model.gru, model.out, window_features(model, inputs))


def _predict(model: PredictorModel, inputs: np.ndarray) -> np.ndarray:
    raw, _ = _forward(model, inputs)
    return inputs[:, -1] + model.motion * model.gain * raw


def predict_next(model: PredictorModel, history: Sequence[np.ndarray]) -> np.ndarray:
    """
    Predição de s_{t+1} (2U coordenadas) a partir dos últimos K estados do gêmeo.
    """
    window = _padded_history(history, model.window_k, model.width)
    return _predict(model, window[None])[0]


def predict_batch(model: PredictorModel, windows: WindowSet) -> np.ndarray:
    return _predict(model, windows.inputs)


def displacement_targets(model: PredictorModel, windows: WindowSet) -> np.ndarray:
    return (windows.targets - windows.inputs[:, -1]) / model.motion


def loss(pred: np.ndarray, truth: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=DTYPE).ravel()
    truth = np.asarray(truth, dtype=DTYPE).ravel()
    if pred.shape != truth.shape:
        raise DimensionMismatchError("pred e truth com tamanhos diferentes")
    return float(np.sum((pred - truth) ** 2) / len(pred))


def batch_loss_and_grads(model: PredictorModel, windows: WindowSet):
    """
    Perda média do lote sobre os deslocamentos (em unidades de motion) e
    gradientes de (GRU, W_o).
    """
    raw, tape = _forward(model, windows.inputs)
    diff = model.gain * raw - displacement_targets(model, windows)
    batch, width = diff.shape
    value = float(np.sum(diff ** 2) / (batch * width))
    grads, d_out = gru_sequence_backward(tape, model.gru, model.out, 2.0 * model.gain * diff / (batch * width))
    return value, grads, d_out


def train(
    model: PredictorModel,
    windows: WindowSet,
    lr: float,
    batch_size: int,
    epochs: int,
    rng: np.random.Generator,
) -> Tuple[PredictorModel, List[float]]:
    """
    SGD em mini-lotes embaralhados; devolve o modelo treinado e a perda por época.
    """
    if len(windows) == 0:
        raise EmptySequenceError("conjunto de treino vazio")
    curve = []
    for epoch in range(epochs):
        order = rng.permutation(len(windows))
        total = 0.0
        for start in range(0, len(order), batch_size):
            batch = windows.subset(order[start:start + batch_size])
            value, grads, d_out = batch_loss_and_grads(model, batch)
            total += value * len(batch)
            model = replace(
                model,
                gru=sgd_update_gru(model.gru, grads, lr),
                out=sgd_step(model.out, d_out, lr),
            )
        epoch_loss = total / len(windows)
        if not np.isfinite(epoch_loss) or epoch_loss > DIVERGENCE_LIMIT:
            logger.error("Preditor divergiu na época %d (perda %s)", epoch, epoch_loss)
            raise DivergenceError(f"perda do preditor divergiu: {epoch_loss}")
        curve.append(epoch_loss)
        logger.info("Preditor época %d/%d: perda %.6g", epoch + 1, epochs, epoch_loss)
    return model, curve


def calibrate(model: PredictorModel, windows: WindowSet) -> PredictorModel:
    """
    Ajusta gain >= 0 por mínimos quadrados num conjunto de validação.

    Quando a saída da rede não se correlaciona com o deslocamento real, gain
    vai a zero e o preditor volta à persistência.
    """
    if len(windows) == 0:
        raise EmptySequenceError("conjunto de validação vazio")
    raw, _ = _forward(model, windows.inputs)
    power = float(np.sum(raw ** 2))
    if power == 0.0:
        return model
    gain = max(0.0, float(np.sum(raw * displacement_targets(model, windows))) / power)
    logger.info("Preditor calibrado: gain %.4g", gain)
    return replace(model, gain=gain)


def _per_user_mse(pred: np.ndarray, targets: np.ndarray) -> np.ndarray:
    sq = (pred - targets) ** 2
    return sq.reshape(len(sq), -1, 2).sum(axis=2).mean(axis=0)


def evaluate_mse(model: PredictorModel, heldout: WindowSet) -> Tuple[np.ndarray, float]:
    """
    MSE de posição por usuário (média sobre amostras de dx^2 + dy^2) e a média entre usuários.
    """
    per_user = _per_user_mse(predict_batch(model, heldout), heldout.targets)
    return per_user, float(per_user.mean())


def persistence_mse(heldout: WindowSet) -> Tuple[np.ndarray, float]:
    """Baseline que repete a última posição vista."""
    per_user = _per_user_mse(heldout.inputs[:, -1], heldout.targets)
    return per_user, float(per_user.mean())


def save_predictor(path: Path, model: PredictorModel) -> None:
    matrices = dict(model.gru.as_dict())
    matrices["W_o"] = model.out
    meta = {
        "window_k": float(model.window_k),
        "scale": float(model.scale),
        "motion": float(model.motion),
        "gain": float(model.gain),
    }
    save_checkpoint(path, "predictor", matrices, meta)


def load_predictor(path: Path) -> PredictorModel:
    checkpoint = load_checkpoint(path)
    if checkpoint.kind != "predictor":
        raise ValueError(f"checkpoint {path} não é de preditor ({checkpoint.kind})")
    return PredictorModel(
        gru=gru_from_checkpoint(checkpoint),
        out=from_record(checkpoint.matrices["W_o"]),
        window_k=int(checkpoint.meta["window_k"]),
        scale=checkpoint.meta["scale"],
        motion=checkpoint.meta["motion"],
        gain=checkpoint.meta["gain"],
    )
