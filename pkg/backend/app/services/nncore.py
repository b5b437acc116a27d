"""
Núcleo de rede neural: matrizes densas, célula GRU sem bias, BPTT analítico e SGD.

Vetores podem vir com um eixo de lote à esquerda (linhas), então
x tem forma (d_in,) ou (B, d_in) e h tem forma (N_h,) ou (B, N_h).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
from scipy.special import expit

from ..core.exceptions import (
    DimensionMismatchError,
    EmptySequenceError,
    NonFiniteGradientError,
)
from ..schemas.schemas import Checkpoint, MatrixRecord

logger = logging.getLogger(__name__)

DTYPE = np.float64


@dataclass(frozen=True)
class GruCellParams:
    """Blocos das portas de reset (r), update (z) e candidata (h), sem biases."""
    W_r: np.ndarray
    U_r: np.ndarray
    W_z: np.ndarray
    U_z: np.ndarray
    W_h: np.ndarray
    U_h: np.ndarray

    def __post_init__(self):
        n_h, d_in = self.W_r.shape
        for name in ("W_r", "W_z", "W_h"):
            if getattr(self, name).shape != (n_h, d_in):
                raise DimensionMismatchError(f"{name} deve ter forma {(n_h, d_in)}")
        for name in ("U_r", "U_z", "U_h"):
            if getattr(self, name).shape != (n_h, n_h):
                raise DimensionMismatchError(f"{name} deve ter forma {(n_h, n_h)}")

    @property
    def input_dim(self) -> int:
        return self.W_r.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.W_r.shape[0]

    def as_dict(self) -> Dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class GruGrads:
    W_r: np.ndarray
    U_r: np.ndarray
    W_z: np.ndarray
    U_z: np.ndarray
    W_h: np.ndarray
    U_h: np.ndarray

    def as_dict(self) -> Dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class GruStep:
    x: np.ndarray
    h_prev: np.ndarray
    r: np.ndarray
    z: np.ndarray
    h_tilde: np.ndarray
    h: np.ndarray


@dataclass
class GruTape:
    steps: List[GruStep] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def hidden_states(self) -> np.ndarray:
        return np.stack([step.h for step in self.steps])


def init_gru_params(d_in: int, n_h: int, rng: Optional[np.random.Generator] = None, zero: bool = False) -> GruCellParams:
    """
    Pesos uniformes em [-1/sqrt(N_h), 1/sqrt(N_h)], ou todos zero.
    """
    if d_in <= 0 or n_h <= 0:
        raise DimensionMismatchError("dimensões devem ser positivas")
    shapes = {"W_r": (n_h, d_in), "U_r": (n_h, n_h), "W_z": (n_h, d_in),
              "U_z": (n_h, n_h), "W_h": (n_h, d_in), "U_h": (n_h, n_h)}
    if zero:
        return GruCellParams(**{k: np.zeros(s, dtype=DTYPE) for k, s in shapes.items()})
    if rng is None:
        raise ValueError("rng é obrigatório para inicialização aleatória")
    bound = 1.0 / np.sqrt(n_h)
    return GruCellParams(**{k: rng.uniform(-bound, bound, size=s).astype(DTYPE) for k, s in shapes.items()})


def init_dense(rows: int, cols: int, rng: Optional[np.random.Generator] = None, zero: bool = False) -> np.ndarray:
    if zero:
        return np.zeros((rows, cols), dtype=DTYPE)
    if rng is None:
        raise ValueError("rng é obrigatório para inicialização aleatória")
    bound = 1.0 / np.sqrt(cols)
    return rng.uniform(-bound, bound, size=(rows, cols)).astype(DTYPE)


def gru_cell_forward(params: GruCellParams, x: np.ndarray, h_prev: np.ndarray) -> Tuple[np.ndarray, GruStep]:
    x = np.asarray(x, dtype=DTYPE)
    h_prev = np.asarray(h_prev, dtype=DTYPE)
    if x.shape[-1] != params.input_dim:
        raise DimensionMismatchError(f"entrada com dimensão {x.shape[-1]}, esperado {params.input_dim}")
    if h_prev.shape[-1] != params.hidden_dim:
        raise DimensionMismatchError(f"estado oculto com dimensão {h_prev.shape[-1]}, esperado {params.hidden_dim}")
    if x.shape[:-1] != h_prev.shape[:-1]:
        raise DimensionMismatchError("eixos de lote de x e h_prev diferem")

    r = expit(x @ params.W_r.T + h_prev @ params.U_r.T)
    h_tilde = np.tanh(x @ params.W_h.T + (h_prev * r) @ params.U_h.T)
    z = expit(x @ params.W_z.T + h_prev @ params.U_z.T)
    h = (1.0 - z) * h_tilde + z * h_prev
    return h, GruStep(x=x, h_prev=h_prev, r=r, z=z, h_tilde=h_tilde, h=h)


def gru_unroll(params: GruCellParams, inputs: np.ndarray, h0: Optional[np.ndarray] = None) -> GruTape:
    """
    Desenrola a célula sobre inputs de forma (K, d_in) ou (K, B, d_in).
    """
    inputs = np.asarray(inputs, dtype=DTYPE)
    if inputs.ndim < 2 or inputs.shape[0] == 0:
        raise EmptySequenceError("sequência vazia")
    if h0 is None:
        h0 = np.zeros(inputs.shape[1:-1] + (params.hidden_dim,), dtype=DTYPE)
    tape = GruTape()
    h = h0
    for x in inputs:
        h, step = gru_cell_forward(params, x, h)
        tape.steps.append(step)
    return tape


def gru_sequence_forward(params: GruCellParams, out_weights: np.ndarray, inputs: np.ndarray) -> Tuple[np.ndarray, GruTape]:
    if out_weights.shape[1] != params.hidden_dim:
        raise DimensionMismatchError("W_o incompatível com o estado oculto")
    tape = gru_unroll(params, inputs)
    return tape.steps[-1].h @ out_weights.T, tape


def _outer(grad: np.ndarray, value: np.ndarray) -> np.ndarray:
    return np.atleast_2d(grad).T @ np.atleast_2d(value)


def gru_backward(tape: GruTape, params: GruCellParams, hidden_grads: np.ndarray) -> Tuple[GruGrads, np.ndarray]:
    """
    BPTT com dL/dh_t injetado em cada passo; devolve os gradientes e dL/dh_0.
    """
    hidden_grads = np.asarray(hidden_grads, dtype=DTYPE)
    if len(hidden_grads) != len(tape):
        raise DimensionMismatchError("um gradiente por passo do tape")
    if len(tape) == 0:
        raise EmptySequenceError("tape vazio")
    if tape.steps[0].x.shape[-1] != params.input_dim or tape.steps[0].h.shape[-1] != params.hidden_dim:
        raise DimensionMismatchError("tape não corresponde aos parâmetros")

    grads = {name: np.zeros_like(value) for name, value in params.as_dict().items()}
    dh_next = np.zeros_like(tape.steps[-1].h)
    for step, dh_out in zip(reversed(tape.steps), hidden_grads[::-1]):
        dh = dh_out + dh_next
        dh_tilde = dh * (1.0 - step.z)
        dz = dh * (step.h_prev - step.h_tilde)
        dh_prev = dh * step.z

        da_h = dh_tilde * (1.0 - step.h_tilde ** 2)
        grads["W_h"] += _outer(da_h, step.x)
        grads["U_h"] += _outer(da_h, step.h_prev * step.r)
        d_gated = da_h @ params.U_h
        dr = d_gated * step.h_prev
        dh_prev = dh_prev + d_gated * step.r

        da_z = dz * step.z * (1.0 - step.z)
        grads["W_z"] += _outer(da_z, step.x)
        grads["U_z"] += _outer(da_z, step.h_prev)
        dh_prev = dh_prev + da_z @ params.U_z

        da_r = dr * step.r * (1.0 - step.r)
        grads["W_r"] += _outer(da_r, step.x)
        grads["U_r"] += _outer(da_r, step.h_prev)
        dh_prev = dh_prev + da_r @ params.U_r

        dh_next = dh_prev
    return GruGrads(**grads), dh_next


def gru_sequence_backward(
    tape: GruTape,
    params: GruCellParams,
    out_weights: np.ndarray,
    output_grad: np.ndarray,
) -> Tuple[GruGrads, np.ndarray]:
    """
    Gradientes de (params, W_o) dado dL/d(saída) de gru_sequence_forward.
    """
    output_grad = np.asarray(output_grad, dtype=DTYPE)
    if len(tape) == 0:
        raise EmptySequenceError("tape vazio")
    h_last = tape.steps[-1].h
    if output_grad.shape[-1] != out_weights.shape[0] or h_last.shape[-1] != out_weights.shape[1]:
        raise DimensionMismatchError("output_grad/W_o incompatíveis com o tape")
    d_out = _outer(output_grad, h_last)
    hidden_grads = np.zeros((len(tape),) + h_last.shape, dtype=DTYPE)
    hidden_grads[-1] = output_grad @ out_weights
    grads, _ = gru_backward(tape, params, hidden_grads)
    return grads, d_out


def sgd_step(param: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
    if param.shape != grad.shape:
        raise DimensionMismatchError(f"forma do gradiente {grad.shape} != {param.shape}")
    if lr <= 0.0:
        raise ValueError("lr deve ser positivo")
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradientError("gradiente com NaN/Inf")
    return param - lr * grad


def sgd_update_gru(params: GruCellParams, grads: GruGrads, lr: float) -> GruCellParams:
    updated = {name: sgd_step(value, getattr(grads, name), lr) for name, value in params.as_dict().items()}
    return replace(params, **updated)


def to_record(matrix: np.ndarray) -> MatrixRecord:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=DTYPE))
    rows, cols = matrix.shape
    return MatrixRecord(rows=rows, cols=cols, entries=matrix.ravel().tolist())


def from_record(record: MatrixRecord) -> np.ndarray:
    return np.asarray(record.entries, dtype=DTYPE).reshape(record.rows, record.cols)


def save_checkpoint(path: Path, kind: str, matrices: Mapping[str, np.ndarray], meta: Optional[Mapping[str, float]] = None) -> None:
    checkpoint = Checkpoint(
        kind=kind,
        meta=dict(meta or {}),
        matrices={name: to_record(value) for name, value in matrices.items()},
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(checkpoint.model_dump_json(indent=1))
    logger.debug("Checkpoint %s salvo em %s", kind, path)


def load_checkpoint(path: Path) -> Checkpoint:
    return Checkpoint.model_validate_json(Path(path).read_text())


def gru_from_checkpoint(checkpoint: Checkpoint, prefix: str = "") -> GruCellParams:
    return GruCellParams(**{
        name: from_record(checkpoint.matrices[prefix + name])
        for name in ("W_r", "U_r", "W_z", "U_z", "W_h", "U_h")
    })
