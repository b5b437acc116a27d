"""
Escrita e leitura dos arquivos de saída (CSV via pandas, JSON via pydantic).

Reais saem na forma decimal mais curta que reconstrói o mesmo float, então
a mesma configuração e semente produzem arquivos idênticos byte a byte.
"""
import json
from pathlib import Path
from typing import Iterable, List, Sequence

import pandas as pd
from pydantic import BaseModel

from ..schemas.schemas import CurveRow, SlotRecord, SweepRow

CURVE_COLUMNS = list(CurveRow.model_fields)
TRACE_COLUMNS = list(SlotRecord.model_fields)
SWEEP_COLUMNS = list(SweepRow.model_fields)


def _prepare(path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_curve(path: Path, rows: Sequence[CurveRow]) -> None:
    frame = pd.DataFrame([row.model_dump() for row in rows], columns=CURVE_COLUMNS)
    frame.to_csv(_prepare(path), index=False)


def read_curve(path: Path) -> List[CurveRow]:
    frame = pd.read_csv(path, float_precision="round_trip")
    return [CurveRow(**row) for row in frame.to_dict(orient="records")]


def write_predictor_curve(path: Path, losses: Sequence[float]) -> None:
    frame = pd.DataFrame({"epoch": range(len(losses)), "loss": list(losses)})
    frame.to_csv(_prepare(path), index=False)


def write_trace(path: Path, records: Iterable[SlotRecord]) -> None:
    """Uma linha por slot; cada célula é o valor em JSON (listas inclusive)."""
    rows = [{k: json.dumps(v) for k, v in record.model_dump().items()} for record in records]
    pd.DataFrame(rows, columns=TRACE_COLUMNS).to_csv(_prepare(path), index=False)


def read_trace(path: Path) -> List[SlotRecord]:
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    return [
        SlotRecord(**{k: json.loads(v) for k, v in row.items()})
        for row in frame.to_dict(orient="records")
    ]


def write_sweep(path: Path, rows: Sequence[SweepRow]) -> None:
    frame = pd.DataFrame([row.model_dump() for row in rows], columns=SWEEP_COLUMNS)
    frame.to_csv(_prepare(path), index=False)


def write_json(path: Path, model: BaseModel) -> None:
    _prepare(path).write_text(model.model_dump_json(indent=2))
