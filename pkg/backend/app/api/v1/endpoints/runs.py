from fastapi import APIRouter, Depends, HTTPException
from sqlalchemy.orm import Session
from typing import Any, List

from ....db.session import get_db
from ....schemas.schemas import EpochMetricResponse, RunResponse
from ....services import registry

router = APIRouter()

@router.get("/", response_model=List[RunResponse])
def listar_execucoes(
    skip: int = 0,
    limit: int = 100,
    db: Session = Depends(get_db),
) -> Any:
    """
    Lista as execuções registradas, da mais recente para a mais antiga.
    """
    return registry.list_runs(db, skip=skip, limit=limit)

@router.get("/{run_id}", response_model=RunResponse)
def obter_execucao(
    run_id: int,
    db: Session = Depends(get_db),
) -> Any:
    run = registry.get_run(db, run_id)
    if not run:
        raise HTTPException(status_code=404, detail="Execução não encontrada")
    return run

@router.get("/{run_id}/curve", response_model=List[EpochMetricResponse])
def obter_curva(
    run_id: int,
    db: Session = Depends(get_db),
) -> Any:
    """
    Curva de treino (perda, recompensa média e exploração por época).
    """
    if not registry.get_run(db, run_id):
        raise HTTPException(status_code=404, detail="Execução não encontrada")
    return registry.get_curve(db, run_id)
