"""
Registro de execuções no banco (SQLAlchemy).
"""
import logging
from typing import List, Optional, Sequence

from sqlalchemy.orm import Session

from ..models.models import EpochMetric, ExperimentRun
from ..schemas.schemas import CurveRow

logger = logging.getLogger(__name__)


def create_run(db: Session, kind: str, seed: int, config_json: str, method: Optional[str] = None) -> ExperimentRun:
    run = ExperimentRun(kind=kind, method=method, seed=seed, status="running", config_json=config_json)
    try:
        db.add(run)
        db.commit()
        db.refresh(run)
    except Exception:
        db.rollback()
        raise
    logger.info("Execução %d registrada (%s %s)", run.id, kind, method or "")
    return run


def add_epoch_metrics(db: Session, run: ExperimentRun, rows: Sequence[CurveRow]) -> None:
    try:
        db.add_all([
            EpochMetric(run_id=run.id, epoch=row.epoch, loss=row.loss, mean_reward=row.mean_reward, eps=row.eps)
            for row in rows
        ])
        db.commit()
    except Exception:
        db.rollback()
        raise


def finish_run(db: Session, run: ExperimentRun, status: str, summary_json: Optional[str] = None) -> ExperimentRun:
    run.status = status
    run.summary_json = summary_json
    try:
        db.commit()
        db.refresh(run)
    except Exception:
        db.rollback()
        raise
    return run


def list_runs(db: Session, skip: int = 0, limit: int = 100) -> List[ExperimentRun]:
    return db.query(ExperimentRun).order_by(ExperimentRun.id.desc()).offset(skip).limit(limit).all()


def get_run(db: Session, run_id: int) -> Optional[ExperimentRun]:
    return db.query(ExperimentRun).filter(ExperimentRun.id == run_id).first()


def get_curve(db: Session, run_id: int) -> List[EpochMetric]:
    return db.query(EpochMetric).filter(EpochMetric.run_id == run_id).order_by(EpochMetric.epoch).all()
