from sqlalchemy import Column, Integer, String, Float, DateTime, ForeignKey, Text
from sqlalchemy.orm import relationship
from .base import Base
from datetime import datetime


class ExperimentRun(Base):
    __tablename__ = "experiment_runs"

    id = Column(Integer, primary_key=True, index=True)
    kind = Column(String, index=True)  # "train", "evaluate", "sweep", "audit"
    method = Column(String, nullable=True)  # "vdn", "iql" ou política roteirizada
    seed = Column(Integer)
    status = Column(String, default="running")  # "running", "done", "diverged"
    config_json = Column(Text)
    summary_json = Column(Text, nullable=True)
    created_at = Column(DateTime, default=datetime.now)

    # Relacionamentos
    metrics = relationship("EpochMetric", back_populates="run", cascade="all, delete-orphan", order_by="EpochMetric.epoch")


class EpochMetric(Base):
    __tablename__ = "epoch_metrics"

    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(Integer, ForeignKey("experiment_runs.id"), index=True)
    epoch = Column(Integer)
    loss = Column(Float)
    mean_reward = Column(Float)
    eps = Column(Float)

    # Relacionamentos
    run = relationship("ExperimentRun", back_populates="metrics")
