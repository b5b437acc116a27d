from app.models.base import Base

# Importar todos os modelos aqui para que create_all os registre
from app.models.models import ExperimentRun, EpochMetric
