from fastapi import APIRouter
from .endpoints import runs, experiments

api_router = APIRouter()

api_router.include_router(runs.router, prefix="/runs", tags=["runs"])
api_router.include_router(experiments.router, prefix="/experiments", tags=["experiments"])
