from fastapi import APIRouter
from app.api.endpoints import calibration, detection, estimation

api_router = APIRouter()

api_router.include_router(detection.router, prefix="/detection", tags=["Detection"])
api_router.include_router(estimation.router, prefix="/estimation", tags=["Estimation"])
api_router.include_router(calibration.router, prefix="/calibration", tags=["Calibration"])
