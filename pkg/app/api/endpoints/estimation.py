from fastapi import APIRouter

from app.api.endpoints.detection import to_grid, to_sample
from app.schemas.densities import Density1D
from app.schemas.requests import EstimateRequest
from app.services.detection_service import DetectionService
from app.services.estimation_service import EstimationService
from app.utils.responses import APIResponse

router = APIRouter()


@router.post("/estimate")
def estimate(request: EstimateRequest):
    """
    Detect, then estimate (eps, h) when H0 is rejected.
    Supplying f0_mean / f0_variance selects a gaussian f0 for the consistent estimate.
    """
    det = DetectionService.detect(to_sample(request.values), to_grid(request.grid), request.threshold_c)
    data = {"detection": det.record(request.include_profile), "estimation": None}
    if det.rejected:
        f0 = None
        if request.f0_mean is not None or request.f0_variance is not None:
            f0 = Density1D.gaussian(request.f0_mean or 0.0, request.f0_variance or 1.0)
        data["estimation"] = EstimationService.estimate(det, f0).model_dump(mode="json")
    return APIResponse.success(data=data, message=det.decision.value)
