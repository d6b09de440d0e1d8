from typing import List

from fastapi import APIRouter
from pydantic import ValidationError

from app.schemas.detection import PhiSource, Sample
from app.schemas.multivariate import VectorSample
from app.schemas.requests import DetectRequest, MultivariateDetectRequest, PeelRequest, VarianceDetectRequest
from app.services.asymmetric_service import AsymmetricDetectionService
from app.services.detection_service import DetectionService
from app.services.multivariate_service import MultivariateService
from app.services.peeling_service import PeelingService
from app.utils.exceptions import ConfigurationError, DataFormatError
from app.utils.responses import APIResponse

router = APIRouter()


def to_sample(values: List[float]) -> Sample:
    try:
        return Sample(values=values)
    except ValidationError as exc:
        raise DataFormatError(exc.errors()[0]["msg"])


def to_grid(params):
    try:
        return params.to_grid()
    except ValueError as exc:
        raise ConfigurationError(f"invalid band grid: {exc}")


@router.post("/detect")
def detect(request: DetectRequest):
    """Symmetric band-split detection"""
    det = DetectionService.detect(to_sample(request.values), to_grid(request.grid), request.threshold_c)
    return APIResponse.success(data=det.record(request.include_profile), message=det.decision.value)


@router.post("/variance")
def detect_variance(request: VarianceDetectRequest):
    det = AsymmetricDetectionService.detect_variance_contamination(
        to_sample(request.values), to_grid(request.grid), request.threshold_c, PhiSource(request.phi_source)
    )
    return APIResponse.success(data=det.record(request.include_profile), message=det.decision.value)


@router.post("/multivariate")
def detect_multivariate(request: MultivariateDetectRequest):
    try:
        vs = VectorSample(rows=request.rows)
    except (ValidationError, ValueError) as exc:
        raise DataFormatError(f"invalid vector sample: {exc}")
    det = MultivariateService.detect_multivariate(vs, to_grid(request.grid), request.threshold_c, request.coordinates)
    return APIResponse.success(data=det.record(request.include_profile), message=det.decision.value)


@router.post("/peel")
def peel(request: PeelRequest):
    """Repeated detection on the abnormal remainder"""
    s = to_sample(request.values)
    if not request.threshold_c > 0:
        raise ConfigurationError("threshold must be positive")
    threshold_fn = PeelingService.sqrt_threshold(request.threshold_c, request.n_ref or s.n)
    result = PeelingService.peel(s, to_grid(request.grid), threshold_fn, request.max_iter, request.min_size)
    data = result.record()
    data["classes"] = [c.tolist() for c in result.classes]
    return APIResponse.success(data=data, message=f"{len(result.classes)} classes")
