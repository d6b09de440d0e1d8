from typing import Any, Optional

from fastapi import Request, status
from fastapi.responses import JSONResponse

from app.utils.responses import APIResponse

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_CALIBRATION = 4


class SwitchDetectError(Exception):
    """Base error with a message, a machine-readable code and optional details"""

    error_code = "switchdetect_error"
    exit_status = EXIT_DATA
    http_status = status.HTTP_422_UNPROCESSABLE_ENTITY

    def __init__(self, message: str, error_code: Optional[str] = None, details: Any = None):
        self.message = message
        if error_code is not None:
            self.error_code = error_code
        self.details = details
        super().__init__(message)


class ConfigurationError(SwitchDetectError):
    error_code = "invalid_config"
    exit_status = EXIT_CONFIG
    http_status = status.HTTP_400_BAD_REQUEST


class FingerprintMismatchError(ConfigurationError):
    error_code = "fingerprint_mismatch"


class DataFormatError(SwitchDetectError):
    error_code = "malformed_data"


class CalibrationMissingError(SwitchDetectError):
    error_code = "calibration_missing"
    exit_status = EXIT_CALIBRATION
    http_status = status.HTTP_404_NOT_FOUND


class CalibrationConflictError(SwitchDetectError):
    error_code = "calibration_conflict"
    http_status = status.HTTP_409_CONFLICT


class PreconditionError(SwitchDetectError):
    error_code = "precondition_failed"


class DegenerateSampleError(SwitchDetectError):
    error_code = "degenerate_sample"


class QuadratureError(SwitchDetectError):
    error_code = "quadrature_failure"


class NoRootError(SwitchDetectError):
    error_code = "no_root"


class NoSolutionError(SwitchDetectError):
    error_code = "no_solution"


class IllConditionedError(SwitchDetectError):
    error_code = "ill_conditioned"


class SingularDesignError(SwitchDetectError):
    error_code = "singular_design"


async def switchdetect_exception_handler(request: Request, exc: SwitchDetectError) -> JSONResponse:
    """Translate domain errors into the standard error envelope"""
    return APIResponse.error(
        message=exc.message,
        error_code=exc.error_code,
        status_code=exc.http_status,
        details=exc.details,
    )


async def validation_exception_handler(request: Request, exc: Exception) -> JSONResponse:
    """Handle validation errors"""
    return APIResponse.error(
        message="Validation error",
        error_code="validation_error",
        status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
        details=str(exc),
    )
