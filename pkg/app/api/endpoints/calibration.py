from typing import Optional

from fastapi import APIRouter, Depends, Query
from sqlalchemy.orm import Session

from app.db.database import get_db
from app.services.calibration_store import CalibrationStore
from app.utils.responses import APIResponse

router = APIRouter()


@router.get("/entries")
def list_entries(
    fingerprint: Optional[str] = Query(None, description="Filter by scenario fingerprint"),
    skip: int = Query(0, ge=0),
    limit: int = Query(100, ge=1, le=1000),
    db: Session = Depends(get_db),
):
    """Stored calibration entries with pagination"""
    records = CalibrationStore.entries(db, fingerprint)
    page = records[skip:skip + limit]
    return APIResponse.success(
        data={
            "entries": [r.model_dump(mode="json") for r in page],
            "total": len(records),
            "skip": skip,
            "limit": limit,
        }
    )


@router.get("/threshold")
def get_threshold(
    fingerprint: str = Query(..., description="Scenario fingerprint"),
    n: int = Query(..., ge=2),
    p: float = Query(..., gt=0, lt=1),
    component: int = Query(0, ge=0),
    db: Session = Depends(get_db),
):
    """Calibrated threshold, log-log interpolated across sizes when n was not calibrated"""
    value, interpolated = CalibrationStore.threshold(db, fingerprint, n, p, component)
    return APIResponse.success(
        data={"fingerprint": fingerprint, "n": n, "p": p, "component": component,
              "threshold": value, "interpolated": interpolated}
    )
