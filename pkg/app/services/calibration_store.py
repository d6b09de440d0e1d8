import json
import logging
import math
from pathlib import Path
from typing import List, Optional, Tuple, Union

from pydantic import ValidationError
from sqlalchemy import select
from sqlalchemy.exc import IntegrityError
from sqlalchemy.orm import Session

from app.models.calibration import CalibrationEntry
from app.schemas.harness import CalibrationRecord
from app.services.peeling_service import PeelingService, ThresholdFn
from app.utils.exceptions import CalibrationConflictError, CalibrationMissingError, DataFormatError

logger = logging.getLogger(__name__)

# Thresholds equal up to this relative difference are the same entry
SAME_VALUE_RTOL = 1e-12


def _to_record(entry: CalibrationEntry) -> CalibrationRecord:
    return CalibrationRecord(
        fingerprint=entry.fingerprint,
        scenario=entry.scenario,
        n=entry.n,
        p=entry.p,
        component=entry.component,
        threshold=entry.threshold,
        trials=entry.trials,
        seed=entry.seed,
        software_version=entry.software_version,
    )


class CalibrationStore:
    """Append-only calibration table on top of a SQLAlchemy session"""

    @staticmethod
    def _find(db: Session, fingerprint: str, n: int, p: float, component: int) -> Optional[CalibrationEntry]:
        stmt = select(CalibrationEntry).where(
            CalibrationEntry.fingerprint == fingerprint,
            CalibrationEntry.n == n,
            CalibrationEntry.p == p,
            CalibrationEntry.component == component,
        )
        return db.execute(stmt).scalar_one_or_none()

    @staticmethod
    def append(db: Session, record: CalibrationRecord) -> bool:
        """
        Store a record. Returns False when an identical entry already exists;
        a different threshold under the same key raises.
        """
        existing = CalibrationStore._find(db, record.fingerprint, record.n, record.p, record.component)
        if existing is not None:
            if math.isclose(existing.threshold, record.threshold, rel_tol=SAME_VALUE_RTOL, abs_tol=0.0):
                return False
            raise CalibrationConflictError(
                "calibration entry already stored with a different threshold",
                details={
                    "fingerprint": record.fingerprint,
                    "n": record.n,
                    "p": record.p,
                    "component": record.component,
                    "stored": existing.threshold,
                    "new": record.threshold,
                },
            )
        db.add(CalibrationEntry(**record.model_dump()))
        try:
            db.commit()
        except IntegrityError:
            db.rollback()
            raise CalibrationConflictError("concurrent append of the same calibration key")
        logger.info("stored C=%.6g for n=%d p=%g component=%d", record.threshold, record.n, record.p, record.component)
        return True

    @staticmethod
    def lookup(db: Session, fingerprint: str, n: int, p: float, component: int = 0) -> CalibrationRecord:
        entry = CalibrationStore._find(db, fingerprint, n, p, component)
        if entry is None:
            raise CalibrationMissingError(
                "no calibration entry for this scenario",
                details={"fingerprint": fingerprint, "n": n, "p": p, "component": component},
            )
        return _to_record(entry)

    @staticmethod
    def entries(db: Session, fingerprint: Optional[str] = None) -> List[CalibrationRecord]:
        stmt = select(CalibrationEntry).order_by(
            CalibrationEntry.fingerprint, CalibrationEntry.p, CalibrationEntry.component, CalibrationEntry.n
        )
        if fingerprint is not None:
            stmt = stmt.where(CalibrationEntry.fingerprint == fingerprint)
        return [_to_record(e) for e in db.execute(stmt).scalars()]

    @staticmethod
    def threshold(db: Session, fingerprint: str, n: int, p: float, component: int = 0) -> Tuple[float, bool]:
        """
        Exact entry when stored, otherwise log-log interpolation across the
        stored sizes. Returns (C, interpolated).
        """
        points = CalibrationStore._points(db, fingerprint, p, component)
        if n in points:
            return points[n], False
        value, _ = PeelingService.interpolate_threshold(points, n)
        logger.info("threshold for n=%d interpolated from %d calibrated sizes", n, len(points))
        return value, True

    @staticmethod
    def threshold_function(db: Session, fingerprint: str, p: float, component: int = 0) -> ThresholdFn:
        return PeelingService.threshold_function(CalibrationStore._points(db, fingerprint, p, component))

    @staticmethod
    def _points(db: Session, fingerprint: str, p: float, component: int) -> dict:
        points = {
            r.n: r.threshold
            for r in CalibrationStore.entries(db, fingerprint)
            if r.p == p and r.component == component
        }
        if not points:
            raise CalibrationMissingError(
                "no calibrated sizes for this scenario and level",
                details={"fingerprint": fingerprint, "p": p, "component": component},
            )
        return points

    @staticmethod
    def export_jsonl(db: Session, path: Union[str, Path]) -> int:
        records = CalibrationStore.entries(db)
        with open(path, "w", encoding="utf-8") as fh:
            for r in records:
                fh.write(json.dumps(r.model_dump(mode="json"), sort_keys=True) + "\n")
        return len(records)

    @staticmethod
    def import_jsonl(db: Session, path: Union[str, Path]) -> int:
        """Append every record of a JSON Lines file; returns the number of new entries"""
        added = 0
        try:
            with open(path, encoding="utf-8") as fh:
                lines = [line for line in fh if line.strip()]
        except OSError as exc:
            raise DataFormatError(f"cannot read calibration file: {exc}", details={"path": str(path)})
        for number, line in enumerate(lines, start=1):
            try:
                record = CalibrationRecord.model_validate_json(line)
            except ValidationError as exc:
                raise DataFormatError(
                    f"malformed calibration record on line {number}",
                    details={"path": str(path), "error": exc.errors()[0]["msg"]},
                )
            added += CalibrationStore.append(db, record)
        return added
