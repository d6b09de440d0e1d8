from sqlalchemy import Column, DateTime, Float, Integer, String, Text, UniqueConstraint
from sqlalchemy.sql import func

from app.db.database import Base


class CalibrationEntry(Base):
    """
    One calibrated p-quantile of the maximal statistic under H0.
    Rows are append-only; the key is (fingerprint, n, p, component).
    """
    __tablename__ = "calibration_entries"
    __table_args__ = (UniqueConstraint("fingerprint", "n", "p", "component", name="uq_calibration_key"),)

    id = Column(Integer, primary_key=True, index=True)
    fingerprint = Column(String(64), index=True, nullable=False)
    scenario = Column(Text, nullable=False)  # canonical JSON of the null configuration
    n = Column(Integer, nullable=False)
    p = Column(Float, nullable=False)
    component = Column(Integer, nullable=False, default=0)
    threshold = Column(Float, nullable=False)
    trials = Column(Integer, nullable=False)
    seed = Column(Integer, nullable=False)
    software_version = Column(String(32), nullable=False)

    created_at = Column(DateTime(timezone=True), server_default=func.now())

    def __repr__(self):
        return f"<CalibrationEntry(fingerprint='{self.fingerprint[:12]}', n={self.n}, p={self.p}, C={self.threshold})>"
