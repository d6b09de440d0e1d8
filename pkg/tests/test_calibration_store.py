import pytest

from app.db.database import make_session_factory
from app.schemas.harness import CalibrationRecord
from app.services.calibration_store import CalibrationStore
from app.utils.exceptions import CalibrationConflictError, CalibrationMissingError, DataFormatError


def _record(n=1000, p=0.95, threshold=0.038, component=0, fingerprint="abc"):
    return CalibrationRecord(
        fingerprint=fingerprint,
        scenario="mean_mixture",
        n=n,
        p=p,
        component=component,
        threshold=threshold,
        trials=1000,
        seed=1,
        software_version="1.0.0",
    )


class TestAppend:
    def test_append_and_lookup(self, db):
        assert CalibrationStore.append(db, _record())
        found = CalibrationStore.lookup(db, "abc", 1000, 0.95)
        assert found.threshold == 0.038

    def test_identical_entry_is_noop(self, db):
        CalibrationStore.append(db, _record())
        assert not CalibrationStore.append(db, _record())
        assert len(CalibrationStore.entries(db)) == 1

    def test_conflicting_entry(self, db):
        CalibrationStore.append(db, _record())
        with pytest.raises(CalibrationConflictError):
            CalibrationStore.append(db, _record(threshold=0.04))
        assert CalibrationStore.lookup(db, "abc", 1000, 0.95).threshold == 0.038

    def test_components_are_separate_keys(self, db):
        CalibrationStore.append(db, _record(component=0))
        CalibrationStore.append(db, _record(component=1, threshold=0.01))
        assert CalibrationStore.lookup(db, "abc", 1000, 0.95, component=1).threshold == 0.01

    def test_missing_entry(self, db):
        with pytest.raises(CalibrationMissingError):
            CalibrationStore.lookup(db, "abc", 1000, 0.95)


class TestThreshold:
    def test_exact_entry(self, db):
        CalibrationStore.append(db, _record())
        assert CalibrationStore.threshold(db, "abc", 1000, 0.95) == (0.038, False)

    def test_interpolated_entry(self, db):
        CalibrationStore.append(db, _record(n=100, threshold=0.12))
        CalibrationStore.append(db, _record(n=1000, threshold=0.038))
        value, interpolated = CalibrationStore.threshold(db, "abc", 500, 0.95)
        assert interpolated
        assert 0.038 < value < 0.12

    def test_other_fingerprint_missing(self, db):
        CalibrationStore.append(db, _record())
        with pytest.raises(CalibrationMissingError):
            CalibrationStore.threshold(db, "other", 1000, 0.95)

    def test_threshold_function(self, db):
        CalibrationStore.append(db, _record(n=100, threshold=0.12))
        CalibrationStore.append(db, _record(n=1000, threshold=0.038))
        fn = CalibrationStore.threshold_function(db, "abc", 0.95)
        assert fn(100) == pytest.approx(0.12)


class TestJsonLines:
    def test_export_then_import(self, db, tmp_path):
        CalibrationStore.append(db, _record(n=100, threshold=0.12))
        CalibrationStore.append(db, _record(n=1000, threshold=0.038))
        path = tmp_path / "store.jsonl"
        assert CalibrationStore.export_jsonl(db, path) == 2

        other = make_session_factory("sqlite://")()
        try:
            assert CalibrationStore.import_jsonl(other, path) == 2
            assert CalibrationStore.import_jsonl(other, path) == 0
            assert CalibrationStore.entries(other) == CalibrationStore.entries(db)
        finally:
            other.close()

    def test_malformed_line(self, db, tmp_path):
        path = tmp_path / "store.jsonl"
        path.write_text('{"fingerprint": "abc"}\n')
        with pytest.raises(DataFormatError, match="line 1"):
            CalibrationStore.import_jsonl(db, path)
