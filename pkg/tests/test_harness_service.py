import math

import numpy as np
import pytest

from app.schemas.densities import MixtureSpec
from app.schemas.detection import BandGrid, PhiSource
from app.schemas.harness import ExperimentReport, PipelineOptions
from app.schemas.simulation import GeneratorConfig, VarianceMixture, mean_mixture, three_class
from app.services.calibration_store import CalibrationStore
from app.services.harness_service import HarnessService, fingerprint, quantile, run_trial
from app.services.reference_tables import TABLES
from app.utils.exceptions import ConfigurationError, FingerprintMismatchError


class TestQuantile:
    def test_order_statistic_without_interpolation(self):
        values = np.arange(1, 101, dtype=float)
        assert quantile(values, 0.95) == 95.0
        assert quantile(values, 0.99) == 99.0
        assert quantile(values[::-1], 0.5) == 50.0

    def test_constant_values(self):
        assert quantile([0.0] * 100, 0.95) == 0.0

    def test_level_range(self):
        with pytest.raises(ConfigurationError):
            quantile([1.0, 2.0], 1.0)


class TestFingerprint:
    def test_independent_of_size_and_seed(self, small_grid):
        a = fingerprint(mean_mixture(0.0, 0.0, 100, seed=1), small_grid)
        b = fingerprint(mean_mixture(0.0, 0.0, 500, seed=2), small_grid)
        assert a == b

    def test_contaminated_config_maps_to_null(self, small_grid):
        assert fingerprint(mean_mixture(0.1, 2.0, 100), small_grid) == fingerprint(mean_mixture(0.0, 0.0, 100), small_grid)

    def test_depends_on_grid_options_and_scenario(self, small_grid, grid):
        cfg = mean_mixture(0.0, 0.0, 100)
        base = fingerprint(cfg, small_grid)
        assert fingerprint(cfg, grid) != base
        assert fingerprint(cfg, small_grid, PipelineOptions(window=30)) != base
        variance = GeneratorConfig(scenario=VarianceMixture(), n=100)
        assert fingerprint(variance, small_grid) != base
        assert fingerprint(variance, small_grid, PipelineOptions(phi_source=PhiSource.CHI_SQUARE)) != fingerprint(
            variance, small_grid
        )


class TestTrials:
    def test_trial_is_reproducible(self, small_grid):
        cfg = mean_mixture(0.1, 2.0, 200, seed=3)
        a = run_trial(cfg, small_grid, PipelineOptions(), 7)
        b = run_trial(cfg, small_grid, PipelineOptions(), 7)
        assert a == b
        assert len(a.j_stats) == 1

    def test_trials_ordered_by_index(self, small_grid):
        outcomes = HarnessService.run_trials(mean_mixture(0.0, 0.0, 100, seed=3), small_grid, 10, workers=1)
        assert [o.index for o in outcomes] == list(range(10))

    def test_trials_must_be_positive(self, small_grid):
        with pytest.raises(ConfigurationError):
            HarnessService.run_trials(mean_mixture(0.0, 0.0, 100), small_grid, 0)


class TestCalibration:
    def test_needs_enough_trials(self, small_grid):
        with pytest.raises(ConfigurationError):
            HarnessService.calibrate(mean_mixture(0.0, 0.0, 100), small_grid, 99)

    def test_records_per_level(self, small_grid):
        records = HarnessService.calibrate(mean_mixture(0.0, 0.0, 100, seed=5), small_grid, 100, workers=1)
        assert [r.p for r in records] == [0.95, 0.99]
        assert records[0].threshold <= records[1].threshold
        assert all(r.n == 100 and r.trials == 100 for r in records)

    def test_deterministic_under_seed(self, small_grid):
        cfg = mean_mixture(0.0, 0.0, 100, seed=5)
        a = HarnessService.calibrate(cfg, small_grid, 100, workers=1)
        b = HarnessService.calibrate(cfg, small_grid, 100, workers=1)
        assert [r.threshold for r in a] == [r.threshold for r in b]

    def test_threshold_shrinks_with_n(self, small_grid):
        thresholds = [
            HarnessService.calibrate(mean_mixture(0.0, 0.0, n, seed=9), small_grid, 100, p_list=(0.95,), workers=1)[0]
            .threshold
            for n in (100, 400, 1600)
        ]
        assert thresholds[0] > thresholds[1] > thresholds[2]

    def test_records_go_to_store(self, small_grid, db):
        cfg = mean_mixture(0.0, 0.0, 100, seed=5)
        for record in HarnessService.calibrate(cfg, small_grid, 100, workers=1):
            CalibrationStore.append(db, record)
        key = fingerprint(cfg, small_grid)
        assert CalibrationStore.threshold(db, key, 100, 0.95)[1] is False


class TestPower:
    def test_calibration_trials_reject_at_level(self, small_grid):
        cfg = mean_mixture(0.0, 0.0, 100, seed=5)
        record = HarnessService.calibrate(cfg, small_grid, 100, p_list=(0.95,), workers=1)[0]
        report = HarnessService.run_power(cfg, small_grid, record, 100, workers=1)
        # same streams: exactly the five statistics above the 95th order statistic
        assert report.w1 == pytest.approx(0.05)
        assert report.w2 is None

    def test_fingerprint_mismatch(self, small_grid, grid):
        cfg = mean_mixture(0.0, 0.0, 100, seed=5)
        record = HarnessService.calibrate(cfg, small_grid, 100, p_list=(0.95,), workers=1)[0]
        with pytest.raises(FingerprintMismatchError):
            HarnessService.run_power(cfg, grid, record, 10, workers=1)
        with pytest.raises(FingerprintMismatchError):
            HarnessService.run_power(cfg.with_n(200), small_grid, record, 10, workers=1)

    def test_contaminated_power(self, small_grid):
        report = HarnessService.run_power(mean_mixture(0.2, 4.0, 500, seed=6), small_grid, 0.0534, 50, workers=1)
        assert report.w1 is None
        assert report.w2 <= 0.1
        assert report.eps_hat_mean == pytest.approx(0.2, abs=0.1)

    def test_consistent_estimates_with_f0(self, small_grid):
        cfg = mean_mixture(0.2, 4.0, 1000, seed=6)
        report = HarnessService.run_power(cfg, small_grid, 0.038, 20, f0=cfg.scenario.mixture.base, workers=1)
        assert report.eps_consistent_mean is not None

    def test_threshold_must_be_positive(self, small_grid):
        with pytest.raises(ConfigurationError):
            HarnessService.run_power(mean_mixture(0.1, 2.0, 100), small_grid, 0.0, 10, workers=1)

    def test_multi_component_statistics(self, small_grid):
        outcomes = HarnessService.run_trials(three_class(300, seed=2), small_grid, 3, workers=1)
        assert all(len(o.j_stats) == 1 for o in outcomes)


class TestPowerTrend:
    def test_log_linear_decay(self):
        reports = [
            ExperimentReport(scenario="mean_mixture", n=n, trials=100, threshold_c=0.05, w2=math.exp(-0.01 * n))
            for n in (100, 200, 400, 800)
        ]
        assert HarnessService.log_power_trend(reports) == pytest.approx(-1.0)

    def test_needs_three_points(self):
        reports = [ExperimentReport(scenario="mean_mixture", n=100, trials=10, threshold_c=0.05, w2=0.5)]
        with pytest.raises(ConfigurationError):
            HarnessService.log_power_trend(reports)


class TestTailFrequency:
    def test_requires_binary_mean_mixture(self, small_grid):
        cfg = GeneratorConfig(scenario=VarianceMixture(eps=0.1), n=100)
        with pytest.raises(ConfigurationError):
            HarnessService.estimation_tail_frequency(cfg, small_grid, 0.1, 10, 0.05)

    def test_frequency_and_bound(self, small_grid):
        cfg = mean_mixture(0.2, 4.0, 500, seed=8)
        freq, se, bound = HarnessService.estimation_tail_frequency(cfg, small_grid, 0.0534, 20, 0.05, workers=1)
        assert 0.0 <= freq <= 1.0
        assert se >= 0.0
        assert 0.0 < bound < 1.0


class TestReproduceTable:
    def test_unknown_table(self):
        with pytest.raises(ConfigurationError):
            HarnessService.reproduce_table(11)

    def test_all_reference_tables_defined(self):
        assert sorted(TABLES) == list(range(1, 11))


@pytest.mark.slow
class TestMonteCarloAgreement:
    def test_gaussian_quantile_at_thousand(self):
        cfg = mean_mixture(0.0, 0.0, 1000, seed=101)
        record = HarnessService.calibrate(cfg, BandGrid.geometric(), 1000, p_list=(0.95,))[0]
        assert record.threshold == pytest.approx(0.038, rel=0.15)

    def test_type_two_frequency(self):
        report = HarnessService.run_power(mean_mixture(0.1, 2.0, 500, seed=102), BandGrid.geometric(), 0.0534, 1000)
        assert report.w2 == pytest.approx(0.15, abs=0.04)

    def test_monte_carlo_matches_population_curve(self):
        frame = HarnessService.oracle_mean_check(MixtureSpec.binary(0.1, 2.0), [0.5, 1.0, 2.0, 3.0], 2000, 300, seed=103)
        assert np.all(np.abs(frame["z"]) < 4.0)

    def test_process_pool_matches_serial(self, small_grid):
        cfg = mean_mixture(0.1, 2.0, 200, seed=104)
        serial = HarnessService.run_trials(cfg, small_grid, 40, workers=1)
        pooled = HarnessService.run_trials(cfg, small_grid, 40, workers=2)
        assert serial == pooled

    def test_reproduce_first_table(self, small_grid, db):
        rep = HarnessService.reproduce_table(1, trials=100, seed=105, workers=1, grid=small_grid, db=db)
        assert len(rep.cells) == 18
        assert len(CalibrationStore.entries(db)) == 18
        frame = HarnessService.table_frame(rep)
        assert {"row", "n", "reference", "reproduced", "passed"} <= set(frame.columns)


@pytest.mark.slow
class TestReferenceCells:
    """Single reference-table cells at reduced trial counts; tolerances widened by two standard errors"""

    @staticmethod
    def _frequency_tolerance(report):
        return max(0.03, 2.0 * report.standard_error)

    def test_variance_null_quantile_at_thousand(self):
        cfg = TABLES[3].null_scenario(1000).with_seed(201)
        record = HarnessService.calibrate(cfg, BandGrid.geometric(), 500, p_list=(0.95,))[0]
        assert record.threshold == pytest.approx(0.1244, rel=0.15)

    def test_variance_contamination_at_thousand(self):
        block = TABLES[4].power[0]
        report = HarnessService.run_power(block.scenario(1000).with_seed(202), BandGrid.geometric(), 0.1244, 500)
        assert report.w2 == pytest.approx(0.04, abs=self._frequency_tolerance(report))
        spread = 2.0 * report.eps_hat_sd / math.sqrt(report.rejections)
        assert report.eps_hat_mean == pytest.approx(0.05, abs=max(0.015, spread))

    def test_three_class_first_iteration(self):
        block = TABLES[6].power[0]
        reports = {
            n: HarnessService.run_power(
                three_class(n, seed=seed), BandGrid.geometric(), block.thresholds[block.ns.index(n)], 500
            )
            for n, seed in ((300, 203), (1000, 204))
        }
        assert reports[300].w2 == pytest.approx(0.070, abs=self._frequency_tolerance(reports[300]))
        assert reports[1000].w2 == pytest.approx(0.016, abs=self._frequency_tolerance(reports[1000]))
        assert reports[1000].w2 <= reports[300].w2 + 2.0 * reports[300].standard_error

    def test_bivariate_cells(self, small_grid):
        null = HarnessService.reproduce_table(7, trials=100, seed=205, workers=1, grid=small_grid)
        assert all(c.informational and c.reproduced > 0 for c in null.cells)
        table = TABLES[8]
        block = table.power[0]
        report = HarnessService.run_power(
            block.scenario(300).with_seed(206), BandGrid.geometric(), block.thresholds[block.ns.index(300)], 500,
            table.options,
        )
        assert report.w2 <= 0.02 + 2.0 * report.standard_error

    def test_regression_power_non_increasing(self):
        block = TABLES[9].power[0]
        reports = [
            HarnessService.run_power(
                block.scenario(n).with_seed(207 + i), BandGrid.geometric(), block.thresholds[i], 200,
                component=block.component,
            )
            for i, n in enumerate(block.ns)
        ]
        for smaller, larger in zip(reports, reports[1:]):
            slack = 2.0 * max(smaller.standard_error, larger.standard_error)
            assert larger.w2 <= smaller.w2 + slack + 1e-12

    def test_log_power_decreases_with_n(self):
        block = TABLES[2].power[0]
        reports = [
            HarnessService.run_power(block.scenario(n).with_seed(211 + i), BandGrid.geometric(), block.thresholds[i], 400)
            for i, n in enumerate(block.ns)
        ]
        assert HarnessService.log_power_trend(reports) < -0.9

    def test_estimation_tail_frequency_above_bound(self):
        cfg = mean_mixture(0.1, 2.0, 1000, seed=215)
        freq, se, bound = HarnessService.estimation_tail_frequency(cfg, BandGrid.geometric(), 0.038, 300, 0.05)
        assert freq >= bound - 2.0 * se
