import hashlib
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from sqlalchemy.orm import Session

from app.core.config import settings
from app.schemas.densities import Density1D, MixtureSpec
from app.schemas.detection import BandGrid, DetectionResult, Sample
from app.schemas.harness import (
    CalibrationRecord,
    ExperimentReport,
    PipelineOptions,
    TableCell,
    TableReproduction,
)
from app.schemas.simulation import (
    BivariateMixture,
    GeneratorConfig,
    MeanMixture,
    SwitchingRegression,
    VarianceMixture,
)
from app.services.asymmetric_service import AsymmetricDetectionService
from app.services.calibration_store import CalibrationStore
from app.services.density_service import DensityService
from app.services.detection_service import DetectionService
from app.services.estimation_service import EstimationService
from app.services.multivariate_service import MultivariateService
from app.services.reference_tables import (
    ESTIMATE_ATOL,
    FREQUENCY_ATOL,
    TABLES,
    PowerBlock,
    ReferenceTable,
)
from app.services.simulation_service import SimulationService
from app.utils.exceptions import ConfigurationError, FingerprintMismatchError, SwitchDetectError

logger = logging.getLogger(__name__)

MIN_CALIBRATION_TRIALS = 100


class TrialOutcome(NamedTuple):
    """Per-trial statistics; one entry per detected component"""
    index: int
    j_stats: Tuple[float, ...]
    eps_nonpar: Tuple[float, ...]
    h_nonpar: Tuple[Optional[float], ...]
    eps_consistent: Optional[float] = None


def fingerprint(cfg: GeneratorConfig, grid: BandGrid, options: Optional[PipelineOptions] = None) -> str:
    """sha256 of the null scenario (without n and seed), the grid and the pipeline options"""
    options = options or PipelineOptions()
    payload = {
        "scenario": cfg.null_model().scenario.model_dump(mode="json"),
        "grid": [grid.kappa, grid.upper, grid.size, hashlib.sha256(grid.points.tobytes()).hexdigest()],
        "options": options.model_dump(mode="json"),
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()


def quantile(values: Sequence[float], p: float) -> float:
    """Order statistic at ceil(p M) of the sorted values, no interpolation"""
    if not 0 < p < 1:
        raise ConfigurationError("quantile level must lie in (0, 1)", details={"p": p})
    ordered = np.sort(np.asarray(values, dtype=float))
    rank = math.ceil(round(p * ordered.size, 9))
    return float(ordered[max(rank, 1) - 1])


def detections(data, cfg: GeneratorConfig, grid: BandGrid, options: PipelineOptions) -> List[Tuple[DetectionResult, float]]:
    """
    Run the detector matching the scenario with an unreachable threshold.
    Returns (result, eps estimate) per component.
    """
    scenario, never = cfg.scenario, math.inf
    if isinstance(scenario, VarianceMixture):
        det = AsymmetricDetectionService.detect_variance_contamination(data, grid, never, options.phi_source)
        return [(det, det.eps_nonparametric)]
    if isinstance(scenario, BivariateMixture):
        det = MultivariateService.detect_multivariate(data, grid, never, options.coordinates)
        return [(det, det.eps_nonparametric)]
    if isinstance(scenario, SwitchingRegression):
        reg = MultivariateService.detect_switching_regression(data, grid, [never] * scenario.k, options.window)
        return [(c.result, c.eps_observation) for c in reg.coefficients]
    det = DetectionService.detect(data, grid, never)
    return [(det, det.eps_nonparametric)]


def run_trial(
    cfg: GeneratorConfig,
    grid: BandGrid,
    options: PipelineOptions,
    index: int,
    threshold: Optional[float] = None,
    f0: Optional[Density1D] = None,
) -> TrialOutcome:
    data = SimulationService.generate(cfg, SimulationService.trial_rng(cfg.seed, index))
    found = detections(data, cfg, grid, options)
    j_stats = tuple(det.j_stat for det, _ in found)
    eps = tuple(e for _, e in found)
    h = tuple(
        det.split_at_bstar.theta / e if isinstance(data, Sample) and e > 0 else None
        for det, e in found
    )
    eps_consistent = None
    if f0 is not None and threshold is not None and j_stats[0] > threshold:
        det = found[0][0]
        try:
            eps_consistent = EstimationService.estimate_consistent(
                det.split_at_bstar.theta, det.b_star_n, f0, eps_reference=eps[0]
            )[0]
        except SwitchDetectError as exc:
            logger.debug("trial %d: consistent estimate unavailable: %s", index, exc.message)
    return TrialOutcome(index, j_stats, eps, h, eps_consistent)


def _run_batch(args) -> List[TrialOutcome]:
    """Module-level so the process pool can pickle it"""
    cfg, grid, options, indices, threshold, f0 = args
    return [run_trial(cfg, grid, options, int(i), threshold, f0) for i in indices]


class HarnessService:
    """Monte Carlo calibration, power studies and reference-table reproduction"""

    @staticmethod
    def run_trials(
        cfg: GeneratorConfig,
        grid: BandGrid,
        trials: int,
        options: Optional[PipelineOptions] = None,
        threshold: Optional[float] = None,
        f0: Optional[Density1D] = None,
        workers: Optional[int] = None,
    ) -> List[TrialOutcome]:
        """Independent trials, each on its own stream; results ordered by trial index"""
        options = options or PipelineOptions()
        workers = settings.workers if workers is None else workers
        if trials < 1:
            raise ConfigurationError("trials must be positive", details={"trials": trials})
        if workers <= 1:
            return _run_batch((cfg, grid, options, range(trials), threshold, f0))
        chunks = np.array_split(np.arange(trials), min(workers * 4, trials))
        batch_args = [(cfg, grid, options, chunk, threshold, f0) for chunk in chunks]
        outcomes = []
        with ProcessPoolExecutor(max_workers=workers) as executor:
            for batch in executor.map(_run_batch, batch_args):
                outcomes.extend(batch)
        return sorted(outcomes, key=lambda o: o.index)

    @staticmethod
    def calibrate(
        cfg: GeneratorConfig,
        grid: BandGrid,
        trials: int,
        p_list: Iterable[float] = (0.95, 0.99),
        options: Optional[PipelineOptions] = None,
        workers: Optional[int] = None,
    ) -> List[CalibrationRecord]:
        """p-quantiles of the maximal statistic under H0, one record per level and component"""
        if trials < MIN_CALIBRATION_TRIALS:
            raise ConfigurationError(
                f"calibration needs at least {MIN_CALIBRATION_TRIALS} trials", details={"trials": trials}
            )
        options = options or PipelineOptions()
        null_cfg = cfg.null_model()
        started = time.perf_counter()
        outcomes = HarnessService.run_trials(null_cfg, grid, trials, options, workers=workers)
        j = np.array([o.j_stats for o in outcomes])
        key = fingerprint(null_cfg, grid, options)
        scenario = json.dumps(null_cfg.scenario.model_dump(mode="json"), sort_keys=True)
        records = [
            CalibrationRecord(
                fingerprint=key,
                scenario=scenario,
                n=cfg.n,
                p=float(p),
                component=component,
                threshold=quantile(j[:, component], p),
                trials=trials,
                seed=cfg.seed,
                software_version=settings.app_version,
            )
            for p in p_list
            for component in range(j.shape[1])
        ]
        logger.info(
            "calibrated %s n=%d over %d trials in %.1fs: %s",
            null_cfg.scenario.kind, cfg.n, trials, time.perf_counter() - started,
            ", ".join(f"C({r.p:g},{r.component})={r.threshold:.4g}" for r in records),
        )
        return records

    @staticmethod
    def run_power(
        cfg: GeneratorConfig,
        grid: BandGrid,
        threshold: Union[float, CalibrationRecord],
        trials: int,
        options: Optional[PipelineOptions] = None,
        component: int = 0,
        f0: Optional[Density1D] = None,
        workers: Optional[int] = None,
    ) -> ExperimentReport:
        """
        Frequency of max|Psi_N| <= C. Under eps = 0 the rejection frequency is
        reported as w1, otherwise the acceptance frequency as w2.
        """
        options = options or PipelineOptions()
        if isinstance(threshold, CalibrationRecord):
            key = fingerprint(cfg, grid, options)
            if key != threshold.fingerprint or threshold.n != cfg.n or threshold.component != component:
                raise FingerprintMismatchError(
                    "calibration entry was computed for a different scenario, size or component",
                    details={"expected": key, "entry": threshold.fingerprint, "n": cfg.n, "entry_n": threshold.n},
                )
            c = threshold.threshold
        else:
            c = float(threshold)
        if not c > 0:
            raise ConfigurationError("threshold must be positive", details={"threshold_c": c})
        started = time.perf_counter()
        consistent_f0 = f0 if component == 0 else None
        outcomes = HarnessService.run_trials(cfg, grid, trials, options, c, consistent_f0, workers)
        rejected = [o for o in outcomes if o.j_stats[component] > c]
        freq = len(rejected) / trials
        w = freq if cfg.eps == 0 else 1.0 - freq
        eps_hat = [o.eps_nonpar[component] for o in rejected]
        h_hat = [o.h_nonpar[component] for o in rejected if o.h_nonpar[component] is not None]
        consistent = [o.eps_consistent for o in rejected if o.eps_consistent is not None]
        return ExperimentReport(
            scenario=cfg.scenario.kind,
            n=cfg.n,
            trials=trials,
            threshold_c=c,
            component=component,
            w1=w if cfg.eps == 0 else None,
            w2=w if cfg.eps > 0 else None,
            standard_error=math.sqrt(w * (1.0 - w) / trials),
            rejections=len(rejected),
            eps_hat_mean=_mean(eps_hat),
            eps_hat_sd=_sd(eps_hat),
            h_hat_mean=_mean(h_hat),
            h_hat_sd=_sd(h_hat),
            eps_consistent_mean=_mean(consistent),
            eps_consistent_sd=_sd(consistent),
            wall_time=time.perf_counter() - started,
        )

    @staticmethod
    def reproduce_table(
        table_id: int,
        trials: Optional[int] = None,
        seed: Optional[int] = None,
        workers: Optional[int] = None,
        grid: Optional[BandGrid] = None,
        db: Optional[Session] = None,
    ) -> TableReproduction:
        """
        Rerun every cell of a reference table. Calibrations computed on the
        way are appended to the store when a session is given.
        """
        table = TABLES.get(table_id)
        if table is None:
            raise ConfigurationError("unknown reference table", details={"table_id": table_id, "known": sorted(TABLES)})
        trials = trials or table.trials
        seed = settings.master_seed if seed is None else seed
        grid = grid or BandGrid.geometric()
        cells = []
        for position, n in enumerate(sorted({n for block in table.quantiles for n in block.ns})):
            cells.extend(_quantile_cells(table, n, grid, trials, _cell_seed(seed, table_id, position), workers, db))
        for b, block in enumerate(table.power):
            for position, n in enumerate(block.ns):
                cell_seed = _cell_seed(seed, table_id, 1000 * (b + 1) + position)
                cells.extend(_power_cells(table, block, position, n, grid, trials, cell_seed, workers))
        logger.info("reference table %d reproduced: %d cells", table_id, len(cells))
        return TableReproduction(table_id=table_id, title=table.title, trials=trials, seed=seed, cells=cells)

    @staticmethod
    def table_frame(rep: TableReproduction) -> pd.DataFrame:
        return pd.DataFrame([c.model_dump() for c in rep.cells])

    @staticmethod
    def estimation_tail_frequency(
        cfg: GeneratorConfig,
        grid: BandGrid,
        threshold_c: float,
        trials: int,
        delta: float,
        workers: Optional[int] = None,
    ) -> Tuple[float, float, float]:
        """
        (frequency, standard error, lower bound) of |eps_hat - eps| > delta for
        a binary mean mixture. Trials without a rejection count as eps_hat = 0.
        """
        scenario = cfg.scenario
        if not isinstance(scenario, MeanMixture) or scenario.mixture.k != 1:
            raise ConfigurationError("tail frequency is defined for binary mean mixtures")
        mixture, eps = scenario.mixture, cfg.eps
        f0 = mixture.base
        outcomes = HarnessService.run_trials(cfg, grid, trials, threshold=threshold_c, f0=f0, workers=workers)
        misses = 0
        for o in outcomes:
            if o.j_stats[0] > threshold_c:
                estimate = o.eps_consistent if o.eps_consistent is not None else o.eps_nonpar[0]
            else:
                estimate = 0.0
            misses += abs(estimate - eps) > delta
        freq = misses / trials
        bound = DensityService.estimation_lower_bound(f0, f0.shifted(mixture.h), eps, cfg.n, delta)
        return freq, math.sqrt(freq * (1.0 - freq) / trials), bound

    @staticmethod
    def log_power_trend(reports: Sequence[ExperimentReport]) -> float:
        """Correlation of log w2 with N over reports with w2 > 0"""
        points = [(r.n, math.log(r.w2)) for r in reports if r.w2 is not None and r.w2 > 0]
        if len(points) < 3:
            raise ConfigurationError("power trend needs at least three positive type-2 frequencies")
        ns, logs = zip(*points)
        return float(np.corrcoef(ns, logs)[0, 1])

    @staticmethod
    def oracle_mean_check(
        spec: MixtureSpec,
        b_points: Sequence[float],
        n: int,
        trials: int,
        seed: Optional[int] = None,
    ) -> pd.DataFrame:
        """
        Monte Carlo mean and standard error of Psi_N(b) next to the
        population Psi(b), plus the sample mean next to the mixture mean
        (row b = NaN).
        """
        seed = settings.master_seed if seed is None else seed
        cfg = GeneratorConfig(scenario=MeanMixture(mixture=spec), n=n, seed=seed)
        b_points = np.asarray(b_points, dtype=float)
        profiles = np.empty((trials, b_points.size))
        means = np.empty(trials)
        for i in range(trials):
            s = SimulationService.generate(cfg, SimulationService.trial_rng(seed, i))
            profiles[i] = DetectionService.psi_profile(s, b_points)
            means[i] = DetectionService.sample_mean(s)
        mc = np.append(profiles.mean(axis=0), means.mean())
        se = np.append(profiles.std(axis=0, ddof=1), means.std(ddof=1)) / math.sqrt(trials)
        population = [DensityService.psi_population(spec, float(b)) for b in b_points]
        population.append(DensityService.mixture_mean(spec))
        frame = pd.DataFrame(
            {"b": np.append(b_points, np.nan), "monte_carlo": mc, "standard_error": se, "population": population}
        )
        frame["z"] = (frame["monte_carlo"] - frame["population"]) / frame["standard_error"]
        return frame


def _mean(values) -> Optional[float]:
    return float(np.mean(values)) if values else None


def _sd(values) -> Optional[float]:
    return float(np.std(values, ddof=1)) if len(values) > 1 else None


def _cell_seed(seed: int, table_id: int, cell: int) -> int:
    return int(np.random.SeedSequence([seed, table_id, cell]).generate_state(1, dtype=np.uint32)[0])


def _quantile_cells(
    table: ReferenceTable, n: int, grid: BandGrid, trials: int, seed: int, workers, db
) -> List[TableCell]:
    cfg = table.null_scenario(n).with_seed(seed)
    levels = [block.p for block in table.quantiles if n in block.ns]
    records = HarnessService.calibrate(cfg, grid, max(trials, MIN_CALIBRATION_TRIALS), levels, table.options, workers)
    if db is not None:
        for record in records:
            CalibrationStore.append(db, record)
    cells = []
    for block in table.quantiles:
        if n not in block.ns:
            continue
        reference = block.reference[block.ns.index(n)]
        reproduced = next(r.threshold for r in records if r.p == block.p and r.component == 0)
        cells.append(_cell(f"C (p={block.p:g})", n, reference, reproduced, table.quantile_rtol * reference,
                           table.informational))
    return cells


def _power_cells(
    table: ReferenceTable, block: PowerBlock, position: int, n: int, grid: BandGrid, trials: int, seed: int, workers
) -> List[TableCell]:
    cfg = block.scenario(n).with_seed(seed)
    report = HarnessService.run_power(
        cfg, grid, block.thresholds[position], trials, table.options, block.component, workers=workers
    )
    tolerance = max(FREQUENCY_ATOL, 2.0 * report.standard_error)
    cells = [_cell(block.label, n, block.w2[position], report.w2, tolerance, table.informational)]
    if block.eps_hat is not None:
        reproduced = report.eps_hat_mean if report.eps_hat_mean is not None else float("nan")
        cells.append(_cell(f"eps_hat ({block.label})", n, block.eps_hat[position], reproduced, ESTIMATE_ATOL,
                           table.informational))
    return cells


def _cell(row: str, n: int, reference: float, reproduced: float, tolerance: float, informational: bool) -> TableCell:
    delta = abs(reproduced - reference)
    return TableCell(
        row=row,
        n=n,
        reference=reference,
        reproduced=reproduced,
        delta=delta,
        tolerance=tolerance,
        passed=bool(delta <= tolerance),
        informational=informational,
    )
