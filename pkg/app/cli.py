"""
Command-line front end.

    python -m app.cli detect --input data.txt --C 0.038
    python -m app.cli calibrate --scenario gaussian --n 500,1000 --trials 1000 --store sqlite:///cal.db
    python -m app.cli reproduce --table 1 --trials 200 --seed 7
"""
import argparse
import logging
import sys
from typing import Optional, Sequence, Tuple

import pandas as pd

from app.core.config import settings
from app.core.logging import configure_logging
from app.db.database import make_session_factory
from app.schemas.densities import Density1D, MixtureSpec
from app.schemas.detection import BandGrid, DetectionResult, PhiSource, Sample
from app.schemas.harness import PipelineOptions
from app.schemas.multivariate import VectorSample
from app.schemas.simulation import (
    AR1Mixture,
    BivariateMixture,
    GeneratorConfig,
    SwitchingMode,
    SwitchingRegression,
    VarianceMixture,
    mean_mixture,
    three_class,
)
from app.services.asymmetric_service import AsymmetricDetectionService
from app.services.calibration_store import CalibrationStore
from app.services.detection_service import DetectionService
from app.services.estimation_service import EstimationService
from app.services.harness_service import HarnessService, fingerprint
from app.services.multivariate_service import MultivariateService
from app.services.peeling_service import PeelingService
from app.services.simulation_service import SimulationService
from app.utils import data_io
from app.utils.exceptions import EXIT_CONFIG, EXIT_OK, ConfigurationError, SwitchDetectError
from app.utils.responses import OutputFormat, ReportRenderer

logger = logging.getLogger(__name__)

SCENARIOS = ("gaussian", "variance", "three-class", "bivariate", "regression", "ar1")


class CliUsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Raises instead of exiting so `run` can map usage errors to a status"""

    def error(self, message):
        raise CliUsageError(message)


def _floats(text: str) -> Tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> Tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _add_grid(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kappa", type=float, default=settings.grid_kappa, help="smallest band half-width")
    p.add_argument("--B", dest="upper", type=float, default=settings.grid_upper, help="largest band half-width")
    p.add_argument("--points", type=int, default=settings.grid_points, help="geometric grid size")


def _add_threshold(p: argparse.ArgumentParser) -> None:
    p.add_argument("--C", dest="threshold", type=float, help="explicit threshold (overrides calibration lookup)")
    p.add_argument("--p", dest="level", type=float, help="calibration level to look up in the store")
    p.add_argument("--fingerprint", help="calibration fingerprint (default: the detector's standard null)")


def _add_store(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--store",
        default=settings.calibration_store_url,
        help="calibration store URL",
    )


def _add_scenario(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", choices=SCENARIOS, default="gaussian")
    p.add_argument("--eps", type=float, default=0.0)
    p.add_argument("--h", type=float, default=2.0, help="mean shift (second coordinate for bivariate)")
    p.add_argument("--lam", type=float, default=3.0, help="contaminating standard deviation")
    p.add_argument("--rho", type=float, default=0.5, help="AR(1) coefficient")
    p.add_argument("--beta0", type=_floats, default=(1.0, 1.0))
    p.add_argument("--beta1", type=_floats, default=(1.0, 2.0))
    p.add_argument("--switching", choices=[m.value for m in SwitchingMode], default=SwitchingMode.PER_OBSERVATION.value)


def _add_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--window", type=int, help="sliding window for coefficient traces")
    p.add_argument("--coordinates", type=_ints, help="columns entering the vector statistic")
    p.add_argument("--phi-source", choices=[PhiSource.CLOSED_FORM.value, PhiSource.CHI_SQUARE.value],
                   default=PhiSource.CLOSED_FORM.value)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="switchdetect", description="Retrospective detection of switching structure")
    parser.add_argument("--format", choices=[f.value for f in OutputFormat], default=OutputFormat.HUMAN.value)
    parser.add_argument("--log-level", default=None)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, help_text in (
        ("detect", "symmetric band-split detection on a univariate sample"),
        ("detect-var", "variance contamination detection"),
        ("estimate", "detection followed by parameter estimation"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--input", required=True)
        _add_grid(p)
        _add_threshold(p)
        _add_store(p)
        if name == "detect-var":
            p.add_argument("--phi-source", choices=[PhiSource.CLOSED_FORM.value, PhiSource.CHI_SQUARE.value],
                           default=PhiSource.CLOSED_FORM.value)
        if name == "estimate":
            p.add_argument("--f0", help="'gaussian' or a tabulated density file")

    p = sub.add_parser("detect-asym", help="asymmetric band detection under a known ordinary density")
    p.add_argument("--input", required=True)
    p.add_argument("--f0", required=True, help="'chi-square' or a tabulated density file (centered)")
    p.add_argument("--C", dest="threshold", type=float, required=True)
    _add_grid(p)

    p = sub.add_parser("detect-mv", help="vector detection with the normed statistic")
    p.add_argument("--input", required=True)
    p.add_argument("--coordinates", type=_ints)
    _add_grid(p)
    _add_threshold(p)
    _add_store(p)

    p = sub.add_parser("detect-reg", help="switching regression detection (first column Y)")
    p.add_argument("--input", required=True)
    p.add_argument("--C", dest="thresholds", type=_floats, help="one threshold per coefficient")
    p.add_argument("--p", dest="level", type=float)
    p.add_argument("--fingerprint")
    p.add_argument("--window", type=int)
    _add_grid(p)
    _add_store(p)

    p = sub.add_parser("peel", help="multiple-switch classification")
    p.add_argument("--input", required=True)
    p.add_argument("--C", dest="threshold", type=float, help="reference threshold, scaled as sqrt(n_ref / n)")
    p.add_argument("--n-ref", type=int, help="size the reference threshold was calibrated at")
    p.add_argument("--p", dest="level", type=float)
    p.add_argument("--fingerprint")
    p.add_argument("--max-iter", type=int, default=settings.max_peel_iter)
    p.add_argument("--min-size", type=int, default=settings.min_subsample)
    _add_grid(p)
    _add_store(p)

    p = sub.add_parser("calibrate", help="Monte Carlo thresholds under H0")
    _add_scenario(p)
    _add_options(p)
    _add_grid(p)
    _add_store(p)
    p.add_argument("--n", type=_ints, required=True, help="comma-separated sample sizes")
    p.add_argument("--p", dest="levels", type=_floats, default=(0.95, 0.99))
    p.add_argument("--trials", type=int, default=settings.default_trials)
    p.add_argument("--seed", type=int, default=settings.master_seed)
    p.add_argument("--workers", type=int, default=settings.workers)
    p.add_argument("--no-store", action="store_true", help="print without appending to the store")

    p = sub.add_parser("reproduce", help="rerun a reference table")
    p.add_argument("--table", type=int, required=True, choices=range(1, 11), metavar="1..10")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int, default=settings.master_seed)
    p.add_argument("--workers", type=int, default=settings.workers)
    p.add_argument("--store", help="append computed calibrations to this store")
    _add_grid(p)

    p = sub.add_parser("generate", help="write a synthetic data set")
    _add_scenario(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=settings.master_seed)
    p.add_argument("--output", required=True)

    p = sub.add_parser("oracle", help="Monte Carlo mean of Psi_N(b) against the population curve")
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--h", type=float, default=2.0)
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--trials", type=int, default=2000)
    p.add_argument("--b", type=_floats, default=(0.5, 1.0, 1.5, 2.0, 3.0))
    p.add_argument("--seed", type=int, default=settings.master_seed)

    p = sub.add_parser("store-export", help="write the calibration store as JSON Lines")
    _add_store(p)
    p.add_argument("--output", required=True)

    p = sub.add_parser("store-import", help="append JSON Lines records to the calibration store")
    _add_store(p)
    p.add_argument("--input", required=True)
    return parser


def _grid(args) -> BandGrid:
    try:
        return BandGrid.geometric(args.kappa, args.upper, args.points)
    except ValueError as exc:
        raise ConfigurationError(f"invalid band grid: {exc}")


def scenario_config(args, n: int, seed: int = 0) -> GeneratorConfig:
    """Generator configuration from the scenario flags"""
    try:
        if args.scenario == "gaussian":
            return mean_mixture(args.eps, args.h, n, seed)
        if args.scenario == "three-class":
            return three_class(n, seed)
        if args.scenario == "variance":
            scenario = VarianceMixture(lam=args.lam, eps=args.eps)
        elif args.scenario == "bivariate":
            scenario = BivariateMixture(mean1=(0.0, args.h), eps=args.eps)
        elif args.scenario == "regression":
            scenario = SwitchingRegression(
                beta0=args.beta0, beta1=args.beta1, eps=args.eps, switching=SwitchingMode(args.switching)
            )
        else:
            scenario = AR1Mixture(rho=args.rho, mixture=MixtureSpec.binary(args.eps, args.h))
        return GeneratorConfig(scenario=scenario, n=n, seed=seed)
    except ValueError as exc:
        raise ConfigurationError(f"invalid scenario: {exc}")


def _standard_null(command: str, n: int, args) -> Tuple[GeneratorConfig, PipelineOptions]:
    if command == "detect-var":
        return GeneratorConfig(scenario=VarianceMixture(), n=n), PipelineOptions(phi_source=PhiSource(args.phi_source))
    if command == "detect-mv":
        coords = tuple(args.coordinates) if args.coordinates else None
        return GeneratorConfig(scenario=BivariateMixture(), n=n), PipelineOptions(coordinates=coords)
    if command == "detect-reg":
        return GeneratorConfig(scenario=SwitchingRegression(), n=n), PipelineOptions(window=args.window)
    return mean_mixture(0.0, 0.0, n), PipelineOptions()


def _lookup_threshold(args, n: int, grid: BandGrid, component: int = 0) -> Tuple[float, str]:
    """Explicit --C first, then the store; returns (C, provenance)"""
    if getattr(args, "threshold", None) is not None:
        return args.threshold, "explicit"
    if args.level is None:
        raise ConfigurationError("either --C or --p is required")
    cfg, options = _standard_null(args.command, n, args)
    key = args.fingerprint or fingerprint(cfg, grid, options)
    with make_session_factory(args.store)() as db:
        value, interpolated = CalibrationStore.threshold(db, key, n, args.level, component)
    return value, "interpolated" if interpolated else "calibrated"


def _emit(text: str) -> None:
    sys.stdout.write(text + "\n")


def _detection_fields(det: DetectionResult, provenance: str, include_profile: bool = False) -> dict:
    rec = det.record(include_profile=include_profile)
    rec["threshold_source"] = provenance
    return rec


def _cmd_detect(args, fmt: OutputFormat) -> None:
    s = data_io.load_sample(args.input)
    grid = _grid(args)
    c, provenance = _lookup_threshold(args, s.n, grid)
    if args.command == "detect-var":
        det = AsymmetricDetectionService.detect_variance_contamination(s, grid, c, PhiSource(args.phi_source))
    else:
        det = DetectionService.detect(s, grid, c)
    if args.command == "estimate":
        _emit_estimate(args, det, fmt)
        return
    _emit(ReportRenderer.summary(_detection_fields(det, provenance), fmt, title="Detection",
                                 payload=_detection_fields(det, provenance, include_profile=True)))


def _emit_estimate(args, det: DetectionResult, fmt: OutputFormat) -> None:
    fields = det.record(include_profile=False)
    if det.rejected:
        f0 = None
        if args.f0 == "gaussian":
            f0 = Density1D.gaussian()
        elif args.f0:
            f0 = data_io.load_tabulated(args.f0)
        est = EstimationService.estimate(det, f0)
        fields.update(est.model_dump(exclude={"b_star_n"}))
    else:
        fields["note"] = "H0 accepted: nothing to estimate"
    _emit(ReportRenderer.summary(fields, fmt, title="Estimation"))


def _cmd_detect_asym(args, fmt: OutputFormat) -> None:
    s = data_io.load_sample(args.input)
    f0 = Density1D.chi_square_residual() if args.f0 == "chi-square" else data_io.load_tabulated(args.f0)
    det = AsymmetricDetectionService.detect_asymmetric(s, _grid(args), f0, args.threshold)
    _emit(ReportRenderer.summary(_detection_fields(det, "explicit"), fmt, title="Asymmetric detection",
                                 payload=_detection_fields(det, "explicit", include_profile=True)))


def _cmd_detect_mv(args, fmt: OutputFormat) -> None:
    vs = data_io.load_vector_sample(args.input)
    grid = _grid(args)
    c, provenance = _lookup_threshold(args, vs.n, grid)
    det = MultivariateService.detect_multivariate(vs, grid, c, args.coordinates)
    _emit(ReportRenderer.summary(_detection_fields(det, provenance), fmt, title="Vector detection",
                                 payload=_detection_fields(det, provenance, include_profile=True)))


def _cmd_detect_reg(args, fmt: OutputFormat) -> None:
    rd = data_io.load_regression(args.input)
    grid = _grid(args)
    if args.thresholds is not None:
        thresholds = list(args.thresholds)
        sources = ["explicit"] * len(thresholds)
    else:
        # calibration records of the regression null are keyed by the observation count
        args.threshold = None
        looked_up = [_lookup_threshold(args, rd.n, grid, j) for j in range(rd.k)]
        thresholds = [c for c, _ in looked_up]
        sources = [source for _, source in looked_up]
    reg = MultivariateService.detect_switching_regression(rd, grid, thresholds, args.window)
    payload = reg.record()
    for coefficient, source in zip(payload["coefficients"], sources):
        coefficient["threshold_source"] = source
    frame = pd.DataFrame(payload["coefficients"])
    _emit(ReportRenderer.frame(frame, fmt, title=f"Switching regression (window {reg.window})", payload=payload))


def _cmd_peel(args, fmt: OutputFormat) -> None:
    s = data_io.load_sample(args.input)
    grid = _grid(args)
    if args.threshold is not None:
        threshold_fn = PeelingService.sqrt_threshold(args.threshold, args.n_ref or s.n)
    elif args.level is not None:
        key = args.fingerprint or fingerprint(mean_mixture(0.0, 0.0, s.n), grid)
        with make_session_factory(args.store)() as db:
            threshold_fn = CalibrationStore.threshold_function(db, key, args.level)
    else:
        raise ConfigurationError("either --C or --p is required")
    result = PeelingService.peel(s, grid, threshold_fn, args.max_iter, args.min_size)
    frame = pd.DataFrame(
        [dict(iteration=i + 1, n=d.n, **d.record(include_profile=False)) for i, d in enumerate(result.per_iteration)]
    )
    title = f"Peeling: {len(result.classes)} classes, sizes {[int(c.size) for c in result.classes]}, stop={result.stop_reason}"
    _emit(ReportRenderer.frame(frame, fmt, title=title, payload=result.record()))


def _cmd_calibrate(args, fmt: OutputFormat) -> None:
    grid = _grid(args)
    options = PipelineOptions(
        window=args.window,
        coordinates=tuple(args.coordinates) if args.coordinates else None,
        phi_source=PhiSource(args.phi_source),
    )
    records = []
    for n in args.n:
        cfg = scenario_config(args, n, args.seed)
        records.extend(HarnessService.calibrate(cfg, grid, args.trials, args.levels, options, args.workers))
    if not args.no_store:
        with make_session_factory(args.store)() as db:
            for record in records:
                CalibrationStore.append(db, record)
    frame = pd.DataFrame([r.model_dump(exclude={"scenario", "software_version"}) for r in records])
    _emit(ReportRenderer.frame(frame, fmt, title="Calibration", payload=[r.model_dump(mode="json") for r in records]))


def _cmd_reproduce(args, fmt: OutputFormat) -> None:
    grid = _grid(args)
    if args.store:
        with make_session_factory(args.store)() as db:
            rep = HarnessService.reproduce_table(args.table, args.trials, args.seed, args.workers, grid, db)
    else:
        rep = HarnessService.reproduce_table(args.table, args.trials, args.seed, args.workers, grid)
    verdict = "all cells within tolerance" if rep.all_passed else "some cells outside tolerance"
    title = f"Reference table {rep.table_id}: {rep.title} ({rep.trials} trials, seed {rep.seed}) - {verdict}"
    _emit(ReportRenderer.frame(HarnessService.table_frame(rep), fmt, title=title, payload=rep))


def _cmd_generate(args, fmt: OutputFormat) -> None:
    cfg = scenario_config(args, args.n, args.seed)
    data = SimulationService.generate(cfg)
    if isinstance(data, Sample):
        data_io.write_sample(args.output, data)
    elif isinstance(data, VectorSample):
        data_io.write_vector_sample(args.output, data)
    else:
        data_io.write_regression(args.output, data)
    _emit(ReportRenderer.summary({"scenario": cfg.scenario.kind, "n": cfg.n, "seed": cfg.seed, "output": args.output},
                                 fmt, title="Generated"))


def _cmd_oracle(args, fmt: OutputFormat) -> None:
    try:
        spec = MixtureSpec.binary(args.eps, args.h)
        frame = HarnessService.oracle_mean_check(spec, args.b, args.n, args.trials, args.seed)
    except ValueError as exc:
        raise ConfigurationError(f"invalid mixture: {exc}")
    _emit(ReportRenderer.frame(frame, fmt, title="Monte Carlo mean vs population (last row: sample mean)"))


def _cmd_store_export(args, fmt: OutputFormat) -> None:
    with make_session_factory(args.store)() as db:
        count = CalibrationStore.export_jsonl(db, args.output)
    _emit(ReportRenderer.summary({"exported": count, "output": args.output}, fmt))


def _cmd_store_import(args, fmt: OutputFormat) -> None:
    with make_session_factory(args.store)() as db:
        count = CalibrationStore.import_jsonl(db, args.input)
    _emit(ReportRenderer.summary({"imported": count, "input": args.input}, fmt))


COMMANDS = {
    "detect": _cmd_detect,
    "detect-var": _cmd_detect,
    "estimate": _cmd_detect,
    "detect-asym": _cmd_detect_asym,
    "detect-mv": _cmd_detect_mv,
    "detect-reg": _cmd_detect_reg,
    "peel": _cmd_peel,
    "calibrate": _cmd_calibrate,
    "reproduce": _cmd_reproduce,
    "generate": _cmd_generate,
    "oracle": _cmd_oracle,
    "store-export": _cmd_store_export,
    "store-import": _cmd_store_import,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse, dispatch and map failures to exit statuses"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except CliUsageError as exc:
        sys.stderr.write(f"{parser.prog}: error: {exc}\n")
        return EXIT_CONFIG
    configure_logging(args.log_level)
    try:
        COMMANDS[args.command](args, OutputFormat(args.format))
    except SwitchDetectError as exc:
        logger.debug("command %s failed: %s", args.command, exc.details)
        sys.stderr.write(f"error: {exc.message}\n")
        return exc.exit_status
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
