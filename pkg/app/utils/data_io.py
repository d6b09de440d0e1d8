"""Text formats read by the detectors and written by the generators"""
import io
import logging
import re
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd
from pydantic import ValidationError
from scipy import integrate

from app.schemas.densities import Density1D
from app.schemas.detection import Sample
from app.schemas.multivariate import RegressionData, VectorSample
from app.utils.exceptions import DataFormatError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
DELIMITERS = r"[,;\s]+"


def _read_table(path: PathLike) -> np.ndarray:
    """Numeric rows separated by commas, semicolons or whitespace; '#' starts a comment"""
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise DataFormatError("input file does not exist", details={"path": str(path)})
    except (OSError, UnicodeDecodeError) as exc:
        raise DataFormatError(f"cannot read input: {exc}", details={"path": str(path)})
    rows = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip(" \t,;")
        if line:
            rows.append(re.sub(DELIMITERS, ",", line))
    if not rows:
        raise DataFormatError("input file holds no observations", details={"path": str(path)})
    try:
        # round_trip parsing reads the %.17g text written below back bit for bit
        frame = pd.read_csv(
            io.StringIO("\n".join(rows)), header=None, engine="c", float_precision="round_trip"
        )
    except pd.errors.ParserError as exc:
        raise DataFormatError(f"cannot parse input: {exc}", details={"path": str(path)})
    try:
        table = frame.to_numpy(dtype=float)
    except ValueError:
        raise DataFormatError("input holds non-numeric values", details={"path": str(path)})
    if np.isnan(table).any():
        raise DataFormatError("rows have differing lengths", details={"path": str(path)})
    return table


def _build(model, path: PathLike, **fields):
    try:
        return model(**fields)
    except ValidationError as exc:
        raise DataFormatError(exc.errors()[0]["msg"], details={"path": str(path)})


def load_sample(path: PathLike) -> Sample:
    table = _read_table(path)
    if table.shape[1] != 1:
        raise DataFormatError("expected one value per line", details={"path": str(path)})
    return _build(Sample, path, values=table[:, 0])


def load_vector_sample(path: PathLike) -> VectorSample:
    return _build(VectorSample, path, rows=_read_table(path))


def load_regression(path: PathLike) -> RegressionData:
    """First column Y, remaining columns X"""
    table = _read_table(path)
    if table.shape[1] < 2:
        raise DataFormatError("regression input needs Y and at least one predictor", details={"path": str(path)})
    return _build(RegressionData, path, X=table[:, 1:], Y=table[:, 0])


def load_tabulated(path: PathLike) -> Density1D:
    """Columns x, f(x) with x strictly increasing; renormalized to unit mass"""
    table = _read_table(path)
    if table.shape[1] != 2:
        raise DataFormatError("tabulated density needs exactly two columns", details={"path": str(path)})
    xs, fs = table[:, 0], table[:, 1]
    mass = integrate.trapezoid(fs, xs)
    if not mass > 0:
        raise DataFormatError("tabulated density has no positive mass", details={"path": str(path)})
    try:
        return Density1D.tabulated(xs, fs / mass)
    except ValidationError as exc:
        raise DataFormatError(exc.errors()[0]["msg"], details={"path": str(path)})


def _write(path: PathLike, table: np.ndarray, sep: str) -> None:
    pd.DataFrame(table).to_csv(path, sep=sep, header=False, index=False, float_format="%.17g")
    logger.debug("wrote %d rows to %s", table.shape[0], path)


def write_sample(path: PathLike, s: Sample) -> None:
    _write(path, s.values.reshape(-1, 1), " ")


def write_vector_sample(path: PathLike, vs: VectorSample) -> None:
    _write(path, vs.rows, " ")


def write_regression(path: PathLike, rd: RegressionData) -> None:
    _write(path, np.column_stack([rd.Y, rd.X]), ",")
