"""
CSV Handlers - plain-text import and export of matrices, scores and reports

Dialect: comma separator, '.' decimal point, LF line endings, '#'-prefixed
metadata lines. Floats are written with 9 significant digits, or 17 in
full-precision mode (which round-trips float64 exactly).
"""
import csv
import logging
import os
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..states.errors import ParseError
from ..states.models import (BiasFactors, Dataset, ExperimentReport, ProcrustesFit, ScoreMatrix,
                             ScorePairTable)

logger = logging.getLogger(__name__)

ORACLE_FIELDS = ("directions", "sigma_sq", "tau_sq", "true_scores", "scaled_scores",
                 "population_eigs", "mean", "labels", "test_true_scores", "test_labels")
REPORT_AGGREGATE_MARKER = "# aggregate"


def format_float(value, full_precision: bool = False) -> str:
    """Format one float with 9 (or 17) significant digits"""
    return ("%.17g" if full_precision else "%.9g") % float(value)


def format_cell(value, full_precision: bool = False) -> str:
    """Format a report cell: ints verbatim, floats per precision, None empty"""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(value, full_precision)
    return str(value)


def derived_path(out: str, part: str) -> str:
    """
    Name of a companion output file: <stem>_<part><suffix>

    :param out: Primary output path
    :param part: Part name
    :return: Derived path
    """
    stem, suffix = os.path.splitext(out)
    return f"{stem}_{part}{suffix or '.csv'}"


def _open_writer(path: str):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    handle = open(path, "w", newline="", encoding="utf-8")
    return handle, csv.writer(handle, lineterminator="\n")


def _write_metadata(handle, metadata: Optional[Dict[str, str]]):
    for key, value in (metadata or {}).items():
        handle.write(f"# {key}={value}\n")


def write_matrix(path: str, values, full_precision: bool = False, header: Optional[Sequence[str]] = None,
                 metadata: Optional[Dict[str, str]] = None) -> str:
    """
    Write a 2-D array, one matrix row per line

    :param path: Output path
    :param values: 2-D array (1-D is written as one row)
    :param full_precision: Use 17 significant digits
    :param header: Optional header line
    :param metadata: Optional '# key=value' lines written first
    :return: The path written
    """
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    handle, writer = _open_writer(path)
    with handle:
        _write_metadata(handle, metadata)
        if header is not None:
            writer.writerow(header)
        for row in values:
            writer.writerow([format_float(v, full_precision) for v in row])
    logger.info(f"Wrote {values.shape[0]}x{values.shape[1]} matrix to {path}")
    return path


def _data_lines(path: str) -> Iterable[Tuple[int, List[str]]]:
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e.strerror}") from e
    with handle:
        reader = csv.reader(handle)
        for cells in reader:
            if not cells or (len(cells) == 1 and not cells[0].strip()):
                continue
            if cells[0].lstrip().startswith("#"):
                continue
            yield reader.line_num, cells


def read_metadata(path: str) -> Dict[str, str]:
    """Collect '# key=value' lines of a file"""
    metadata = {}
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line.startswith("#") and "=" in line:
                key, value = line[1:].split("=", 1)
                metadata[key.strip()] = value.strip()
    return metadata


def read_matrix(path: str, header: bool = False) -> np.ndarray:
    """
    Read a numeric CSV matrix

    :param path: Input path
    :param header: Skip the first non-comment line
    :return: 2-D float64 array
    """
    rows = []
    width = None
    skip = header
    for line_number, cells in _data_lines(path):
        if skip:
            skip = False
            continue
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise ParseError(f"expected {width} fields, found {len(cells)}", line_number)
        try:
            rows.append([float(cell) for cell in cells])
        except ValueError as e:
            raise ParseError(f"non-numeric field ({e})", line_number) from e
    if not rows:
        raise ParseError(f"{path} contains no data rows")
    return np.array(rows, dtype=np.float64)


def write_dataset(out: str, dataset: Dataset, full_precision: bool = False,
                  metadata: Optional[Dict[str, str]] = None) -> List[str]:
    """
    Export the training data, the test data and the oracle fields

    The training matrix goes to out (d rows, one observation per column, no
    header); the test matrix and every oracle field get derived file names.

    :param out: Primary output path
    :param dataset: Dataset to export
    :param full_precision: Use 17 significant digits
    :param metadata: '# key=value' lines for the data files
    :return: Paths written
    """
    oracle = dataset.oracle
    paths = [write_matrix(out, dataset.train, full_precision, metadata=metadata),
             write_matrix(derived_path(out, "test"), dataset.test, full_precision, metadata=metadata)]
    fields = {
        "directions": oracle.directions,
        "sigma_sq": oracle.sigma_sq,
        "tau_sq": [oracle.tau_sq],
        "true_scores": oracle.true_scores,
        "scaled_scores": oracle.scaled_scores,
        "population_eigs": oracle.population_eigs,
        "mean": oracle.mean,
        "labels": oracle.labels,
        "test_true_scores": dataset.oracle_test.true_scores,
        "test_labels": dataset.oracle_test.labels,
    }
    for name in ORACLE_FIELDS:
        if fields[name] is None:
            continue
        paths.append(write_matrix(derived_path(out, f"oracle_{name}"), fields[name], full_precision,
                                  header=[name]))
    return paths


def read_oracle_field(path: str) -> Tuple[str, np.ndarray]:
    """
    Read one oracle sidecar file

    :return: (field name from the header line, values)
    """
    for _, cells in _data_lines(path):
        name = cells[0].strip()
        break
    else:
        raise ParseError(f"{path} is empty")
    return name, read_matrix(path, header=True)


def write_scores(path: str, scores: ScoreMatrix, full_precision: bool = False,
                 metadata: Optional[Dict[str, str]] = None) -> str:
    """
    Write scores with header comp_1..comp_m, one observation per row

    :param path: Output path
    :param scores: Scores to write
    :param full_precision: Use 17 significant digits
    :param metadata: Extra '# key=value' lines (kind is always included)
    :return: The path written
    """
    info = {"kind": scores.kind}
    info.update(metadata or {})
    header = [f"comp_{k + 1}" for k in range(scores.comps)]
    return write_matrix(path, scores.values.T, full_precision, header=header, metadata=info)


def read_scores(path: str) -> ScoreMatrix:
    """Read a scores file written by write_scores"""
    kind = read_metadata(path).get("kind", "sample")
    return ScoreMatrix(values=read_matrix(path, header=True).T, kind=kind)


def write_factors(path: str, factors: BiasFactors, full_precision: bool = False,
                  metadata: Optional[Dict[str, str]] = None) -> List[str]:
    """
    Write bias factors as 'provenance,rho_1,..,rho_m' and the rotation, if
    any, as an m x m matrix next to it

    :return: Paths written
    """
    handle, writer = _open_writer(path)
    with handle:
        _write_metadata(handle, metadata)
        writer.writerow(["provenance"] + [f"rho_{k + 1}" for k in range(factors.m)])
        writer.writerow([factors.provenance] + [format_float(r, full_precision) for r in factors.rho])
    logger.info(f"Wrote {factors.provenance} bias factors to {path}")
    paths = [path]
    if factors.rotation is not None:
        paths.append(write_matrix(derived_path(path, "rotation"), factors.rotation, full_precision))
    return paths


def read_factors(path: str) -> List[BiasFactors]:
    """Read every factor row of a file written by write_factors"""
    factors = []
    rows = list(_data_lines(path))
    if not rows:
        raise ParseError(f"{path} contains no data rows")
    width = len(rows[0][1])
    for line_number, cells in rows[1:]:
        if len(cells) != width:
            raise ParseError(f"expected {width} fields, found {len(cells)}", line_number)
        try:
            rho = np.array([float(cell) for cell in cells[1:]])
        except ValueError as e:
            raise ParseError(f"non-numeric factor ({e})", line_number) from e
        factors.append(BiasFactors(rho=rho, provenance=cells[0].strip()))
    return factors


def write_procrustes(path: str, fit: ProcrustesFit, full_precision: bool = False,
                     metadata: Optional[Dict[str, str]] = None) -> str:
    """Write a Procrustes fit as 'theta,scale_1,..,scale_m,objective,iters'"""
    m = fit.scale.shape[0]
    handle, writer = _open_writer(path)
    with handle:
        _write_metadata(handle, metadata)
        writer.writerow(["theta"] + [f"scale_{k + 1}" for k in range(m)] + ["objective", "iters"])
        writer.writerow([format_cell(fit.theta, full_precision)]
                        + [format_float(s, full_precision) for s in fit.scale]
                        + [format_float(fit.objective, full_precision), str(fit.iters)])
    logger.info(f"Wrote Procrustes fit to {path}")
    return path


def _write_table(writer, columns: Sequence[str], rows: Iterable[Dict[str, object]],
                 full_precision: bool):
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_cell(row.get(column), full_precision) for column in columns])


def write_rows(path: str, columns: Sequence[str], rows: Iterable[Dict[str, object]],
               full_precision: bool = False, metadata: Optional[Dict[str, str]] = None) -> str:
    """Write a plain table of dict rows under a header line"""
    rows = list(rows)
    handle, writer = _open_writer(path)
    with handle:
        _write_metadata(handle, metadata)
        _write_table(writer, columns, rows, full_precision)
    logger.info(f"Wrote {len(rows)} rows to {path}")
    return path


def write_report(path: str, report: ExperimentReport, full_precision: bool = False) -> str:
    """
    Write per-repetition rows followed by a '# aggregate' block

    The aggregate block has columns column,mean,sd,count over the
    non-excluded rows.

    :return: The path written
    """
    handle, writer = _open_writer(path)
    with handle:
        _write_metadata(handle, report.metadata)
        _write_table(writer, report.columns, report.rows, full_precision)
        handle.write(REPORT_AGGREGATE_MARKER + "\n")
        writer.writerow(["column", "mean", "sd", "count"])
        for column, (mean, sd, count) in report.aggregate().items():
            writer.writerow([column, format_float(mean, full_precision),
                             format_float(sd, full_precision), str(count)])
    logger.info(f"Wrote {report.name} report ({len(report.rows)} rows, {report.excluded} excluded) to {path}")
    return path


def _parse_cell(cell: str):
    if cell == "":
        return None
    try:
        return int(cell)
    except ValueError:
        pass
    try:
        return float(cell)
    except ValueError:
        return cell


def read_report(path: str) -> ExperimentReport:
    """
    Read the row section of a report written by write_report

    :return: ExperimentReport whose aggregate() recomputes the written block
    """
    metadata = read_metadata(path)
    columns = None
    rows = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        for cells in reader:
            if not cells:
                continue
            if cells[0].strip() == REPORT_AGGREGATE_MARKER:
                break
            if cells[0].lstrip().startswith("#"):
                continue
            if columns is None:
                columns = cells
                continue
            if len(cells) != len(columns):
                raise ParseError(f"expected {len(columns)} fields, found {len(cells)}", reader.line_num)
            row = {column: _parse_cell(cell) for column, cell in zip(columns, cells)}
            for key in ("status", "reason", "undershoot", "degenerate"):
                if key in row and row[key] is None:
                    row[key] = ""
            rows.append(row)
    if columns is None:
        raise ParseError(f"{path} has no header row")
    return ExperimentReport(name=metadata.get("experiment", ""), columns=columns, rows=rows,
                            metadata=metadata)


def write_score_pairs(path: str, table: ScorePairTable, full_precision: bool = False,
                      metadata: Optional[Dict[str, str]] = None) -> List[str]:
    """
    Write the long-format score pairs and, next to them, the per-repetition
    RMS distances

    :return: Paths written
    """
    handle, writer = _open_writer(path)
    with handle:
        _write_metadata(handle, metadata)
        _write_table(writer, table.columns, table.rows, full_precision)
    logger.info(f"Wrote {len(table.rows)} score pairs to {path}")

    rms_path = derived_path(path, "rms")
    rms_columns = []
    for row in table.rms:
        rms_columns += [c for c in row if c not in rms_columns]
    handle, writer = _open_writer(rms_path)
    with handle:
        _write_metadata(handle, metadata)
        _write_table(writer, rms_columns, table.rms, full_precision)
    logger.info(f"Wrote RMS distances to {rms_path}")
    return [path, rms_path]
