"""Monte-Carlo replication of the simulation tables and CSV input/output.

Every replication draws from its own :class:`~dyncopula.mathcore.RngStream`
keyed by (cell, replication), so results do not depend on how replications
are scheduled across worker processes. Aggregation always runs in
replication order.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .copula import CorrelationPath, PairedSample, build_schedule, sample_array
from .exceptions import ConfigError, DynCopulaError
from .mathcore import RngStream
from .parametric import PEARSON, SPEARMAN, IdentifiabilityWarning, fit_constant, fit_linear, fit_power

__all__ = [
    "SummaryTable",
    "TABLE_IDS",
    "format_value",
    "read_csv",
    "read_paired_sample",
    "read_tabulated_path",
    "replicate_table",
    "summarize",
    "write_csv",
]

TABLE_IDS = (1, 2, 3)

# ---------------------------------------------------------------------------
# CSV


def format_value(value) -> str:
    """Shortest round-tripping text for floats; ``str`` for everything else."""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(stream, rows, columns, metadata=None, footer=None) -> None:
    """Write ``rows`` (dicts) as comma-separated text with a header row.

    ``metadata`` and ``footer`` entries become ``# key=value`` comment lines
    before the header and after the last row.
    """
    for key, value in (metadata or {}).items():
        stream.write(f"# {key}={format_value(value)}\n")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(row[c]) for c in columns])
    for key, value in (footer or {}).items():
        stream.write(f"# {key}={format_value(value)}\n")


def read_csv(source) -> tuple[dict, list[str], list[list[str]]]:
    """Parse a CSV written by :func:`write_csv` or by hand.

    Returns ``(metadata, header, rows)``. Lines starting with ``#`` are
    metadata; the first other line is the mandatory header.
    """
    text = source.read() if hasattr(source, "read") else _read_text(source)
    metadata, body = {}, []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            key, sep, value = stripped[1:].strip().partition("=")
            if sep:
                metadata[key.strip()] = value.strip()
            continue
        body.append((lineno, line))
    if not body:
        raise ConfigError("CSV input has no header row")
    header = [h.strip() for h in next(csv.reader([body[0][1]]))]
    rows = []
    for lineno, line in body[1:]:
        fields = [f.strip() for f in next(csv.reader([line]))]
        if len(fields) != len(header):
            raise ConfigError(f"line {lineno}: expected {len(header)} fields, got {len(fields)}")
        rows.append(fields)
    return metadata, header, rows


def _source_name(source) -> str:
    return str(getattr(source, "name", "<input>")) if hasattr(source, "read") else str(source)


def _read_text(path) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None


def _numeric_columns(header, rows, names, source_name):
    idx = [header.index(n) for n in names]
    out = np.empty((len(rows), len(names)))
    for r, fields in enumerate(rows):
        for c, i in enumerate(idx):
            try:
                out[r, c] = float(fields[i])
            except ValueError:
                raise ConfigError(
                    f"{source_name}: data row {r + 1}: column {names[c]!r} is not a number: {fields[i]!r}"
                ) from None
            if not math.isfinite(out[r, c]):
                raise ConfigError(f"{source_name}: data row {r + 1}: column {names[c]!r} is not finite")
    return out


def read_paired_sample(source) -> PairedSample:
    """Load a sample from columns ``u,v`` (copula scale) or ``x,y`` (raw scale).

    Rows are taken in file order, which is the sample order ``i = 1..n``.
    Pseudo-observations use average ranks divided by ``n + 1``.
    """
    _, header, rows = read_csv(source)
    name = _source_name(source)
    for pair in (("u", "v"), ("x", "y")):
        if all(p in header for p in pair):
            data = _numeric_columns(header, rows, pair, name)
            break
    else:
        raise ConfigError(f"{name}: need columns u,v or x,y; found {','.join(header)}")
    if data.shape[0] < 2:
        raise ConfigError(f"{name}: need at least two data rows")
    return PairedSample.from_columns(data[:, 0], data[:, 1])


def read_tabulated_path(source) -> CorrelationPath:
    """Load a tabulated drift from columns ``s,m``."""
    _, header, rows = read_csv(source)
    name = _source_name(source)
    if not ("s" in header and "m" in header):
        raise ConfigError(f"{name}: tabulated path needs columns s,m")
    data = _numeric_columns(header, rows, ("s", "m"), name)
    return CorrelationPath.tabulated(data[:, 0], data[:, 1])


# ---------------------------------------------------------------------------
# summary tables

SUMMARY_COLUMNS = ("table", "cell", "n", "alpha", "beta", "gamma", "estimator", "estimand",
                   "truth", "mean", "variance", "mse", "mc_se", "reps", "used", "failures")


def summarize(values, truth: float) -> dict:
    """Mean, population variance, MSE and Monte-Carlo standard error.

    ``mse`` is computed as ``variance + (mean - truth)**2`` so the identity
    holds exactly in floating point.
    """
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        nan = float("nan")
        return {"mean": nan, "variance": nan, "mse": nan, "mc_se": nan}
    mean = math.fsum(x) / x.size
    variance = math.fsum((x - mean) ** 2) / x.size
    return {"mean": mean, "variance": variance, "mse": variance + (mean - truth) ** 2,
            "mc_se": math.sqrt(variance / x.size)}


@dataclass
class SummaryTable:
    table: int
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def cell(self, estimand: str, estimator: str = SPEARMAN, **where) -> dict:
        """The unique row matching ``estimand``, ``estimator`` and ``where``."""
        hits = [r for r in self.rows
                if r["estimand"] == estimand and r["estimator"] == estimator
                and all(r[k] == v for k, v in where.items())]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {estimand}/{estimator}/{where}")
        return hits[0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        write_csv(buf, self.rows, SUMMARY_COLUMNS, self.metadata)
        return buf.getvalue()


@dataclass(frozen=True)
class _Cell:
    index: int
    family: str
    n: int
    alpha: float
    beta: float
    gamma: float
    estimators: tuple

    def path(self) -> CorrelationPath:
        if self.family == "constant":
            return CorrelationPath.constant(self.alpha)
        if self.family == "linear":
            return CorrelationPath.linear(self.alpha, self.beta)
        return CorrelationPath.power(self.alpha, self.beta, self.gamma)


_DEFAULTS = {
    1: {"family": "constant", "n": (300, 1000, 3000), "alpha": (1.0, 10.0), "beta": (0.0,),
        "gamma": (1.0,), "estimators": (SPEARMAN, PEARSON)},
    2: {"family": "linear", "n": (300, 1000, 3000), "alpha": (1.0,), "beta": (1.0, 0.0),
        "gamma": (1.0,), "estimators": (SPEARMAN, PEARSON)},
    3: {"family": "power", "n": (3000,), "alpha": (1.0,), "beta": (1.0,),
        "gamma": (0.5, 1.0), "estimators": (SPEARMAN,)},
}


def _estimands(family, alpha, beta, gamma):
    if family == "constant":
        return {"alpha": alpha}
    if family == "linear":
        return {"alpha": alpha, "beta": beta, "alpha+beta/2": alpha + beta / 2,
                "alpha/2+beta/3": alpha / 2 + beta / 3}
    return {"alpha": alpha, "beta": beta, "gamma": gamma}


def _estimate(family, a, b, g):
    return [float(v) for v in _estimands(family, a, b, g).values()]


def _fit(sample, family, estimator):
    if family == "constant":
        return fit_constant(sample, estimator)
    if family == "linear":
        return fit_linear(sample, estimator)
    return fit_power(sample, estimator)


def _run_replication(task):
    """One replication of one cell: estimates per estimator, ``None`` on failure."""
    cell, seed, r = task
    schedule = build_schedule(cell.path(), cell.n)
    sample = sample_array(schedule, RngStream(seed, cell.index).substream(r))
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IdentifiabilityWarning)
        for estimator in cell.estimators:
            try:
                fit = _fit(sample, cell.family, estimator)
            except DynCopulaError:
                out.append(None)
                continue
            out.append(_estimate(cell.family, fit.alpha, fit.beta, fit.gamma) if fit.converged else None)
    return out


def _cells(table_id, overrides):
    spec = dict(_DEFAULTS[table_id])
    for key in ("n", "alpha", "beta", "gamma", "estimators"):
        if overrides.get(key) is not None:
            value = overrides[key]
            spec[key] = tuple(value) if isinstance(value, (list, tuple)) else (value,)
    cells = []
    # cell order mirrors the printed tables: n outermost, then the varying parameter
    for n in spec["n"]:
        for alpha in spec["alpha"]:
            for beta in spec["beta"]:
                for gamma in spec["gamma"]:
                    cells.append(_Cell(len(cells), spec["family"], int(n), float(alpha), float(beta),
                                       float(gamma), tuple(spec["estimators"])))
    return cells


def replicate_table(table_id: int, reps: int = 1000, seed: int = 0, jobs: int = 1,
                    **overrides) -> SummaryTable:
    """Monte-Carlo replication of simulation table 1, 2 or 3.

    Parameters
    ----------
    table_id
        1 (constant drift), 2 (linear drift) or 3 (power drift, Spearman only).
    reps
        Replications per cell.
    seed
        Master seed; cell ``c`` replication ``r`` uses
        ``RngStream(seed, c).substream(r)``.
    jobs
        Worker processes. Output is identical for every value.
    **overrides
        Replace the default grid: ``n``, ``alpha``, ``beta``, ``gamma`` (scalars
        or sequences) and ``estimators``.

    Replications whose fit raises or does not converge are excluded from the
    moments and counted in the ``failures`` column.
    """
    if table_id not in TABLE_IDS:
        raise ConfigError(f"table id must be one of {TABLE_IDS}, got {table_id!r}")
    if reps < 1:
        raise ConfigError(f"reps must be >= 1, got {reps}")
    if jobs < 1:
        raise ConfigError(f"jobs must be >= 1, got {jobs}")
    unknown = set(overrides) - {"n", "alpha", "beta", "gamma", "estimators"}
    if unknown:
        raise ConfigError(f"unknown table overrides: {sorted(unknown)}")
    cells = _cells(table_id, overrides)
    for cell in cells:
        if cell.n < 10:
            raise ConfigError(f"n must be >= 10 for table replication, got {cell.n}")
        build_schedule(cell.path(), cell.n)  # validate the path before spending time

    tasks = [(cell, seed, r) for cell in cells for r in range(reps)]
    if jobs == 1:
        results = [_run_replication(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_replication, tasks, chunksize=max(1, len(tasks) // (8 * jobs))))

    table = SummaryTable(table_id, metadata={"table": table_id, "reps": reps, "seed": seed})
    for c, cell in enumerate(cells):
        block = results[c * reps:(c + 1) * reps]
        truths = _estimands(cell.family, cell.alpha, cell.beta, cell.gamma)
        for e, estimator in enumerate(cell.estimators):
            good = [res[e] for res in block if res[e] is not None]
            est = np.array(good, dtype=float).reshape(len(good), len(truths))
            for k, (name, truth) in enumerate(truths.items()):
                row = {"table": table_id, "cell": cell.index, "n": cell.n, "alpha": cell.alpha,
                       "beta": cell.beta, "gamma": cell.gamma, "estimator": estimator,
                       "estimand": name, "truth": float(truth), "reps": reps,
                       "used": len(good), "failures": reps - len(good)}
                row.update(summarize(est[:, k], truth))
                table.rows.append(row)
    return table
