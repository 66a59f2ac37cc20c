"""
File ingestion and result writers.

Text formats:
  COO tensor       header `I1 I2 I3`, then `i j k value` per line (1-based)
  aggregation      header `J I`, then `coarse_index fine_index` per line
  config           flat `key = value`
Lines starting with `#` and blank lines are ignored in all three. Dense
tensors (coarse tensors, ground truth) use the COO format with absent
coordinates read as zero. Reports are CSV; factors are `.npz` archives.
"""

from __future__ import annotations

import csv
import logging
import math
from pathlib import Path
from typing import Iterator

import numpy as np

from mtc_tensor.config import ExperimentConfig, SolverConfig
from mtc_tensor.kruskal import FactorSet
from mtc_tensor.models import RunSummary, SolveRecord, SolveReport
from mtc_tensor.problem import AggregationMatrix
from mtc_tensor.tensor_core import CooObservations, as_tensor3

logger = logging.getLogger(__name__)

REPORT_HEADER = (
    "level", "iteration", "lambda", "observed_loss", "coarse_loss",
    "pof", "jacobi_radius", "seconds",
)
SUMMARY_HEADER = ("model", "pof", "iterations", "seconds")


class ParseError(ValueError):
    def __init__(self, path: Path | str, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = Path(path)
        self.line = line


def _content_lines(path: Path) -> Iterator[tuple[int, str]]:
    with path.open("r", encoding="utf-8") as f:
        for number, raw in enumerate(f, start=1):
            line = raw.strip()
            if line and not line.startswith("#"):
                yield number, line


def _header(
    path: Path, lines: Iterator[tuple[int, str]], names: tuple[str, ...]
) -> tuple[int, list[int]]:
    try:
        number, line = next(lines)
    except StopIteration:
        raise ParseError(path, 0, f"missing header `{' '.join(names)}`") from None
    fields = line.split()
    try:
        sizes = [int(x) for x in fields]
    except ValueError:
        sizes = []
    if len(sizes) != len(names) or any(s < 1 for s in sizes):
        expected = " ".join(names)
        message = f"expected header `{expected}` of positive integers, got {line!r}"
        raise ParseError(path, number, message)
    return number, sizes


# ── COO tensors ────────────────────────────────────────────────────────

def parse_coo_file(path: Path | str) -> CooObservations:
    path = Path(path)
    lines = _content_lines(path)
    _, dims = _header(path, lines, ("I1", "I2", "I3"))
    shape = (dims[0], dims[1], dims[2])

    entries: list[tuple[int, int, int, float]] = []
    seen: dict[tuple[int, int, int], int] = {}
    for number, line in lines:
        fields = line.split()
        if len(fields) != 4:
            raise ParseError(path, number, f"expected `i j k value`, got {line!r}")
        try:
            coord = (int(fields[0]), int(fields[1]), int(fields[2]))
            value = float(fields[3])
        except ValueError:
            raise ParseError(path, number, f"malformed entry {line!r}") from None
        if not math.isfinite(value):
            raise ParseError(path, number, f"value {fields[3]} is not finite")
        for axis, (idx, size) in enumerate(zip(coord, shape), start=1):
            if not 1 <= idx <= size:
                raise ParseError(path, number, f"index {idx} out of range 1..{size} on mode {axis}")
        if coord in seen:
            first = seen[coord]
            raise ParseError(path, number, f"duplicate coordinate {coord} (first on line {first})")
        seen[coord] = number
        entries.append((*coord, value))

    logger.debug("Parsed %d entries of a %s tensor from %s", len(entries), shape, path)
    return CooObservations.from_entries(shape, entries)


def write_coo_file(path: Path | str, obs: CooObservations) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        f.write(" ".join(str(s) for s in obs.shape) + "\n")
        for i, j, k, v in obs.entries():
            f.write(f"{i} {j} {k} {float(v)!r}\n")


def parse_tensor_file(path: Path | str) -> np.ndarray:
    """Dense tensor from a COO file; missing coordinates are zero."""
    return parse_coo_file(path).to_dense()


def write_tensor_file(path: Path | str, x: np.ndarray) -> None:
    x = as_tensor3(x)
    write_coo_file(path, CooObservations.from_dense(x, mask=x != 0))


# ── Aggregation matrices ───────────────────────────────────────────────

def parse_aggregation_file(path: Path | str) -> AggregationMatrix:
    path = Path(path)
    lines = _content_lines(path)
    header_line, (coarse_size, fine_size) = _header(path, lines, ("J", "I"))
    if coarse_size >= fine_size:
        message = f"coarse size {coarse_size} must be smaller than fine size {fine_size}"
        raise ParseError(path, header_line, message)

    owner: dict[int, int] = {}
    pairs: list[tuple[int, int]] = []
    last = header_line
    for number, line in lines:
        last = number
        fields = line.split()
        try:
            coarse, fine = (int(x) for x in fields)
        except ValueError:
            message = f"expected `coarse_index fine_index`, got {line!r}"
            raise ParseError(path, number, message) from None
        if not 1 <= coarse <= coarse_size:
            raise ParseError(path, number, f"coarse index {coarse} out of range 1..{coarse_size}")
        if not 1 <= fine <= fine_size:
            raise ParseError(path, number, f"fine index {fine} out of range 1..{fine_size}")
        if fine in owner:
            first = owner[fine]
            raise ParseError(path, number, f"fine index {fine} repeated (first on line {first})")
        owner[fine] = number
        pairs.append((coarse, fine))

    missing = [i for i in range(1, fine_size + 1) if i not in owner]
    if missing:
        raise ParseError(path, last, f"fine index {missing[0]} unassigned")
    agg = AggregationMatrix.from_pairs(coarse_size, fine_size, pairs)
    problems = agg.problems()
    if problems:
        raise ParseError(path, last, problems[0])
    return agg


def write_aggregation_file(path: Path | str, agg: AggregationMatrix) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        f.write(f"{agg.coarse_size} {agg.fine_size}\n")
        for fine, coarse in enumerate(agg.assignment.tolist(), start=1):
            f.write(f"{coarse + 1} {fine}\n")


# ── Reports ────────────────────────────────────────────────────────────

def _cell(value: float | int | None) -> str:
    if value is None:
        return ""
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def _optional(cell: str) -> float | None:
    return float(cell) if cell else None


def write_report_csv(path: Path | str, report: SolveReport) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(REPORT_HEADER)
        for r in report.records:
            writer.writerow([
                _cell(r.level), _cell(r.iteration), _cell(r.lam), _cell(r.observed_loss),
                _cell(r.coarse_loss), _cell(r.pof), _cell(r.jacobi_radius), _cell(r.seconds),
            ])


def read_report_csv(path: Path | str, model: str = "mtc") -> SolveReport:
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header) != REPORT_HEADER:
            raise ParseError(path, 1, f"expected header {','.join(REPORT_HEADER)}")
        records = []
        for number, row in enumerate(reader, start=2):
            if len(row) != len(REPORT_HEADER):
                message = f"expected {len(REPORT_HEADER)} columns, got {len(row)}"
                raise ParseError(path, number, message)
            try:
                records.append(SolveRecord(
                    level=int(row[0]),
                    iteration=int(row[1]),
                    lam=float(row[2]),
                    observed_loss=float(row[3]),
                    coarse_loss=float(row[4]),
                    pof=_optional(row[5]),
                    jacobi_radius=_optional(row[6]),
                    seconds=float(row[7]),
                ))
            except ValueError as e:
                raise ParseError(path, number, str(e)) from None
    return SolveReport(model=model, records=records)


def write_summary_csv(path: Path | str, summaries: list[RunSummary]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(SUMMARY_HEADER)
        for s in summaries:
            writer.writerow([s.model, _cell(s.pof), _cell(s.iterations), _cell(s.seconds)])


def write_matrix_csv(path: Path | str, m: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        for row in np.asarray(m, dtype=np.float64).tolist():
            writer.writerow([repr(v) for v in row])


# ── Factors ────────────────────────────────────────────────────────────

def save_factors(path: Path | str, fs: FactorSet) -> Path:
    path = Path(path)
    if path.suffix != ".npz":
        path = path.with_suffix(".npz")
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {"U": fs.u, "V": fs.v, "W": fs.w}
    arrays.update({f"Q{m}": q for m, q in sorted(fs.aux.items())})
    np.savez(path, **arrays)
    return path


def load_factors(path: Path | str) -> FactorSet:
    path = Path(path)
    with np.load(path) as data:
        missing = [name for name in ("U", "V", "W") if name not in data.files]
        if missing:
            raise ParseError(path, 0, f"factor archive lacks {', '.join(missing)}")
        aux = {m: np.array(data[f"Q{m}"]) for m in (1, 2, 3) if f"Q{m}" in data.files}
        u, v, w = (np.array(data[name]) for name in ("U", "V", "W"))
        return FactorSet(u=u, v=v, w=w, aux=aux)


# ── Experiment config ──────────────────────────────────────────────────

_LIST_KEYS = {"coarse_modes", "known_modes", "baselines", "kinds"}
_PATH_KEYS = {"observations", "ground_truth", "factors", "future"}
_MODE_KEYS = {"coarse", "aggregation", "weight"}


def parse_config_file(path: Path | str, seed: int | None = None) -> ExperimentConfig:
    """
    Read a flat `key = value` file into an ExperimentConfig.

    SolverConfig fields (except `seed`) may appear at top level. Per-mode
    inputs use a suffix: `coarse_1`, `aggregation_2`, `weight_1`. Relative
    input paths are resolved against the config file's directory. `seed`
    overrides the file's value.
    """
    path = Path(path)
    base = path.parent
    solver_keys = set(SolverConfig.model_fields) - {"seed"}
    top: dict[str, object] = {}
    solver: dict[str, str] = {}
    per_mode: dict[str, dict[int, object]] = {"coarse": {}, "aggregation": {}, "weights": {}}
    seen: dict[str, int] = {}

    for number, line in _content_lines(path):
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ParseError(path, number, f"expected `key = value`, got {line!r}")
        if key in seen:
            raise ParseError(path, number, f"key {key!r} repeated (first on line {seen[key]})")
        seen[key] = number

        prefix, _, suffix = key.rpartition("_")
        if prefix in _MODE_KEYS and suffix.isdigit():
            target = "weights" if prefix == "weight" else prefix
            per_mode[target][int(suffix)] = float(value) if prefix == "weight" else base / value
        elif key in solver_keys:
            solver[key] = value
        elif key in _LIST_KEYS:
            top[key] = [v.strip() for v in value.split(",") if v.strip()]
        elif key in _PATH_KEYS:
            top[key] = base / value
        else:
            top[key] = value

    top.update({k: v for k, v in per_mode.items() if v})
    top["solver"] = SolverConfig.model_validate(solver)
    if seed is not None:
        top["seed"] = seed
    return ExperimentConfig.model_validate(top)
