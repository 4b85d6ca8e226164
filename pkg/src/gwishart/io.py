"""File formats, datasets and run reports."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .linalg import chol_upper


class InputFileError(ValueError):
    """Raised for unreadable or malformed input files."""


@dataclass
class Dataset:
    rows: np.ndarray
    variable_names: list[str] | None = None

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def p(self) -> int:
        return self.rows.shape[1]


@dataclass
class ScatterResult:
    u: np.ndarray
    n: int
    centered: bool


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_dataset(path) -> Dataset:
    """Read a CSV of observations (one row each), with an optional header row.

    The first row is taken as a header when any of its fields is not a
    number. A header-only file gives a dataset with zero observations.
    """
    with open(path, newline="") as fh:
        records = [(i, r) for i, r in enumerate(csv.reader(fh), 1) if any(f.strip() for f in r)]
    if not records:
        raise InputFileError(f"{path}: empty file")
    names = None
    if not all(_is_number(f) for f in records[0][1]):
        names = [f.strip() for f in records[0][1]]
        records = records[1:]
    width = len(names) if names is not None else len(records[0][1])
    rows = []
    for lineno, rec in records:
        if len(rec) != width:
            raise InputFileError(f"{path}:{lineno}: expected {width} fields, found {len(rec)}")
        try:
            rows.append([float(f) for f in rec])
        except ValueError:
            raise InputFileError(f"{path}:{lineno}: non-numeric field in {rec}") from None
    data = np.array(rows, dtype=float).reshape(len(rows), width)
    if not np.isfinite(data).all():
        raise InputFileError(f"{path}: missing or non-finite values")
    return Dataset(data, names)


def iris_virginica() -> Dataset:
    """Fisher's Iris virginica measurements (50 plants, cm): SL, SW, PL, PW."""
    ref = resources.files("gwishart") / "data" / "iris_virginica.csv"
    with resources.as_file(ref) as path:
        return load_dataset(path)


def compute_scatter(d: Dataset, center: bool = True) -> ScatterResult:
    z = d.rows
    if center and d.n > 0:
        z = z - z.mean(axis=0)
    return ScatterResult(z.T @ z, d.n, center)


def generate_dataset(k_true, n: int, rng: np.random.Generator) -> Dataset:
    """`n` independent rows from ``N(0, inv(k_true))``."""
    phi = chol_upper(k_true)
    e = rng.standard_normal((k_true.shape[0], n))
    # cov(phi^{-1} e) = inv(phi' phi)
    return Dataset(np.linalg.solve(phi, e).T)


def read_matrix(path) -> np.ndarray:
    """Square matrix from a headerless comma-separated file."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if any(f.strip() for f in r)]
    if not rows:
        raise InputFileError(f"{path}: empty matrix file")
    try:
        m = np.array([[float(f) for f in r] for r in rows])
    except ValueError:
        raise InputFileError(f"{path}: non-numeric entry or ragged rows") from None
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InputFileError(f"{path}: expected a square matrix, got shape {m.shape}")
    return m


def write_matrix(m, path) -> None:
    np.savetxt(path, np.asarray(m, dtype=float), delimiter=",", fmt="%.17g")


def upper_triangle_rows(ks: np.ndarray) -> np.ndarray:
    """Row-major upper triangles (diagonal included) of a stack of matrices."""
    i, j = np.triu_indices(ks.shape[-1])
    return ks[..., i, j]


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


@dataclass
class RunReport:
    """What a CLI run was asked to do and what it produced."""

    command: str
    inputs: dict[str, Any]
    outputs: dict[str, Any]
    timing: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return _jsonable(
            {"command": self.command, "inputs": self.inputs, "outputs": self.outputs, "timing": self.timing}
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def write(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        d = json.loads(text)
        return cls(d["command"], d["inputs"], d["outputs"], d.get("timing", {}))
