"""Parameter schemas, CSV ingestion, standard-normal scaling, engineered features and splits."""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

PLAUSIBILITY = ("positive", "nonnegative", "negative", "unit-interval", "unconstrained")
FEATURE_KINDS = ("ratio", "difference", "product")
SPLIT_GROUPS = ("train", "validation", "test")

# Smallest magnitude a ratio denominator is allowed to take.
RATIO_EPS = 1e-9


class SchemaError(ValueError):
    pass


class ParseError(ValueError):
    pass


@dataclass(frozen=True)
class ParameterSpec:
    name: str
    unit: str
    lower: float
    upper: float
    plausibility: str = "unconstrained"

    def __post_init__(self):
        if not self.name.isidentifier():
            raise SchemaError(f"parameter name {self.name!r} is not an identifier")
        if not self.lower < self.upper:
            raise SchemaError(f"{self.name}: lower ({self.lower}) must be < upper ({self.upper})")
        if self.plausibility not in PLAUSIBILITY:
            raise SchemaError(f"{self.name}: unknown plausibility {self.plausibility!r}")
        ok = {
            "positive": self.lower >= 0,
            "nonnegative": self.lower >= 0,
            "negative": self.upper <= 0,
            "unit-interval": self.lower >= 0 and self.upper <= 1,
            "unconstrained": True,
        }[self.plausibility]
        if not ok:
            raise SchemaError(
                f"{self.name}: bounds [{self.lower}, {self.upper}] contradict "
                f"plausibility {self.plausibility!r}"
            )

    def plausible(self, values):
        """Elementwise plausibility predicate (works on scalars and arrays)."""
        v = np.asarray(values, dtype=float)
        if self.plausibility == "positive":
            return v > 0
        if self.plausibility == "nonnegative":
            return v >= 0
        if self.plausibility == "negative":
            return v < 0
        if self.plausibility == "unit-interval":
            return (v > 0) & (v < 1)
        return np.isfinite(v)


@dataclass(frozen=True)
class DerivedFeature:
    name: str
    kind: str
    operands: tuple[int, int]

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise SchemaError(f"derived feature {self.name}: unknown kind {self.kind!r}")
        if len(self.operands) != 2:
            raise SchemaError(f"derived feature {self.name}: needs exactly two operands")

    def compute(self, rows: np.ndarray) -> np.ndarray:
        a = rows[:, self.operands[0]]
        b = rows[:, self.operands[1]]
        if self.kind == "difference":
            return a - b
        if self.kind == "product":
            return a * b
        sign = np.where(b < 0, -1.0, 1.0)
        return a / (np.maximum(np.abs(b), RATIO_EPS) * sign)


@dataclass(frozen=True)
class ParameterSpace:
    specs: tuple[ParameterSpec, ...]
    derived: tuple[DerivedFeature, ...] = ()

    def __post_init__(self):
        names = [s.name for s in self.specs]
        if not names:
            raise SchemaError("parameter space has no parameters")
        all_names = names + [d.name for d in self.derived]
        dup = {n for n in all_names if all_names.count(n) > 1}
        if dup:
            raise SchemaError(f"duplicate names: {sorted(dup)}")
        for d in self.derived:
            for i in d.operands:
                if not 0 <= i < len(names):
                    raise SchemaError(f"derived feature {d.name}: operand index {i} out of range")

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.specs]

    @property
    def feature_names(self) -> list[str]:
        return self.names + [d.name for d in self.derived]

    @property
    def dim(self) -> int:
        return len(self.specs)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SchemaError(f"unknown parameter {name!r}") from None

    @property
    def bounds(self) -> np.ndarray:
        return np.array([[s.lower, s.upper] for s in self.specs])

    def to_dict(self) -> dict:
        return {
            "parameters": [
                {"name": s.name, "unit": s.unit, "lower": s.lower, "upper": s.upper,
                 "plausibility": s.plausibility}
                for s in self.specs
            ],
            "derived": [
                {"name": d.name, "kind": d.kind,
                 "operands": [self.specs[i].name for i in d.operands]}
                for d in self.derived
            ],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ParameterSpace":
        unknown = set(raw) - {"parameters", "derived"}
        if unknown:
            raise SchemaError(f"unknown key(s) in parameter space: {sorted(unknown)}")
        specs = []
        for entry in raw.get("parameters") or []:
            extra = set(entry) - {"name", "unit", "lower", "upper", "plausibility"}
            if extra:
                raise SchemaError(f"unknown key(s) in parameter entry: {sorted(extra)}")
            specs.append(ParameterSpec(
                name=str(entry["name"]), unit=str(entry.get("unit", "")),
                lower=float(entry["lower"]), upper=float(entry["upper"]),
                plausibility=str(entry.get("plausibility", "unconstrained")),
            ))
        names = [s.name for s in specs]
        derived = []
        for entry in raw.get("derived") or []:
            extra = set(entry) - {"name", "kind", "operands"}
            if extra:
                raise SchemaError(f"unknown key(s) in derived entry: {sorted(extra)}")
            ops = []
            for op in entry["operands"]:
                if isinstance(op, int):
                    ops.append(op)
                elif op in names:
                    ops.append(names.index(op))
                else:
                    raise SchemaError(f"derived feature {entry['name']}: unknown operand {op!r}")
            derived.append(DerivedFeature(str(entry["name"]), str(entry["kind"]), tuple(ops)))
        return cls(tuple(specs), tuple(derived))


def load_space(path) -> ParameterSpace:
    """Read a parameter-space definition (YAML) from ``path``."""
    with open(path, encoding="utf-8") as fh:
        return ParameterSpace.from_dict(yaml.safe_load(fh) or {})


@dataclass(frozen=True)
class ScalingStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if np.any(~(self.std > 0)):
            raise ValueError("scaling std must be strictly positive in every column")


@dataclass(frozen=True)
class Dataset:
    space: ParameterSpace
    rows: np.ndarray
    outcomes: np.ndarray
    scaling: ScalingStats | None = None
    split: np.ndarray | None = None
    task: str | None = None
    # True once derived-feature columns have been appended.
    featurized: bool = False

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2:
            raise SchemaError("rows must be a 2-D matrix")
        outcomes = np.asarray(self.outcomes, dtype=float)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "outcomes", outcomes)
        expected = len(self.space.feature_names) if self.featurized else self.space.dim
        if rows.shape[1] != expected:
            raise SchemaError(f"rows have {rows.shape[1]} columns, expected {expected}")
        if outcomes.shape != (rows.shape[0],):
            raise SchemaError("outcomes length must equal row count")
        if self.task == "binary" and not np.all((outcomes == 0) | (outcomes == 1)):
            raise SchemaError("binary task requires outcomes in {0, 1}")
        if self.split is not None:
            split = np.asarray(self.split, dtype=object)
            if split.shape != (rows.shape[0],):
                raise SchemaError("split tags must have one entry per row")
            object.__setattr__(self, "split", split)

    def __len__(self):
        return self.rows.shape[0]

    @property
    def columns(self) -> list[str]:
        return self.space.feature_names if self.featurized else self.space.names

    def subset(self, group: str) -> "Dataset":
        if self.split is None:
            raise ValueError("dataset has no split assignment")
        mask = self.split == group
        return replace(self, rows=self.rows[mask], outcomes=self.outcomes[mask],
                       split=self.split[mask])


def load_dataset(path, space: ParameterSpace, outcome_column: str, task: str | None = None) -> Dataset:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        for name in space.names + [outcome_column]:
            if name not in header:
                raise SchemaError(f"{path}: missing column {name!r}")
        idx = [header.index(n) for n in space.names]
        out_idx = header.index(outcome_column)
        rows, outcomes = [], []
        for lineno, record in enumerate(reader, start=2):
            if not record:
                continue
            try:
                rows.append([float(record[i]) for i in idx])
            except (ValueError, IndexError):
                bad = next(i for i in idx if i >= len(record) or not _is_float(record[i]))
                raise ParseError(f"{path}: row {lineno}, column {header[bad]!r}: not a number") from None
            if out_idx >= len(record) or not _is_float(record[out_idx]):
                raise ParseError(f"{path}: row {lineno}, column {outcome_column!r}: not a number")
            outcomes.append(float(record[out_idx]))
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return Dataset(space, np.array(rows), np.array(outcomes), task=task)


def _is_float(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def fit_scaling(ds: Dataset) -> ScalingStats:
    if len(ds) < 2:
        raise ValueError("scaling needs at least two rows")
    mean = ds.rows.mean(axis=0)
    std = ds.rows.std(axis=0)
    for k, s in enumerate(std):
        if not s > 0:
            raise ValueError(f"column {ds.columns[k]!r} is constant")
    return ScalingStats(mean, std)


def standardize(x, stats: ScalingStats) -> np.ndarray:
    return (np.asarray(x, dtype=float) - stats.mean) / stats.std


def destandardize(z, stats: ScalingStats) -> np.ndarray:
    return np.asarray(z, dtype=float) * stats.std + stats.mean


def apply_scaling(ds: Dataset, stats: ScalingStats, direction: str = "standardize") -> Dataset:
    if stats.mean.shape != (ds.rows.shape[1],):
        raise ValueError(
            f"scaling has {stats.mean.shape[0]} columns, dataset has {ds.rows.shape[1]}"
        )
    if direction == "standardize":
        rows = standardize(ds.rows, stats)
    elif direction == "destandardize":
        rows = destandardize(ds.rows, stats)
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return replace(ds, rows=rows, scaling=stats)


def derive_matrix(space: ParameterSpace, rows) -> np.ndarray:
    """Raw parameter rows -> feature matrix with derived columns appended."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.shape[1] != space.dim:
        raise SchemaError(f"expected {space.dim} parameter columns, got {rows.shape[1]}")
    if not space.derived:
        return rows.copy()
    extra = np.column_stack([d.compute(rows) for d in space.derived])
    return np.hstack([rows, extra])


def derive_features(ds: Dataset) -> Dataset:
    if ds.featurized:
        raise ValueError("dataset already carries derived features")
    return replace(ds, rows=derive_matrix(ds.space, ds.rows), featurized=True)


def split_counts(n: int, fractions: dict) -> dict:
    fr = {g: float(fractions.get(g, 0.0)) for g in SPLIT_GROUPS}
    extra = set(fractions) - set(SPLIT_GROUPS)
    if extra:
        raise ValueError(f"unknown split group(s): {sorted(extra)}")
    if any(f < 0 for f in fr.values()) or abs(sum(fr.values()) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must be nonnegative and sum to 1, got {fr}")
    nonzero = sum(1 for f in fr.values() if f > 0)
    if n < nonzero:
        raise ValueError(f"{n} rows cannot fill {nonzero} nonempty split groups")
    # 1e-9 guards against fractions like 5/35 landing just under an integer.
    counts = {g: int(math.floor(fr[g] * n + 1e-9)) for g in ("validation", "test")}
    counts["train"] = n - counts["validation"] - counts["test"]
    return counts


def split_dataset(ds: Dataset, fractions: dict, seed: int) -> Dataset:
    n = len(ds)
    counts = split_counts(n, fractions)
    order = np.random.default_rng(seed).permutation(n)
    tags = np.empty(n, dtype=object)
    start = 0
    for group in SPLIT_GROUPS:
        tags[order[start:start + counts[group]]] = group
        start += counts[group]
    return replace(ds, split=tags)


_MODEL_NAME = re.compile(r"^(\d+)_(\d+)_(\d+)_(\d+)_d(\d+)_r(\d+)$")


def parse_material_model_name(name: str) -> tuple[list[int], int, int]:
    """Decode names like ``6_2_9_1_d7_r10`` into (layer thicknesses, depth, radius), all nm."""
    m = _MODEL_NAME.match(name.strip())
    if not m or any(int(g) <= 0 for g in m.groups()):
        raise ParseError(f"cannot parse material model name {name!r}")
    vals = [int(g) for g in m.groups()]
    return vals[:4], vals[4], vals[5]


def rows_to_dataset(space: ParameterSpace, rows: Sequence, outcomes: Sequence, task=None) -> Dataset:
    return Dataset(space, np.asarray(rows, dtype=float), np.asarray(outcomes, dtype=float), task=task)
