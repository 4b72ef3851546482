"""Dataset model, CSV ingestion, outcome scaling and fold assignment."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Optional

import numpy as np

ROLES = ("covariate", "exposure", "mediator", "outcome", "phase_two", "sampling_prob")
EPS_R = 1e-8


class DataValidationError(ValueError):
    """Raised when input data violate the dataset contract."""


@dataclass(frozen=True)
class ScalingInfo:
    y_min: float = 0.0
    y_max: float = 1.0
    binary: bool = True

    def __post_init__(self):
        if not self.y_max > self.y_min:
            raise DataValidationError("scaling needs y_max > y_min")

    @property
    def width(self) -> float:
        return self.y_max - self.y_min

    @property
    def is_identity(self) -> bool:
        return self.y_min == 0.0 and self.y_max == 1.0

    def to_unit(self, y):
        return (np.asarray(y, dtype=float) - self.y_min) / self.width

    def from_unit(self, y):
        return self.y_min + self.width * np.asarray(y, dtype=float)


@dataclass(frozen=True)
class ObservedRecord:
    """One study unit ``(W, A, R, R*Z, Y)`` with its known sampling probability.

    ``z`` is ``None`` when the mediator was not measured (``r == 0``).
    """

    w: tuple
    a: int
    r: int
    z: Optional[tuple]
    y: float
    sampling_prob: float = 1.0


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column-oriented, read-only collection of observed records.

    ``y`` holds the outcome mapped to the unit interval via ``scaling``;
    ``z`` holds NaN on rows with ``r == 0`` and must never be read there.
    """

    w: np.ndarray
    a: np.ndarray
    z: np.ndarray
    y: np.ndarray
    r: np.ndarray
    g_r: np.ndarray
    scaling: ScalingInfo = ScalingInfo()
    column_roles: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("w", "a", "z", "y", "r", "g_r"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    @classmethod
    def from_arrays(
        cls,
        w,
        a,
        z,
        y,
        r=None,
        sampling_prob=None,
        scaling: Optional[ScalingInfo] = None,
        column_roles: Optional[Mapping[str, str]] = None,
    ) -> "Dataset":
        """Validate raw arrays and build a dataset.

        ``y`` is on its original scale. A binary 0/1 outcome keeps identity
        scaling; a continuous outcome is mapped to [0, 1] with its sample
        range unless ``scaling`` is supplied. Without ``r`` every mediator is
        treated as measured and sampling probabilities are one.
        """
        w = np.array(w, dtype=float)
        if w.ndim == 1:
            w = w[:, None]
        n = w.shape[0]
        a = np.asarray(a, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        z = np.array(z, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        if n < 1:
            raise DataValidationError("dataset is empty")
        if a.shape[0] != n or y.shape[0] != n or z.shape[0] != n:
            raise DataValidationError("all columns must have the same number of rows")
        if not np.all(np.isin(a, (0.0, 1.0))):
            raise DataValidationError("exposure must be coded 0/1")
        if not (np.any(a == 1) and np.any(a == 0)):
            raise DataValidationError("both exposure arms must be present")
        if not np.all(np.isfinite(w)) or not np.all(np.isfinite(y)):
            raise DataValidationError("covariates and outcome must be finite")

        if r is None:
            r = np.ones(n)
        r = np.asarray(r, dtype=float).ravel()
        if r.shape[0] != n or not np.all(np.isin(r, (0.0, 1.0))):
            raise DataValidationError("phase-two indicator must be 0/1 with one entry per row")
        if sampling_prob is None:
            if np.any(r == 0):
                raise DataValidationError("two-phase data need known sampling probabilities")
            sampling_prob = np.ones(n)
        g_r = np.asarray(sampling_prob, dtype=float).ravel()
        if g_r.shape[0] != n or np.any(~np.isfinite(g_r)) or np.any(g_r < EPS_R) or np.any(g_r > 1):
            raise DataValidationError("sampling probabilities must lie in (0, 1]")

        measured = r == 1
        if np.any(~np.isfinite(z[measured])):
            raise DataValidationError("mediator missing on a phase-two (r=1) row")
        z = z.copy()
        z[~measured] = np.nan

        binary = bool(np.all(np.isin(y, (0.0, 1.0))))
        if scaling is None:
            if binary:
                scaling = ScalingInfo(0.0, 1.0, True)
            else:
                lo, hi = float(y.min()), float(y.max())
                if not hi > lo:
                    raise DataValidationError("continuous outcome is constant")
                scaling = ScalingInfo(lo, hi, False)
        y_unit = scaling.to_unit(y)
        if np.any(y_unit < -1e-12) or np.any(y_unit > 1 + 1e-12):
            raise DataValidationError("outcome falls outside the scaling range")
        y_unit = np.clip(y_unit, 0.0, 1.0)
        return cls(w, a.astype(int), z, y_unit, r.astype(int), g_r, scaling,
                   dict(column_roles or {}))

    @property
    def n(self) -> int:
        return self.w.shape[0]

    @property
    def binary_outcome(self) -> bool:
        return self.scaling.binary

    @property
    def two_phase(self) -> bool:
        return bool(np.any(self.r == 0) or np.any(self.g_r < 1.0))

    @property
    def y_raw(self) -> np.ndarray:
        return self.scaling.from_unit(self.y)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.w[idx].copy(), self.a[idx].copy(), self.z[idx].copy(),
                       self.y[idx].copy(), self.r[idx].copy(), self.g_r[idx].copy(),
                       self.scaling, self.column_roles)

    def records(self) -> Iterator[ObservedRecord]:
        y_raw = self.y_raw
        for i in range(self.n):
            z = tuple(self.z[i]) if self.r[i] == 1 else None
            yield ObservedRecord(tuple(self.w[i]), int(self.a[i]), int(self.r[i]), z,
                                 float(y_raw[i]), float(self.g_r[i]))

    @classmethod
    def from_records(cls, records, scaling: Optional[ScalingInfo] = None) -> "Dataset":
        records = list(records)
        if not records:
            raise DataValidationError("no records")
        q = next((len(rec.z) for rec in records if rec.z is not None), 1)
        z = [rec.z if rec.z is not None else (np.nan,) * q for rec in records]
        return cls.from_arrays(
            [rec.w for rec in records], [rec.a for rec in records], z,
            [rec.y for rec in records], r=[rec.r for rec in records],
            sampling_prob=[rec.sampling_prob for rec in records], scaling=scaling)


def _parse_float(text: str, column: str, line: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise DataValidationError(f"line {line}: column {column!r} is not numeric: {text!r}") from None


def load_csv(path, column_roles: Mapping[str, str]) -> Dataset:
    """Read a headered CSV whose columns are assigned roles.

    ``column_roles`` maps column name to one of :data:`ROLES`. Exactly one
    exposure and one outcome column are required, at least one mediator;
    covariates are optional. Mediator cells may be blank only where the
    phase-two column is 0.
    """
    path = Path(path)
    by_role = {role: [] for role in ROLES}
    for col, role in column_roles.items():
        if role not in by_role:
            raise ValueError(f"unknown role {role!r} for column {col!r}")
        by_role[role].append(col)
    for role in ("exposure", "outcome"):
        if len(by_role[role]) != 1:
            raise ValueError(f"exactly one {role} column required")
    for role in ("phase_two", "sampling_prob"):
        if len(by_role[role]) > 1:
            raise ValueError(f"at most one {role} column allowed")
    if not by_role["mediator"]:
        raise ValueError("at least one mediator column required")

    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if not header:
            raise DataValidationError("empty file")
        missing = [c for c in column_roles if c not in header]
        if missing:
            raise ValueError(f"columns not in file: {missing}")
        rows = list(reader)
    if not rows:
        raise DataValidationError("file has a header but no rows")

    n = len(rows)
    cov, med = by_role["covariate"], by_role["mediator"]
    w = np.zeros((n, len(cov)))
    z = np.full((n, len(med)), np.nan)
    a = np.zeros(n)
    y = np.zeros(n)
    r = np.ones(n)
    g = np.ones(n)
    exp_col, out_col = by_role["exposure"][0], by_role["outcome"][0]
    r_col = by_role["phase_two"][0] if by_role["phase_two"] else None
    g_col = by_role["sampling_prob"][0] if by_role["sampling_prob"] else None
    for i, row in enumerate(rows):
        line = i + 2
        for j, c in enumerate(cov):
            w[i, j] = _parse_float(row[c], c, line)
        a[i] = _parse_float(row[exp_col], exp_col, line)
        if a[i] not in (0.0, 1.0):
            raise DataValidationError(f"line {line}: exposure must be 0 or 1")
        y[i] = _parse_float(row[out_col], out_col, line)
        if r_col is not None:
            r[i] = _parse_float(row[r_col], r_col, line)
        if g_col is not None:
            g[i] = _parse_float(row[g_col], g_col, line)
        for j, c in enumerate(med):
            cell = (row[c] or "").strip()
            if cell == "":
                if r[i] == 1:
                    raise DataValidationError(f"line {line}: mediator {c!r} blank on a phase-two row")
            elif r[i] == 1:
                z[i, j] = _parse_float(cell, c, line)
    if r_col is not None and g_col is None and np.any(r == 0):
        raise DataValidationError("phase_two column given without sampling_prob column")
    return Dataset.from_arrays(w, a, z, y, r=r, sampling_prob=g, column_roles=column_roles)


def write_csv(dataset: Dataset, path) -> dict:
    """Write a dataset (outcome on its original scale) and return its column roles.

    Columns are ``w1.., a, z1.., y, r, sampling_prob``; unmeasured mediators
    are written as empty fields.
    """
    names_w = [f"w{j + 1}" for j in range(dataset.w.shape[1])]
    names_z = [f"z{j + 1}" for j in range(dataset.z.shape[1])]
    header = names_w + ["a"] + names_z + ["y", "r", "sampling_prob"]
    y = dataset.y_raw
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(header)
        for i in range(dataset.n):
            z = ["" if dataset.r[i] == 0 else repr(float(v)) for v in dataset.z[i]]
            writer.writerow([repr(float(v)) for v in dataset.w[i]] + [int(dataset.a[i])] + z
                            + [repr(float(y[i])), int(dataset.r[i]), repr(float(dataset.g_r[i]))])
    roles = {c: "covariate" for c in names_w}
    roles.update({"a": "exposure", "y": "outcome", "r": "phase_two", "sampling_prob": "sampling_prob"})
    roles.update({c: "mediator" for c in names_z})
    return roles


def rescale_estimate(psi_scaled, scaling: ScalingInfo, estimand: str = "nde"):
    """Map an estimate (or standard error) from the unit scale back to the outcome scale.

    Additive contrasts scale by the outcome range; risk ratios are only
    defined for binary outcomes and pass through unchanged.
    """
    if estimand in ("rr", "rr_nde"):
        if not scaling.binary:
            raise DataValidationError("risk-ratio estimands need a binary outcome")
        return psi_scaled
    if estimand in ("nde", "difference"):
        out = np.asarray(psi_scaled, dtype=float) * scaling.width
        return out if out.ndim else float(out)
    raise ValueError(f"unknown estimand {estimand!r}")


@dataclass(frozen=True)
class FoldAssignment:
    """Fold labels in ``0..k-1``, one per record."""

    k: int
    labels: np.ndarray
    seed: int
    stratified_on: str = "exposure_outcome"
    warning: Optional[str] = None

    def indices(self, fold: int):
        """(training, validation) row indices for ``fold``."""
        return np.flatnonzero(self.labels != fold), np.flatnonzero(self.labels == fold)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)


def make_folds(dataset: Dataset, k: int = 5, seed: int = 0, stratify: bool = True) -> FoldAssignment:
    """Stratified K-fold labels, dealt round-robin across strata.

    Strata are exposure x outcome for binary outcomes, exposure otherwise.
    If any joint stratum has fewer than ``k`` rows the assignment falls back
    to exposure-only strata and records a warning.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > dataset.n:
        raise ValueError("more folds than records")
    rng = np.random.default_rng(seed)
    a = dataset.a
    note = None
    by = "exposure"
    keys = a.copy()
    if stratify and dataset.binary_outcome:
        joint = a * 2 + dataset.y.astype(int)
        counts = np.bincount(joint, minlength=4)
        if np.all((counts == 0) | (counts >= k)):
            keys, by = joint, "exposure_outcome"
        else:
            note = "exposure-outcome stratum smaller than k; stratified on exposure only"
            warnings.warn(note, RuntimeWarning, stacklevel=2)
    elif not stratify:
        keys = np.zeros_like(a)
        by = "none"
    labels = np.empty(dataset.n, dtype=int)
    offset = 0
    for key in np.unique(keys):
        idx = np.flatnonzero(keys == key)
        idx = idx[rng.permutation(idx.size)]
        labels[idx] = (offset + np.arange(idx.size)) % k
        offset = (offset + idx.size) % k
    return FoldAssignment(k, labels, seed, by, note)
