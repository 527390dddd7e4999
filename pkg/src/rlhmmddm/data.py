"""Observed-data containers and delimited-text file formats.

A dataset holds per-subject covariates plus ordered trial sequences of
(state, action, response time, reward). Trial files carry one row per
trial; covariate files one row per subject. Floats are written with
shortest round-trip representation so write -> read -> write is
byte-identical.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rl import DataError


@dataclass(frozen=True)
class TrialRecord:
    """One trial: 1-based index j, binary state and action, response time
    in seconds (> 0), and nonnegative reward."""

    j: int
    s: int
    a: int
    t: float
    r: float


@dataclass
class SubjectData:
    """One subject's covariate vector and trial sequence as parallel arrays."""

    id: str
    covariates: np.ndarray
    s: np.ndarray
    a: np.ndarray
    t: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        self.covariates = np.atleast_1d(np.asarray(self.covariates, dtype=float))
        self.s = np.asarray(self.s, dtype=np.int64)
        self.a = np.asarray(self.a, dtype=np.int64)
        self.t = np.asarray(self.t, dtype=float)
        self.r = np.asarray(self.r, dtype=float)
        J = self.s.shape[0]
        if not (self.a.shape[0] == self.t.shape[0] == self.r.shape[0] == J):
            raise DataError(f"subject {self.id}: trial arrays have unequal lengths")
        if J == 0:
            raise DataError(f"subject {self.id}: no trials")
        if not np.all(np.isin(self.s, (0, 1))) or not np.all(np.isin(self.a, (0, 1))):
            raise DataError(f"subject {self.id}: states and actions must be 0/1")
        if not np.all(np.isfinite(self.t)) or np.any(self.t <= 0.0):
            raise DataError(f"subject {self.id}: response times must be positive")
        if not np.all(np.isfinite(self.r)) or np.any(self.r < 0.0):
            raise DataError(f"subject {self.id}: rewards must be nonnegative")
        if not np.all(np.isfinite(self.covariates)):
            raise DataError(f"subject {self.id}: non-finite covariates")

    @property
    def n_trials(self) -> int:
        return int(self.s.shape[0])

    @classmethod
    def from_trials(cls, id, covariates, trials):
        trials = list(trials)
        for pos, tr in enumerate(trials, start=1):
            if tr.j != pos:
                raise DataError(
                    f"subject {id}: trial indices must be 1..J without gaps "
                    f"(found {tr.j} at position {pos})"
                )
        return cls(
            id=str(id),
            covariates=covariates,
            s=[tr.s for tr in trials],
            a=[tr.a for tr in trials],
            t=[tr.t for tr in trials],
            r=[tr.r for tr in trials],
        )

    def trials(self):
        """Materialize the per-trial records."""
        return [
            TrialRecord(j + 1, int(self.s[j]), int(self.a[j]), float(self.t[j]), float(self.r[j]))
            for j in range(self.n_trials)
        ]


@dataclass
class Dataset:
    subjects: list = field(default_factory=list)

    def __post_init__(self):
        if self.subjects:
            p = self.subjects[0].covariates.shape[0]
            for sub in self.subjects:
                if sub.covariates.shape[0] != p:
                    raise DataError("covariate dimension differs across subjects")

    @property
    def n(self) -> int:
        return len(self.subjects)

    @property
    def n_covariates(self) -> int:
        return int(self.subjects[0].covariates.shape[0]) if self.subjects else 0

    @property
    def min_rt(self) -> float:
        return float(min(sub.t.min() for sub in self.subjects))

    def covariate_matrix(self) -> np.ndarray:
        return np.array([sub.covariates for sub in self.subjects])


# ------------------------------------------------------------------
# file formats
# ------------------------------------------------------------------

TRIAL_COLUMNS = ["subject_id", "trial", "state", "action", "rt_seconds", "reward"]
TRUTH_COLUMNS = ["subject_id", "trial", "u_true", "z_true"]


def _fmt(x) -> str:
    return repr(float(x))


def write_trials(path, dataset: Dataset):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRIAL_COLUMNS)
        for sub in dataset.subjects:
            for j in range(sub.n_trials):
                w.writerow(
                    [sub.id, j + 1, int(sub.s[j]), int(sub.a[j]), _fmt(sub.t[j]), _fmt(sub.r[j])]
                )


def write_covariates(path, dataset: Dataset):
    p = dataset.n_covariates
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subject_id"] + [f"x{k + 1}" for k in range(p)])
        for sub in dataset.subjects:
            w.writerow([sub.id] + [_fmt(x) for x in sub.covariates])


def write_truth(path, dataset: Dataset, true_u, true_z):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRUTH_COLUMNS)
        for i, sub in enumerate(dataset.subjects):
            for j in range(sub.n_trials):
                w.writerow([sub.id, j + 1, int(true_u[i][j]), _fmt(true_z[i][j])])


def _read_rows(path, expected_header):
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if header != expected_header:
            raise DataError(f"{path}: expected header {expected_header}, got {header}")
        return list(reader)


def read_trials(path):
    """Parse a trials file into {subject_id: list[TrialRecord]} preserving
    first-appearance subject order. Malformed rows are reported with their
    file and line number."""
    by_subject = {}
    for lineno, row in enumerate(_read_rows(path, TRIAL_COLUMNS), start=2):
        try:
            sid, j, s, a, t, r = row
            rec = TrialRecord(int(j), int(s), int(a), float(t), float(r))
        except (ValueError, TypeError) as exc:
            raise DataError(f"{path}:{lineno}: malformed trial row {row!r}: {exc}") from None
        by_subject.setdefault(sid, []).append(rec)
    return by_subject


def read_covariates(path):
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "subject_id":
            raise DataError(f"{path}: covariates file must start with subject_id column")
        p = len(header) - 1
        if header[1:] != [f"x{k + 1}" for k in range(p)]:
            raise DataError(f"{path}: covariate columns must be x1..x{p}")
        out = {}
        for lineno, row in enumerate(reader, start=2):
            if len(row) != p + 1:
                raise DataError(f"{path}:{lineno}: expected {p + 1} fields, got {len(row)}")
            if row[0] in out:
                raise DataError(f"{path}:{lineno}: duplicate subject_id {row[0]!r}")
            try:
                out[row[0]] = np.array([float(x) for x in row[1:]])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: malformed covariate row: {exc}") from None
    return out


def read_dataset(trials_path, covariates_path) -> Dataset:
    trials = read_trials(trials_path)
    covs = read_covariates(covariates_path)
    missing = set(trials) - set(covs)
    if missing:
        raise DataError(f"subjects missing from covariates file: {sorted(missing)}")
    subjects = [
        SubjectData.from_trials(sid, covs[sid], recs) for sid, recs in trials.items()
    ]
    return Dataset(subjects)


def read_truth(path):
    """Parse a ground-truth sidecar into {subject_id: (u array, z array)}."""
    out = {}
    for lineno, row in enumerate(_read_rows(path, TRUTH_COLUMNS), start=2):
        try:
            sid, j, u, z = row
            out.setdefault(sid, []).append((int(j), int(u), float(z)))
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: malformed truth row: {exc}") from None
    result = {}
    for sid, rows in out.items():
        rows.sort()
        result[sid] = (
            np.array([u for _, u, _ in rows], dtype=np.int64),
            np.array([z for _, _, z in rows]),
        )
    return result
