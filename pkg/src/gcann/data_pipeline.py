"""Biaxial stress-stretch datasets: CSV ingestion, the fixed train/dev split,
and synthetic data drawn from a known Gaussian model."""
from __future__ import annotations

import csv
import enum
import hashlib
import io
import math
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .energy_terms import library_stress
from .kinematics import Orientation, invariants_from_stretches
from .stress_model import GaussianModel, sample_weights

CSV_COLUMNS = ("experiment", "orientation", "direction", "sample", "lambda1", "lambda2", "stress_kpa")
TRAIN, DEV = "train", "dev"
DATA_DIR_ENV = "GCANN_DATA_DIR"
TENSION_TOL = 1e-9


class DataError(ValueError):
    pass


class Experiment(str, enum.Enum):
    STRIP_W = "strip-w"
    STRIP_S = "strip-s"
    OFF_W = "off-w"
    OFF_S = "off-s"
    EQUIBIAX = "equibiax"
    STRIP_X = "strip-x"
    STRIP_Y = "strip-y"
    OFF_X = "off-x"
    OFF_Y = "off-y"
    EQUIBIAX_OFF = "equibiax-45"

    @property
    def orientation(self) -> Orientation:
        if self in (Experiment.STRIP_W, Experiment.STRIP_S, Experiment.OFF_W,
                    Experiment.OFF_S, Experiment.EQUIBIAX):
            return Orientation.ALIGNED
        return Orientation.OFFSET

    @property
    def kind(self) -> str:
        return self.value.split("-")[0]

    @property
    def driven_axis(self) -> int:
        """Loading axis that reaches the largest stretch (1 for equibiaxial)."""
        return 2 if self in (Experiment.STRIP_S, Experiment.OFF_S,
                             Experiment.STRIP_Y, Experiment.OFF_Y) else 1

    def direction_label(self, direction: int) -> str:
        labels = "ws" if self.orientation is Orientation.ALIGNED else "xy"
        return labels[direction - 1]

    def curve_id(self, direction: int) -> str:
        return f"{self.value}/{self.direction_label(direction)}"

    def path(self, driven):
        """(lambda1, lambda2) along this protocol for driven stretches >= 1."""
        driven = np.asarray(driven, dtype=float)
        if self.kind == "strip":
            other = np.ones_like(driven)
        elif self.kind == "off":
            other = 1.0 + 0.5 * (driven - 1.0)
        else:
            return driven, driven.copy()
        return (driven, other) if self.driven_axis == 1 else (other, driven)


# x/y mirror images of the +-45 mount carry no new information
MIRRORED = {"strip-y/x": "strip-x/y", "strip-y/y": "strip-x/x", "off-y/x": "off-x/y",
            "off-y/y": "off-x/x", "equibiax-45/y": "equibiax-45/x"}
DEV_CURVES = ("strip-w/s", "equibiax/w", "strip-x/x")
UNIQUE_CURVES = tuple(
    e.curve_id(d) for e in Experiment for d in (1, 2) if e.curve_id(d) not in MIRRORED)


@dataclass
class Curve:
    experiment: Experiment
    direction: int
    lambda1: np.ndarray
    lambda2: np.ndarray
    stress: np.ndarray
    sample: np.ndarray

    def __post_init__(self):
        self.experiment = Experiment(self.experiment)
        self.direction = int(self.direction)
        for name in ("lambda1", "lambda2", "stress"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        self.sample = np.asarray(self.sample, dtype=int)

    @property
    def id(self) -> str:
        return self.experiment.curve_id(self.direction)

    @property
    def orientation(self) -> Orientation:
        return self.experiment.orientation

    @property
    def stretch(self) -> np.ndarray:
        """Stretch along the driven axis, used as the plotting abscissa."""
        return self.lambda1 if self.experiment.driven_axis == 1 else self.lambda2

    def __len__(self):
        return len(self.stress)

    def point_groups(self) -> list[np.ndarray]:
        """Indices of the k-th measurement of every sample, for each k."""
        ranks = np.zeros(len(self), dtype=int)
        for s in np.unique(self.sample):
            idx = np.flatnonzero(self.sample == s)
            ranks[idx] = np.arange(len(idx))
        return [np.flatnonzero(ranks == k) for k in range(ranks.max() + 1)] if len(self) else []

    def empirical(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Per-point (stretch, mean, variance, count) across samples; variance is ddof=0."""
        groups = self.point_groups()
        stretch = np.array([self.stretch[g].mean() for g in groups])
        mean = np.array([self.stress[g].mean() for g in groups])
        var = np.array([self.stress[g].var() for g in groups])
        count = np.array([len(g) for g in groups])
        return stretch, mean, var, count


@dataclass
class Observations:
    """Flat view of the observations of one split.

    Invariants are cached once per distinct (stretch, direction) point; many
    observations (one per specimen) usually share a point.
    """

    lambda1: np.ndarray
    lambda2: np.ndarray
    stress: np.ndarray
    direction: np.ndarray
    curve: np.ndarray  # index into curve_ids
    curve_ids: tuple[str, ...]
    point: np.ndarray  # index into the cached point arrays
    inv_values: np.ndarray = field(repr=False)  # (5, n_points)
    inv_partials: np.ndarray = field(repr=False)  # (5, n_points), along the stress direction

    def __len__(self):
        return len(self.stress)

    @classmethod
    def from_curves(cls, curves: list[Curve]) -> "Observations":
        if not curves:
            raise DataError("no observations")
        values, partials, points = [], [], []
        offset = 0
        for c in curves:
            pairs, inverse = np.unique(np.column_stack([c.lambda1, c.lambda2]), axis=0,
                                       return_inverse=True)
            inv = invariants_from_stretches(pairs[:, 0], pairs[:, 1], c.orientation)
            values.append(inv.values)
            partials.append(inv.directional(c.direction))
            points.append(inverse.ravel() + offset)
            offset += len(pairs)
        return cls(
            lambda1=np.concatenate([c.lambda1 for c in curves]),
            lambda2=np.concatenate([c.lambda2 for c in curves]),
            stress=np.concatenate([c.stress for c in curves]),
            direction=np.concatenate([np.full(len(c), c.direction) for c in curves]),
            curve=np.concatenate([np.full(len(c), k) for k, c in enumerate(curves)]),
            curve_ids=tuple(c.id for c in curves),
            point=np.concatenate(points),
            inv_values=np.concatenate(values, axis=1),
            inv_partials=np.concatenate(partials, axis=1),
        )

    @property
    def n_points(self) -> int:
        return self.inv_values.shape[1]

    def subset(self, idx) -> "Observations":
        used, point = np.unique(self.point[idx], return_inverse=True)
        return Observations(self.lambda1[idx], self.lambda2[idx], self.stress[idx],
                            self.direction[idx], self.curve[idx], self.curve_ids,
                            point.ravel(), self.inv_values[:, used], self.inv_partials[:, used])

    def unit_stresses(self, wstar) -> tuple[np.ndarray, np.ndarray]:
        """Unit-weight term stresses and w* sensitivities per cached point, (n_points, 14)."""
        return library_stress(self.inv_values, self.inv_partials, wstar)


@dataclass
class BiaxialDataset:
    curves: list[Curve]
    split_assignment: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        ids = [c.id for c in self.curves]
        dupes = {i for i in ids if ids.count(i) > 1}
        if dupes:
            raise DataError(f"duplicate curves: {sorted(dupes)}")
        for cid in ids:
            self.split_assignment.setdefault(cid, TRAIN)
        self._cache: dict[str, Observations] = {}

    @property
    def curve_ids(self) -> list[str]:
        return [c.id for c in self.curves]

    def curve(self, curve_id: str) -> Curve:
        for c in self.curves:
            if c.id == curve_id:
                return c
        raise KeyError(f"no curve {curve_id!r}; available: {', '.join(self.curve_ids)}")

    def split_curves(self, split: str | None) -> list[Curve]:
        if split in (None, "all"):
            return list(self.curves)
        if split not in (TRAIN, DEV):
            raise ValueError(f"unknown split {split!r}")
        return [c for c in self.curves if self.split_assignment[c.id] == split]

    def observations(self, split: str | None = TRAIN) -> Observations:
        key = split or "all"
        if key not in self._cache:
            curves = self.split_curves(split)
            if not curves:
                raise DataError(f"split {key!r} is empty")
            self._cache[key] = Observations.from_curves(curves)
        return self._cache[key]

    def n_observations(self, split: str | None = None) -> int:
        return sum(len(c) for c in self.split_curves(split))

    def max_stretch(self, split: str | None = TRAIN) -> float:
        return float(max(max(c.lambda1.max(), c.lambda2.max()) for c in self.split_curves(split)))

    def with_split(self, assignment: dict[str, str]) -> "BiaxialDataset":
        return BiaxialDataset(self.curves, dict(assignment))

    def content_hash(self) -> str:
        return hashlib.sha256(to_csv_text(self).encode()).hexdigest()[:16]


def resolve_data_path(path) -> Path:
    """Relative paths that do not exist locally are looked up in $GCANN_DATA_DIR."""
    p = Path(path)
    if not p.exists() and not p.is_absolute() and os.environ.get(DATA_DIR_ENV):
        alt = Path(os.environ[DATA_DIR_ENV]) / p
        if alt.exists():
            return alt
    return p


def load_csv(path) -> BiaxialDataset:
    path = resolve_data_path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such data file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_csv(fh)


def parse_csv(fh) -> BiaxialDataset:
    rows: dict[tuple[Experiment, int], list[tuple]] = {}
    header = None
    for lineno, line in enumerate(fh, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        fields = next(csv.reader([text]))
        if header is None:
            header = [f.strip() for f in fields]
            missing = [c for c in CSV_COLUMNS if c not in header]
            if missing:
                raise DataError(f"line {lineno}: header lacks columns {missing}")
            col = {name: header.index(name) for name in CSV_COLUMNS}
            continue
        if len(fields) != len(header):
            raise DataError(f"line {lineno}: expected {len(header)} fields, got {len(fields)}")
        try:
            exp = Experiment(fields[col["experiment"]].strip())
        except ValueError:
            raise DataError(f"line {lineno}: unknown experiment {fields[col['experiment']]!r}") from None
        try:
            orient = Orientation.parse(fields[col["orientation"]])
            direction = int(fields[col["direction"]])
            sample = int(fields[col["sample"]])
            l1 = float(fields[col["lambda1"]])
            l2 = float(fields[col["lambda2"]])
            stress = float(fields[col["stress_kpa"]])
        except ValueError as exc:
            raise DataError(f"line {lineno}: {exc}") from None
        if orient is not exp.orientation:
            raise DataError(f"line {lineno}: {exp.value} is a {exp.orientation.value} experiment")
        if direction not in (1, 2):
            raise DataError(f"line {lineno}: direction must be 1 or 2")
        if not (l1 > 0 and l2 > 0) or not all(map(math.isfinite, (l1, l2, stress))):
            raise DataError(f"line {lineno}: stretches must be finite and positive")
        if min(l1, l2) < 1.0 - TENSION_TOL:
            raise DataError(f"line {lineno}: compressive stretch in a tension protocol")
        rows.setdefault((exp, direction), []).append((l1, l2, stress, sample, lineno))
    if not rows:
        raise DataError("no observations")

    curves = []
    for (exp, direction), pts in rows.items():
        samples = [p[3] for p in pts]
        if any(b < a for a, b in zip(samples, samples[1:])):
            warnings.warn(f"{exp.curve_id(direction)}: sample ids are not monotone", stacklevel=2)
        arr = np.array([p[:4] for p in pts])
        curves.append(Curve(exp, direction, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3].astype(int)))
    return BiaxialDataset(curves)


def to_csv_text(data: BiaxialDataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for c in data.curves:
        for l1, l2, s, k in zip(c.lambda1, c.lambda2, c.stress, c.sample):
            writer.writerow([c.experiment.value, c.orientation.value, c.direction, int(k),
                             repr(float(l1)), repr(float(l2)), repr(float(s))])
    return buf.getvalue()


def write_csv(data: BiaxialDataset, path) -> None:
    Path(path).write_text(to_csv_text(data), encoding="utf-8")


def standard_split(data: BiaxialDataset) -> BiaxialDataset:
    """Hold out strip-w s-stress, equibiaxial w-stress and strip-x x-stress."""
    missing = [cid for cid in DEV_CURVES if cid not in data.curve_ids]
    if missing:
        raise DataError(f"dataset lacks dev curves {missing}; available: {', '.join(data.curve_ids)}")
    return data.with_split({cid: DEV if cid in DEV_CURVES else TRAIN for cid in data.curve_ids})


@dataclass(frozen=True)
class Protocol:
    experiment: Experiment
    lambda_max: float = 1.2
    directions: tuple[int, ...] = (1, 2)

    def stretches(self, n_points: int):
        driven = np.linspace(1.0, self.lambda_max, n_points + 1)[1:]
        return self.experiment.path(driven)


STANDARD_PROTOCOLS = tuple(Protocol(e) for e in Experiment)


def synthesize(model: GaussianModel, protocols=STANDARD_PROTOCOLS, n_samples: int = 5,
               n_points: int = 100, seed: int = 0, unique: bool = True) -> BiaxialDataset:
    """Virtual specimens, one weight draw each, shared by all protocols.

    With ``unique`` the mirror-image curves of the +-45 mount are dropped, which
    leaves the 15 distinct curves of a full test campaign.
    """
    if n_samples < 1 or n_points < 1:
        raise ValueError("need at least one sample and one point")
    weights = sample_weights(model, n_samples, seed)
    curves = []
    for proto in protocols:
        l1, l2 = proto.stretches(n_points)
        inv = invariants_from_stretches(l1, l2, proto.experiment.orientation)
        for direction in proto.directions:
            cid = proto.experiment.curve_id(direction)
            if unique and cid in MIRRORED:
                continue
            h, _ = library_stress(inv.values, inv.directional(direction), model.w_star)
            stress = weights @ h.T  # (n_samples, n_points)
            curves.append(Curve(
                proto.experiment, direction,
                np.tile(l1, n_samples), np.tile(l2, n_samples), stress.ravel(),
                np.repeat(np.arange(1, n_samples + 1), n_points)))
    return BiaxialDataset(curves)
