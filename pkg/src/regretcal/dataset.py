"""Scored prediction datasets: (score, label, optional features) triples."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import (
    EmptyDataset,
    InconsistentFeatureDim,
    LabelNotBinary,
    MalformedRow,
    MissingColumn,
    ScoreOutOfRange,
    TooFewSamples,
    ConfigError,
)


@dataclass(frozen=True)
class ScoredSample:
    score: float
    label: int
    features: Optional[tuple] = None


@dataclass(frozen=True, eq=False)
class ScoredDataset:
    """Immutable column store of scores, binary labels and feature rows.

    ``ids`` are stable row identifiers (source row order by default). They
    survive :func:`split` and are what the honest-fold checks compare.
    """

    scores: np.ndarray
    labels: np.ndarray
    features: np.ndarray
    ids: np.ndarray

    def __post_init__(self):
        for name in ("scores", "labels", "features", "ids"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    @classmethod
    def from_arrays(cls, scores, labels, features=None, ids=None) -> "ScoredDataset":
        scores = np.array(scores, dtype=float).reshape(-1)
        labels_raw = np.asarray(labels).reshape(-1)
        n = scores.shape[0]
        if labels_raw.shape[0] != n:
            raise InconsistentFeatureDim(
                f"{n} scores but {labels_raw.shape[0]} labels")
        bad = np.flatnonzero(~((scores >= 0.0) & (scores <= 1.0)))
        if bad.size:
            raise ScoreOutOfRange(int(bad[0]) + 1, float(scores[bad[0]]))
        if not np.all((labels_raw == 0) | (labels_raw == 1)):
            i = int(np.flatnonzero(~((labels_raw == 0) | (labels_raw == 1)))[0])
            raise LabelNotBinary(i + 1, labels_raw[i])
        labels = labels_raw.astype(np.int8)
        if features is None:
            feats = np.zeros((n, 0))
        else:
            feats = np.array(features, dtype=float)
            if feats.ndim == 1:
                feats = feats.reshape(n, -1) if n else feats.reshape(0, 0)
            if feats.ndim != 2 or feats.shape[0] != n:
                raise InconsistentFeatureDim(
                    f"feature array of shape {feats.shape} for {n} samples")
        if ids is None:
            ids = np.arange(n, dtype=np.int64)
        else:
            ids = np.array(ids, dtype=np.int64).reshape(-1)
            if ids.shape[0] != n:
                raise InconsistentFeatureDim("ids length differs from sample count")
        return cls(scores, labels, feats, ids)

    @classmethod
    def from_samples(cls, samples: Sequence[ScoredSample]) -> "ScoredDataset":
        dims = {len(s.features) if s.features is not None else 0 for s in samples}
        if len(dims) > 1:
            raise InconsistentFeatureDim(f"samples carry feature dims {sorted(dims)}")
        d = dims.pop() if dims else 0
        feats = [list(s.features) if d else [] for s in samples]
        return cls.from_arrays(
            [s.score for s in samples], [s.label for s in samples],
            np.array(feats, dtype=float).reshape(len(samples), d))

    def __len__(self) -> int:
        return int(self.scores.shape[0])

    @property
    def n(self) -> int:
        return len(self)

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    def sample(self, i: int) -> ScoredSample:
        feats = tuple(self.features[i].tolist()) if self.feature_dim else None
        return ScoredSample(float(self.scores[i]), int(self.labels[i]), feats)

    def take(self, index) -> "ScoredDataset":
        index = np.asarray(index)
        return ScoredDataset(
            self.scores[index].copy(), self.labels[index].copy(),
            self.features[index].copy(), self.ids[index].copy())

    def with_scores(self, scores) -> "ScoredDataset":
        scores = np.array(scores, dtype=float).reshape(-1)
        if scores.shape[0] != self.n:
            raise InconsistentFeatureDim("replacement scores have the wrong length")
        return ScoredDataset.from_arrays(scores, self.labels, self.features, self.ids)

    def concat(self, other: "ScoredDataset") -> "ScoredDataset":
        if other.feature_dim != self.feature_dim:
            raise InconsistentFeatureDim("cannot concatenate datasets of different feature_dim")
        return ScoredDataset(
            np.concatenate([self.scores, other.scores]),
            np.concatenate([self.labels, other.labels]),
            np.concatenate([self.features, other.features]),
            np.concatenate([self.ids, other.ids]))


class Schema(NamedTuple):
    score: str = "score"
    label: str = "y"
    feature_prefix: str = "f"


class SplitSpec(NamedTuple):
    fractions: tuple = (0.5, 0.5)
    seed: int = 0
    honest: bool = False

    def validate(self):
        fit, ev = self.fractions
        if not (fit > 0 and ev > 0):
            raise ConfigError(f"split fractions must be strictly positive, got {self.fractions}")
        if abs(fit + ev - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {self.fractions}")


class DatasetSummary(NamedTuple):
    n: int
    positive_rate: float
    score_range: tuple
    feature_dim: int


def _feature_columns(header, prefix):
    cols = []
    for j, name in enumerate(header):
        if name.startswith(prefix) and name[len(prefix):].isdigit():
            cols.append((int(name[len(prefix):]), j))
    cols.sort()
    if [k for k, _ in cols] != list(range(len(cols))):
        raise InconsistentFeatureDim(
            f"feature columns must be {prefix}0..{prefix}{{d-1}} without gaps")
    return [j for _, j in cols]


def _parse_score(raw, line):
    try:
        value = float(raw)
    except ValueError:
        raise MalformedRow(line, f"score {raw!r} is not a number") from None
    if not 0.0 <= value <= 1.0:
        raise ScoreOutOfRange(line, value)
    return value


def _parse_label(raw, line):
    text = str(raw).strip()
    if text in ("0", "1"):
        return int(text)
    try:
        value = float(text)
    except ValueError:
        raise LabelNotBinary(line, raw) from None
    if value not in (0.0, 1.0):
        raise LabelNotBinary(line, raw)
    return int(value)


def load_csv(path, schema: Schema = Schema()) -> ScoredDataset:
    """Read a headered CSV. Line numbers in errors count the header as line 1."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MalformedRow(1, "missing header row") from None
        for col in (schema.label, schema.score):
            if col not in header:
                raise MissingColumn(col)
        i_score = header.index(schema.score)
        i_label = header.index(schema.label)
        feat_cols = _feature_columns(header, schema.feature_prefix)
        scores, labels, feats = [], [], []
        for line, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise MalformedRow(line, f"expected {len(header)} fields, got {len(row)}")
            scores.append(_parse_score(row[i_score], line))
            labels.append(_parse_label(row[i_label], line))
            try:
                feats.append([float(row[j]) for j in feat_cols])
            except ValueError:
                raise MalformedRow(line, "non-numeric feature value") from None
    return ScoredDataset.from_arrays(
        scores, labels, np.array(feats, dtype=float).reshape(len(scores), len(feat_cols)))


def save_csv(ds: ScoredDataset, path, schema: Schema = Schema()) -> None:
    """Write ``ds`` so that :func:`load_csv` reproduces scores bit-for-bit."""
    header = [schema.label, schema.score] + [
        f"{schema.feature_prefix}{j}" for j in range(ds.feature_dim)]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(ds.n):
            writer.writerow(
                [int(ds.labels[i]), repr(float(ds.scores[i]))]
                + [repr(float(v)) for v in ds.features[i]])


def load_jsonl(path) -> ScoredDataset:
    scores, labels, feats = [], [], []
    dim = None
    with Path(path).open(encoding="utf-8") as fh:
        for line, text in enumerate(fh, start=1):
            if not text.strip():
                continue
            try:
                obj = json.loads(text)
            except json.JSONDecodeError as exc:
                raise MalformedRow(line, str(exc)) from None
            if not isinstance(obj, dict) or "y" not in obj or "score" not in obj:
                raise MalformedRow(line, "expected an object with keys 'y' and 'score'")
            scores.append(_parse_score(obj["score"], line))
            labels.append(_parse_label(obj["y"], line))
            row = obj.get("features") or []
            if dim is None:
                dim = len(row)
            elif len(row) != dim:
                raise InconsistentFeatureDim(
                    f"line {line} has {len(row)} features, expected {dim}")
            feats.append([float(v) for v in row])
    return ScoredDataset.from_arrays(
        scores, labels, np.array(feats, dtype=float).reshape(len(scores), dim or 0))


def save_jsonl(ds: ScoredDataset, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for i in range(ds.n):
            obj = {"y": int(ds.labels[i]), "score": float(ds.scores[i])}
            if ds.feature_dim:
                obj["features"] = ds.features[i].tolist()
            fh.write(json.dumps(obj) + "\n")


def load(path, schema: Schema = Schema()) -> ScoredDataset:
    """Dispatch on extension: ``.jsonl``/``.json`` or CSV otherwise."""
    if str(path).endswith((".jsonl", ".json")):
        return load_jsonl(path)
    return load_csv(path, schema)


def split(ds: ScoredDataset, spec: SplitSpec = SplitSpec()):
    """Random disjoint split into (fit, eval), or (fit1, fit2, eval) if honest.

    The fit part of an honest split is halved so a partition can be grown on
    one half and its region statistics estimated on the other.
    """
    spec.validate()
    n = ds.n
    minimum = 3 if spec.honest else 2
    if spec.honest and n < 4 or n < minimum:
        raise TooFewSamples(f"{n} samples cannot be split into nonempty parts")
    perm = np.random.default_rng(spec.seed).permutation(n)
    n_fit = int(round(n * spec.fractions[0]))
    n_fit = min(max(n_fit, minimum - 1), n - 1)
    fit_idx, eval_idx = perm[:n_fit], perm[n_fit:]
    if not spec.honest:
        return ds.take(fit_idx), ds.take(eval_idx)
    half = n_fit // 2
    return ds.take(fit_idx[:half]), ds.take(fit_idx[half:]), ds.take(eval_idx)


def validate(ds: ScoredDataset) -> DatasetSummary:
    if ds.n == 0:
        raise EmptyDataset()
    return DatasetSummary(
        n=ds.n,
        positive_rate=float(np.mean(ds.labels)),
        score_range=(float(ds.scores.min()), float(ds.scores.max())),
        feature_dim=ds.feature_dim,
    )
