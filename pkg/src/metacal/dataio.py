"""Ingestion of co-located sensor/reference time series and the windowing
protocol: 2-day support + 2-day query windows at source sites, a 3-day
train/validation window followed by a 15-day test window at targets.

Feature channels, in order: pm25_raw, pm10_raw, temperature, humidity.
Target channel: pm25_ref. Normalization is per-channel z-scoring with
population statistics fitted on a declared reference set; which set that
is depends on the method (source pool, single source, or target train),
and the fitted stats travel with every TaskSplit for audit.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .nnet import Batch

log = logging.getLogger(__name__)

CSV_FIELDS = ["timestamp", "pm25_raw", "pm10_raw", "temperature", "humidity", "pm25_ref"]

FEATURE_NAMES = ("pm25_raw", "pm10_raw", "temperature", "humidity")
N_CHANNELS = 5  # 4 features + reference target

_HOUR = timedelta(hours=1)


@dataclass(frozen=True)
class CalibrationRecord:
    """One hourly co-located observation. pm25_ref may be absent at inference."""

    timestamp: datetime
    pm25_raw: float
    pm10_raw: float
    temperature: float
    humidity: float
    pm25_ref: float | None = None

    def __post_init__(self):
        vals = [self.pm25_raw, self.pm10_raw, self.temperature, self.humidity]
        if self.pm25_ref is not None:
            vals.append(self.pm25_ref)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError(f"non-finite field in record at {self.timestamp}")
        if self.pm25_raw < 0 or self.pm10_raw < 0:
            raise ValueError(f"negative particulate reading at {self.timestamp}")
        if self.pm25_ref is not None and self.pm25_ref < 0:
            raise ValueError(f"negative reference reading at {self.timestamp}")
        if not 0 <= self.humidity <= 100:
            raise ValueError(f"humidity {self.humidity} outside [0, 100] at {self.timestamp}")


@dataclass(frozen=True)
class SiteDataset:
    """Time-ordered records for one location; immutable after load."""

    site_id: str
    records: tuple[CalibrationRecord, ...]
    n_dropped: int = 0
    n_gaps: int = 0

    def __post_init__(self):
        records = tuple(self.records)
        if not records:
            raise ValueError(f"site {self.site_id!r} has no records")
        stamps = [r.timestamp for r in records]
        if any(b <= a for a, b in zip(stamps, stamps[1:])):
            raise ValueError(f"site {self.site_id!r} timestamps not strictly increasing")
        object.__setattr__(self, "records", records)

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class NormStats:
    """Per-channel mean/std (population) over the 5 channels."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=np.float64).ravel()
        std = np.array(self.std, dtype=np.float64).ravel()
        if mean.size != N_CHANNELS or std.size != N_CHANNELS:
            raise ValueError(f"stats must cover {N_CHANNELS} channels")
        if not (std > 0).all():
            raise ValueError(f"degenerate channel: std must be > 0, got {std}")
        mean.setflags(write=False)
        std.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    def to_json(self) -> str:
        return json.dumps({"mean": self.mean.tolist(), "std": self.std.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "NormStats":
        obj = json.loads(text)
        return cls(np.array(obj["mean"]), np.array(obj["std"]))


@dataclass(frozen=True)
class TaskSplit:
    """A (support, query[, test]) partition of one site, with audit ranges.

    The same type covers both protocols: support/query at source sites and
    train/val/test at targets (`train`/`val` alias `support`/`query`).
    Ranges are half-open index intervals into the originating SiteDataset.
    """

    support: Batch
    query: Batch | None
    support_range: tuple[int, int]
    query_range: tuple[int, int]
    stats: NormStats
    test: Batch | None = None
    test_range: tuple[int, int] | None = None

    def __post_init__(self):
        ranges = [self.support_range, self.query_range]
        if self.test_range is not None:
            ranges.append(self.test_range)
        for (lo, hi), part in zip(ranges, (self.support, self.query, self.test)):
            if lo > hi:
                raise ValueError(f"inverted index range ({lo}, {hi})")
            if (part is None) != (lo == hi):
                raise ValueError(f"range ({lo}, {hi}) inconsistent with its batch")
            if part is not None and len(part) != hi - lo:
                raise ValueError(f"range ({lo}, {hi}) does not match batch of {len(part)} rows")
        if self.support_range[0] >= self.support_range[1]:
            raise ValueError("support/train partition must be non-empty")
        if self.support_range[1] > self.query_range[0]:
            raise ValueError("query range must start at or after the support range ends")
        if self.test_range is not None and self.query_range[1] > self.test_range[0]:
            raise ValueError("test range must start at or after the query range ends")

    @property
    def train(self) -> Batch:
        return self.support

    @property
    def val(self) -> Batch:
        return self.query


class InsufficientDataError(ValueError):
    """A site does not contain enough records for the requested windows."""


def _parse_timestamp(text: str) -> datetime:
    # RFC-3339; Python 3.10's fromisoformat does not accept a trailing Z.
    ts = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def load_site_csv(path, site_id: str) -> SiteDataset:
    """Parse one site CSV, sort by time, drop invalid rows (counted).

    Rows missing any sensor field are dropped; a missing pm25_ref is kept
    as None. The second of two rows sharing a timestamp is dropped.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if header != CSV_FIELDS:
            raise ValueError(f"{path}: malformed header {header!r}, expected {CSV_FIELDS!r}")
        rows = list(reader)

    parsed: list[CalibrationRecord] = []
    dropped = 0
    for row in rows:
        if len(row) != len(CSV_FIELDS):
            dropped += 1
            continue
        try:
            ref = float(row[5]) if row[5].strip() else None
            rec = CalibrationRecord(
                timestamp=_parse_timestamp(row[0]),
                pm25_raw=float(row[1]),
                pm10_raw=float(row[2]),
                temperature=float(row[3]),
                humidity=float(row[4]),
                pm25_ref=ref,
            )
        except (ValueError, OverflowError):
            dropped += 1
            continue
        parsed.append(rec)

    parsed.sort(key=lambda r: r.timestamp)
    records: list[CalibrationRecord] = []
    duplicates = 0
    for rec in parsed:
        if records and rec.timestamp == records[-1].timestamp:
            duplicates += 1
            continue
        records.append(rec)
    if duplicates:
        log.warning("%s: dropped %d duplicate-timestamp rows", path, duplicates)
    dropped += duplicates

    if not records:
        raise ValueError(f"{path}: no valid rows")

    gaps = sum(1 for a, b in zip(records, records[1:]) if b.timestamp - a.timestamp != _HOUR)
    if dropped:
        log.warning("%s: dropped %d invalid rows", path, dropped)
    return SiteDataset(site_id=site_id, records=tuple(records), n_dropped=dropped, n_gaps=gaps)


def records_matrix(records) -> np.ndarray:
    """(n, 5) matrix of [features..., pm25_ref]; requires pm25_ref present."""
    records = list(records)
    if any(r.pm25_ref is None for r in records):
        raise ValueError("records without pm25_ref cannot enter a labeled matrix")
    return np.array(
        [[r.pm25_raw, r.pm10_raw, r.temperature, r.humidity, r.pm25_ref] for r in records],
        dtype=np.float64,
    )


def fit_norm(records) -> NormStats:
    """Population mean/std per channel over the given records only."""
    mat = records_matrix(records)
    if mat.shape[0] < 2:
        raise ValueError("need at least 2 records to fit normalization statistics")
    mean = mat.mean(axis=0)
    std = mat.std(axis=0)  # population std
    if not (std > 0).all():
        bad = [i for i, s in enumerate(std) if not s > 0]
        raise ValueError(f"constant channel(s) {bad}: cannot normalize")
    return NormStats(mean, std)


def apply_norm(records, stats: NormStats) -> Batch:
    """z-score the 4 feature channels and the target channel."""
    mat = records_matrix(records)
    z = (mat - stats.mean) / stats.std
    return Batch(inputs=z[:, :4], targets=z[:, 4])


def denorm_predictions(preds, stats: NormStats) -> np.ndarray:
    """Map normalized predictions back to physical µg/m³."""
    return np.asarray(preds, dtype=np.float64) * stats.std[4] + stats.mean[4]


def sample_support_query(site: SiteDataset, support_hours: int = 48, query_hours: int = 48,
                         rng_seed: int = 0, *, stats: NormStats) -> TaskSplit:
    """Draw contiguous, disjoint support and query windows from one site.

    The support start is uniform over all positions leaving room for both
    windows; the query start is uniform over positions at or after the
    support window's end.
    """
    n = len(site)
    if n < support_hours + query_hours:
        raise InsufficientDataError(
            f"site {site.site_id!r} has {n} records, needs {support_hours + query_hours}"
        )
    rng = np.random.default_rng(rng_seed)
    s_lo = int(rng.integers(0, n - support_hours - query_hours + 1))
    s_hi = s_lo + support_hours
    q_lo = int(rng.integers(s_hi, n - query_hours + 1))
    q_hi = q_lo + query_hours
    return TaskSplit(
        support=apply_norm(site.records[s_lo:s_hi], stats),
        query=apply_norm(site.records[q_lo:q_hi], stats),
        support_range=(s_lo, s_hi),
        query_range=(q_lo, q_hi),
        stats=stats,
    )


def split_target(site: SiteDataset, trainval_hours: int = 72, test_hours: int = 360,
                 val_fraction: float = 0.25, stats: NormStats | None = None) -> TaskSplit:
    """Chronological target split: train, val, then the test window.

    The first trainval_hours records split into train (first 1-val_fraction)
    and val; the next test_hours records are the test set. With stats=None
    the statistics are fitted on the train portion (what a no-transfer
    method may legitimately see); transfer methods pass their source stats.
    """
    n = len(site)
    if n < trainval_hours + test_hours:
        raise InsufficientDataError(
            f"site {site.site_id!r} has {n} records, needs {trainval_hours + test_hours}"
        )
    if not 0 <= val_fraction < 1:
        raise ValueError(f"val_fraction must be in [0, 1), got {val_fraction}")
    n_train = round(trainval_hours * (1.0 - val_fraction))
    ranges = {
        "train": (0, n_train),
        "val": (n_train, trainval_hours),
        "test": (trainval_hours, trainval_hours + test_hours),
    }
    if stats is None:
        stats = fit_norm(site.records[: n_train])
    val_empty = ranges["val"][0] == ranges["val"][1]
    return TaskSplit(
        support=apply_norm(site.records[slice(*ranges["train"])], stats),
        query=None if val_empty else apply_norm(site.records[slice(*ranges["val"])], stats),
        test=apply_norm(site.records[slice(*ranges["test"])], stats),
        support_range=ranges["train"],
        query_range=ranges["val"],
        test_range=ranges["test"],
        stats=stats,
    )


@dataclass(frozen=True)
class ManifestEntry:
    site_id: str
    role: str  # "source" or "target"
    path: str


def load_manifest(path) -> list[ManifestEntry]:
    path = Path(path)
    with open(path) as fh:
        obj = json.load(fh)
    entries = []
    for item in obj["sites"]:
        role = item["role"]
        if role not in ("source", "target"):
            raise ValueError(f"{path}: unknown site role {role!r}")
        entries.append(ManifestEntry(site_id=item["site_id"], role=role, path=item["path"]))
    return entries


def load_manifest_sites(path) -> tuple[list[SiteDataset], list[SiteDataset]]:
    """Load every site listed in a manifest, split by role."""
    path = Path(path)
    sources, targets = [], []
    for entry in load_manifest(path):
        site = load_site_csv(path.parent / entry.path, entry.site_id)
        (sources if entry.role == "source" else targets).append(site)
    return sources, targets
