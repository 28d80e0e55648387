"""Synthetic multi-site sensor data plus the sinusoid regression family.

The sensor simulator emits hourly co-located low-cost/reference series.
Each site distorts a shared kind of reference signal (diurnal cycle plus
slow multi-day pollution episodes) with its own gain, offset, humidity
response above 60 %RH, and noise level. Short co-location windows sit
inside one episode regime while long records span many, which is what
makes transfer from data-rich sites matter. The sinusoid family is an independent check bed for the
meta-learning machinery, free of any sensor semantics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .dataio import CSV_FIELDS, CalibrationRecord, SiteDataset
from .nnet import Batch

EPOCH = datetime(2021, 1, 1, tzinfo=timezone.utc)

# synoptic walk: correlation time ~200 h, so 3 days of data sit inside one
# pollution regime while a 15-day stretch wanders across several
_SLOW_RHO = 0.995
# hourly texture on top of the synoptic level
_FAST_RHO = 0.9
_FAST_STD = 3.0

PM25_REF_RANGE = (2.0, 500.0)
HUMIDITY_RANGE = (30.0, 95.0)
TEMPERATURE_RANGE = (18.0, 35.0)


@dataclass(frozen=True)
class SiteProfile:
    """Per-site distortion of the true PM2.5 signal."""

    gain: float
    offset: float
    humidity_coeff: float
    noise_std: float
    seed: int

    def __post_init__(self):
        if not self.noise_std > 0:
            raise ValueError(f"noise_std must be > 0, got {self.noise_std}")

    @classmethod
    def sample(cls, seed: int) -> "SiteProfile":
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x70726F66]))
        return cls(
            gain=float(rng.uniform(0.6, 1.4)),
            offset=float(rng.uniform(-10.0, 10.0)),
            humidity_coeff=float(rng.uniform(0.0, 0.5)),
            noise_std=float(rng.uniform(1.0, 5.0)),
            seed=int(seed),
        )


@dataclass(frozen=True)
class SinusoidTask:
    """y = amplitude * sin(x + phase) on x in [-5, 5]."""

    amplitude: float
    phase: float


def _ar1(rho: float, stationary_std: float, hours: int, rng: np.random.Generator) -> np.ndarray:
    """Stationary AR(1) path; level 0 draws from the stationary law, not 0."""
    step_std = stationary_std * math.sqrt(1.0 - rho * rho)
    steps = rng.normal(0.0, step_std, hours)
    out = np.empty(hours)
    level = rng.normal(0.0, stationary_std)
    for i in range(hours):
        level = rho * level + steps[i]
        out[i] = level
    return out


def gen_reference_series(hours: int, seed: int) -> np.ndarray:
    """Positive reference PM2.5 series with multi-day pollution episodes.

    base * (1 + a sin(2 pi t / 24 + psi)) + synoptic + texture, clipped to
    [2, 500]; base ~ U[30, 120], diurnal amplitude a ~ U[0.08, 0.2], psi
    drawn per seed. The synoptic walk (std 0.35 * base, ~200 h memory)
    dominates the variance, so the level regime shifts on a scale of days,
    not hours.
    """
    if hours < 1:
        raise ValueError(f"hours must be >= 1, got {hours}")
    rng = np.random.default_rng(seed)
    base = rng.uniform(30.0, 120.0)
    amp = rng.uniform(0.08, 0.2)
    psi = rng.uniform(0.0, 2.0 * math.pi)
    t = np.arange(hours)
    diurnal = base * (1.0 + amp * np.sin(2.0 * math.pi * t / 24.0 + psi))
    synoptic = _ar1(_SLOW_RHO, 0.35 * base, hours, rng)
    texture = _ar1(_FAST_RHO, _FAST_STD, hours, rng)
    return np.clip(diurnal + synoptic + texture, *PM25_REF_RANGE)


def gen_site(profile: SiteProfile, hours: int, site_id: str | None = None) -> SiteDataset:
    """Simulate one co-located site at 1 sample/hour.

    Temperature follows a diurnal cycle in 18-35 degC, humidity runs in
    anti-phase within 30-95 %RH, and the low-cost channels distort the
    reference signal through the site profile.
    """
    if hours < 1:
        raise ValueError(f"hours must be >= 1, got {hours}")
    ss = np.random.SeedSequence([int(profile.seed), 0x73697465])
    ref_seed, met_seed, sensor_seed = (int(s) for s in ss.generate_state(3))

    ref = gen_reference_series(hours, ref_seed)
    t = np.arange(hours)

    met_rng = np.random.default_rng(met_seed)
    phase_t = met_rng.uniform(0.0, 2.0 * math.pi)
    cycle = np.sin(2.0 * math.pi * t / 24.0 + phase_t)
    temp = 26.5 + 8.5 * cycle + met_rng.normal(0.0, 0.4, hours)
    temp = np.clip(temp, *TEMPERATURE_RANGE)
    humidity = 62.5 - 32.5 * cycle + met_rng.normal(0.0, 1.5, hours)
    humidity = np.clip(humidity, *HUMIDITY_RANGE)

    rng = np.random.default_rng(sensor_seed)
    pm25_raw = (
        profile.gain * ref
        + profile.offset
        + profile.humidity_coeff * np.maximum(0.0, humidity - 60.0)
        + rng.normal(0.0, profile.noise_std, hours)
    )
    pm25_raw = np.maximum(pm25_raw, 0.0)
    pm10_raw = ref * rng.uniform(1.2, 1.8, hours) + rng.normal(0.0, profile.noise_std, hours)
    pm10_raw = np.maximum(pm10_raw, 0.0)

    if site_id is None:
        site_id = f"site-{profile.seed}"
    records = tuple(
        CalibrationRecord(
            timestamp=EPOCH + timedelta(hours=int(i)),
            pm25_raw=float(pm25_raw[i]),
            pm10_raw=float(pm10_raw[i]),
            temperature=float(temp[i]),
            humidity=float(humidity[i]),
            pm25_ref=float(ref[i]),
        )
        for i in range(hours)
    )
    return SiteDataset(site_id=site_id, records=records)


def write_site_csv(path, site: SiteDataset) -> None:
    lines = [",".join(CSV_FIELDS)]
    for r in site.records:
        stamp = r.timestamp.strftime("%Y-%m-%dT%H:%M:%SZ")
        lines.append(
            f"{stamp},{r.pm25_raw:.6f},{r.pm10_raw:.6f},"
            f"{r.temperature:.6f},{r.humidity:.6f},{r.pm25_ref:.6f}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def gen_benchmark(out_dir, n_sources: int = 10, n_targets: int = 5,
                  hours: int = 3000, seed: int = 0) -> Path:
    """Write the multi-site benchmark: one CSV per site plus a manifest.

    Re-running with identical arguments reproduces the files byte for byte.
    Returns the manifest path.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(n_sources + n_targets):
        role = "source" if i < n_sources else "target"
        site_seed = int(np.random.SeedSequence([int(seed), i]).generate_state(1)[0])
        profile = SiteProfile.sample(site_seed)
        site_id = f"site{i:02d}"
        site = gen_site(profile, hours, site_id=site_id)
        filename = f"{site_id}.csv"
        write_site_csv(out_dir / filename, site)
        entries.append({"site_id": site_id, "role": role, "path": filename})
    manifest = {
        "seed": int(seed),
        "hours": int(hours),
        "sites": entries,
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path


def gen_sinusoid_task(seed: int) -> SinusoidTask:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x73696E]))
    return SinusoidTask(
        amplitude=float(rng.uniform(0.1, 5.0)),
        phase=float(rng.uniform(0.0, math.pi)),
    )


def sample_task_points(task: SinusoidTask, n: int, seed: int) -> Batch:
    """n noiseless points of the task: x uniform on [-5, 5], 1-D inputs."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    x = rng.uniform(-5.0, 5.0, n)
    y = task.amplitude * np.sin(x + task.phase)
    return Batch(inputs=x[:, None], targets=y)
