"""Evaluation metrics in physical units: MAE, the population standard
deviation of the absolute error, RMSE, and the coefficient of
determination. R^2 is stored raw (may be negative); multiplying by 100 is
purely a display concern of table formatters."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .dataio import NormStats, denorm_predictions
from .nnet import Batch, ParamVector, forward

METHODS = ("RAW", "B1", "B2", "B3", "MAML")


@dataclass(frozen=True)
class EvalReport:
    site_id: str
    method: str
    mae: float
    mae_std: float
    rmse: float
    r2: float
    n_samples: int

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.n_samples < 2:
            raise ValueError(f"need n_samples >= 2, got {self.n_samples}")
        # rmse >= mae by Jensen; equality (all |e| equal) needs float slack
        if not (self.rmse >= self.mae * (1.0 - 1e-9) >= 0):
            raise ValueError(f"inconsistent errors: rmse={self.rmse}, mae={self.mae}")
        if self.r2 > 1.0:
            raise ValueError(f"r2 cannot exceed 1, got {self.r2}")

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def _paired(pred, truth, min_len: int = 1) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.size != truth.size:
        raise ValueError(f"length mismatch: {pred.size} predictions vs {truth.size} truths")
    if pred.size < min_len:
        raise ValueError(f"need at least {min_len} samples, got {pred.size}")
    return pred, truth


def mae(pred, truth) -> float:
    pred, truth = _paired(pred, truth)
    return float(np.mean(np.abs(pred - truth)))


def mae_std(pred, truth) -> float:
    """Population standard deviation of the absolute errors."""
    pred, truth = _paired(pred, truth, min_len=2)
    return float(np.std(np.abs(pred - truth)))


def rmse(pred, truth) -> float:
    pred, truth = _paired(pred, truth)
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def r2(pred, truth) -> float:
    """1 - SS_res/SS_tot; negative when worse than the constant-mean predictor."""
    pred, truth = _paired(pred, truth, min_len=2)
    ss_tot = float(np.sum((truth - truth.mean()) ** 2))
    if ss_tot == 0.0:
        raise ValueError("truth is constant: r2 undefined")
    ss_res = float(np.sum((truth - pred) ** 2))
    return 1.0 - ss_res / ss_tot


def report_from_predictions(pred, truth, site_id: str, method: str) -> EvalReport:
    pred, truth = _paired(pred, truth, min_len=2)
    return EvalReport(
        site_id=site_id,
        method=method,
        mae=mae(pred, truth),
        mae_std=mae_std(pred, truth),
        rmse=rmse(pred, truth),
        r2=r2(pred, truth),
        n_samples=int(pred.size),
    )


def evaluate(params: ParamVector | None, test: Batch, stats: NormStats,
             site_id: str, method: str) -> EvalReport:
    """Forward, denormalize, and score against the reference in µg/m³.

    With method="RAW" the uncalibrated sensor channel (feature 0,
    denormalized) is the prediction and params is ignored.
    """
    if len(test) < 2:
        raise ValueError("test batch must contain at least 2 samples")
    truth = test.targets * stats.std[4] + stats.mean[4]
    if method == "RAW":
        pred = test.inputs[:, 0] * stats.std[0] + stats.mean[0]
    else:
        if params is None:
            raise ValueError(f"method {method!r} requires trained parameters")
        pred = denorm_predictions(forward(params, test.inputs), stats)
    return report_from_predictions(pred, truth, site_id, method)
