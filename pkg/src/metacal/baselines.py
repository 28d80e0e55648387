"""Fine-tuning comparison methods.

B1 trains from scratch on the target's small train window. B2 pretrains
on one source site and fine-tunes at the target; B3 pretrains on the
pooled data of every source. All training is full-batch Adam; fine-tuning
(and B1) early-stops on the target validation window and returns the
best-validation parameters seen, the starting point included.

The TaskSplit handed to B2/B3 must have been normalized with the
pretraining stats (single source for B2, pooled sources for B3); the
split's own `stats` field is used to normalize the source records, which
keeps one stats object per experiment by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import dataio
from .nnet import Batch, MlpSpec, ParamVector, grad, init_params, loss_mae
from .optim import AdamState, adam_step


@dataclass(frozen=True)
class FinetuneConfig:
    pretrain_epochs: int = 200
    finetune_patience: int = 20
    finetune_step_cap: int = 500
    batch_mode: str = "full"
    adam_lr: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8

    def __post_init__(self):
        if min(self.pretrain_epochs, self.finetune_patience, self.finetune_step_cap) < 0:
            raise ValueError("all counts must be >= 0")
        if self.batch_mode != "full":
            raise ValueError(f"unsupported batch mode {self.batch_mode!r}")
        if not self.adam_lr > 0:
            raise ValueError(f"adam_lr must be > 0, got {self.adam_lr}")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("adam betas must lie in [0, 1)")
        if not self.adam_epsilon > 0:
            raise ValueError(f"adam_epsilon must be > 0, got {self.adam_epsilon}")

    def make_adam(self, n_params: int) -> AdamState:
        return AdamState.init(
            n_params, learning_rate=self.adam_lr, beta1=self.adam_beta1,
            beta2=self.adam_beta2, epsilon=self.adam_epsilon,
        )


def _adam_with_early_stopping(start: ParamVector, train: Batch, val: Batch | None,
                              cfg: FinetuneConfig) -> ParamVector:
    """Full-batch Adam from `start`, early-stopped on val; best-val params win."""
    theta = start
    adam = cfg.make_adam(len(start))
    if val is None:
        for _ in range(cfg.finetune_step_cap):
            theta, adam = adam_step(adam, theta, grad(theta, train))
        return theta
    best = theta
    best_loss = loss_mae(theta, val)
    stale = 0
    for _ in range(cfg.finetune_step_cap):
        theta, adam = adam_step(adam, theta, grad(theta, train))
        val_loss = loss_mae(theta, val)
        if val_loss < best_loss:
            best, best_loss, stale = theta, val_loss, 0
        else:
            stale += 1
            if stale >= cfg.finetune_patience:
                break
    return best


def train_b1(target_train: Batch, target_val: Batch | None, cfg: FinetuneConfig,
             seed: int, spec: MlpSpec | None = None) -> ParamVector:
    """No-transfer baseline: random init, Adam on the target train window."""
    if len(target_train) < 1:
        raise ValueError("target training set must be non-empty")
    theta0 = init_params(spec or MlpSpec(), seed)
    return _adam_with_early_stopping(theta0, target_train, target_val, cfg)


def pretrain(source_data: Batch, cfg: FinetuneConfig, seed: int,
             spec: MlpSpec | None = None) -> ParamVector:
    """Random init, then pretrain_epochs full-batch Adam steps on the source."""
    if len(source_data) < 1:
        raise ValueError("source data must be non-empty")
    theta = init_params(spec or MlpSpec(), seed)
    adam = cfg.make_adam(len(theta))
    for _ in range(cfg.pretrain_epochs):
        theta, adam = adam_step(adam, theta, grad(theta, source_data))
    return theta


def finetune(pretrained: ParamVector, target_train: Batch, target_val: Batch | None,
             cfg: FinetuneConfig) -> ParamVector:
    """Adam from the pretrained parameters, early-stopped on validation."""
    if len(target_train) < 1:
        raise ValueError("target training set must be non-empty")
    return _adam_with_early_stopping(pretrained, target_train, target_val, cfg)


def train_b2(source: dataio.SiteDataset, target: dataio.TaskSplit, cfg: FinetuneConfig,
             seed: int, spec: MlpSpec | None = None) -> ParamVector:
    """Single-source transfer: pretrain on `source`, fine-tune on the target."""
    source_batch = dataio.apply_norm(source.records, target.stats)
    pretrained = pretrain(source_batch, cfg, seed, spec)
    return finetune(pretrained, target.train, target.val, cfg)


def train_b3(sources: Sequence[dataio.SiteDataset], target: dataio.TaskSplit,
             cfg: FinetuneConfig, seed: int, spec: MlpSpec | None = None) -> ParamVector:
    """Pooled-source transfer: pretrain on all sources' records combined."""
    if not sources:
        raise ValueError("need at least one source site")
    pooled = [r for site in sources for r in site.records]
    pooled_batch = dataio.apply_norm(pooled, target.stats)
    pretrained = pretrain(pooled_batch, cfg, seed, spec)
    return finetune(pretrained, target.train, target.val, cfg)
