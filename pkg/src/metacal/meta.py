"""Gradient-based meta-learning over source sites.

Meta-training learns an initialization phi such that a handful of SGD
steps on a new site's small support window produce a good calibrator.
Each outer iteration samples a batch of source sites, adapts a copy of
phi per site on a fresh support window, and moves phi along the summed
per-site meta-gradients of the query losses (one Adam step).

Two meta-gradient modes are provided. "first_order" treats the adapted
parameters as independent of phi and returns the plain query gradient at
the adapted point. "exact" differentiates through the adaptation: for
inner steps k = K-1 .. 0 it applies v <- v - alpha * H_support(theta_k) @ v,
i.e. the transposed step Jacobians in reverse order (the Hessian is
symmetric), starting from the query gradient.

Only phi survives meta-training; per-site adapted parameters are discarded.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import dataio
from .nnet import Batch, MlpSpec, ParamVector, grad, hvp, init_params, loss_mae
from .optim import AdamState, SgdConfig, adam_step, sgd_step

log = logging.getLogger(__name__)

_MODES = ("first_order", "exact")

# Task sampler: (iteration, rng) -> list of (support, query) batches.
TaskSampler = Callable[[int, np.random.Generator], list[tuple[Batch, Batch]]]


@dataclass(frozen=True)
class MetaConfig:
    inner_steps: int = 1
    inner_lr: float = 1e-3
    meta_lr: float = 1e-4
    meta_batch_size: int = 5
    meta_iterations: int = 1000
    meta_grad_mode: str = "first_order"
    seed: int = 0
    support_hours: int = 48
    query_hours: int = 48
    deploy_patience: int = 20
    deploy_step_cap: int = 500

    def __post_init__(self):
        if self.inner_steps < 1:
            raise ValueError(f"inner_steps must be >= 1, got {self.inner_steps}")
        if self.inner_lr < 0:
            raise ValueError(f"inner_lr must be >= 0, got {self.inner_lr}")
        if not self.meta_lr > 0:
            raise ValueError(f"meta_lr must be > 0, got {self.meta_lr}")
        if self.meta_batch_size < 1:
            raise ValueError(f"meta_batch_size must be >= 1, got {self.meta_batch_size}")
        if self.meta_iterations < 0:
            raise ValueError(f"meta_iterations must be >= 0, got {self.meta_iterations}")
        if self.meta_grad_mode not in _MODES:
            raise ValueError(f"meta_grad_mode must be one of {_MODES}, got {self.meta_grad_mode!r}")


@dataclass
class MetaLearner:
    phi: ParamVector
    config: MetaConfig
    history: list[tuple[int, float]] = field(default_factory=list)


def _adapt_trajectory(phi: ParamVector, support: Batch, inner_steps: int,
                      inner_lr: float) -> list[ParamVector]:
    """[theta_0 = phi, theta_1, ..., theta_K] under full-batch SGD on support."""
    if len(support) < 1:
        raise ValueError("support set must be non-empty")
    if inner_lr == 0.0:
        return [phi] * (inner_steps + 1)
    cfg = SgdConfig(learning_rate=inner_lr)
    trajectory = [phi]
    theta = phi
    for _ in range(inner_steps):
        theta = sgd_step(theta, grad(theta, support), cfg)
        trajectory.append(theta)
    return trajectory


def adapt_base(phi: ParamVector, support: Batch, inner_steps: int,
               inner_lr: float) -> ParamVector:
    """Adapted parameters: inner_steps full-batch SGD steps from phi."""
    return _adapt_trajectory(phi, support, inner_steps, inner_lr)[-1]


def _task_meta_gradient(phi: ParamVector, support: Batch, query: Batch,
                        cfg: MetaConfig) -> tuple[ParamVector, float]:
    """Single-task meta-gradient plus the query loss at the adapted point."""
    if len(query) < 1:
        raise ValueError("query set must be non-empty")
    trajectory = _adapt_trajectory(phi, support, cfg.inner_steps, cfg.inner_lr)
    theta = trajectory[-1]
    query_loss = loss_mae(theta, query)
    g = grad(theta, query)
    if cfg.meta_grad_mode == "first_order" or cfg.inner_lr == 0.0:
        return g, query_loss
    v = g
    for theta_k in reversed(trajectory[:-1]):
        v = ParamVector(v.values - cfg.inner_lr * hvp(theta_k, support, v).values, phi.spec)
    return v, query_loss


def meta_gradient(phi: ParamVector, support: Batch, query: Batch,
                  cfg: MetaConfig) -> ParamVector:
    """Gradient of the post-adaptation query loss with respect to phi."""
    return _task_meta_gradient(phi, support, query, cfg)[0]


def train_meta_on_tasks(sample_tasks: TaskSampler, cfg: MetaConfig,
                        spec: MlpSpec) -> MetaLearner:
    """Core meta-training loop over an arbitrary task source.

    The sampler is called once per outer iteration with a generator that is
    the single source of randomness, so identical (sampler, cfg, spec) runs
    are bit-reproducible.
    """
    seed_seq = np.random.SeedSequence([int(cfg.seed), 0x6D657461])
    init_seed, stream_seed = (int(s) for s in seed_seq.generate_state(2))
    rng = np.random.default_rng(stream_seed)

    phi = init_params(spec, init_seed)
    adam = AdamState.init(len(phi), learning_rate=cfg.meta_lr)
    history: list[tuple[int, float]] = []

    for it in range(cfg.meta_iterations):
        tasks = sample_tasks(it, rng)
        if not tasks:
            raise ValueError(f"no usable tasks at meta-iteration {it}")
        grad_sum = np.zeros(len(phi))
        losses = []
        for support, query in tasks:
            task_grad, query_loss = _task_meta_gradient(phi, support, query, cfg)
            grad_sum += task_grad.values  # sum over tasks; beta absorbs the scale
            losses.append(query_loss)
        phi, adam = adam_step(adam, phi, ParamVector(grad_sum, spec))
        history.append((it, float(np.mean(losses))))

    return MetaLearner(phi=phi, config=cfg, history=history)


def train_meta(sources: Sequence[dataio.SiteDataset], cfg: MetaConfig,
               spec: MlpSpec | None = None,
               stats: dataio.NormStats | None = None) -> MetaLearner:
    """Meta-train on source sites, resampling support/query windows each
    iteration. Sites too short for the windows are skipped with a warning;
    an iteration where every sampled site is unusable is a configuration
    error. stats=None fits normalization on the pooled source records."""
    if not sources:
        raise ValueError("need at least one source site")
    if cfg.meta_batch_size > len(sources):
        raise ValueError(
            f"meta_batch_size {cfg.meta_batch_size} exceeds {len(sources)} source sites"
        )
    if spec is None:
        spec = MlpSpec()
    if stats is None:
        pooled = [r for site in sources for r in site.records]
        stats = dataio.fit_norm(pooled)

    def sample_tasks(it: int, rng: np.random.Generator) -> list[tuple[Batch, Batch]]:
        picked = rng.choice(len(sources), size=cfg.meta_batch_size, replace=False)
        tasks = []
        # fixed site-index order keeps the gradient reduction deterministic
        for site_idx in sorted(int(i) for i in picked):
            window_seed = int(rng.integers(0, 2**63))
            site = sources[site_idx]
            try:
                split = dataio.sample_support_query(
                    site, cfg.support_hours, cfg.query_hours, window_seed, stats=stats
                )
            except dataio.InsufficientDataError as exc:
                log.warning("skipping site %s at iteration %d: %s", site.site_id, it, exc)
                continue
            tasks.append((split.support, split.query))
        return tasks

    return train_meta_on_tasks(sample_tasks, cfg, spec)


def deploy_target(learner: MetaLearner, target_train: Batch, target_val: Batch | None,
                  cfg: MetaConfig) -> ParamVector:
    """Adapt phi at a target with SGD, early-stopped on validation loss.

    Validation is checked at every step, phi itself included as the step-0
    candidate; stops after `deploy_patience` consecutive non-improving
    checks or `deploy_step_cap` steps. Returns the best-validation
    parameters (the final ones when no validation set is given).
    """
    if len(target_train) < 1:
        raise ValueError("target training set must be non-empty")
    sgd = SgdConfig(cfg.inner_lr) if cfg.inner_lr > 0 else None
    theta = learner.phi
    if target_val is None:
        for _ in range(cfg.deploy_step_cap):
            if sgd is None:
                break
            theta = sgd_step(theta, grad(theta, target_train), sgd)
        return theta

    best = theta
    best_loss = loss_mae(theta, target_val)
    stale = 0
    for _ in range(cfg.deploy_step_cap):
        if sgd is None:
            break
        theta = sgd_step(theta, grad(theta, target_train), sgd)
        val_loss = loss_mae(theta, target_val)
        if val_loss < best_loss:
            best, best_loss, stale = theta, val_loss, 0
        else:
            stale += 1
            if stale >= cfg.deploy_patience:
                break
    return best
