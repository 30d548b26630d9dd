"""Diversity-aware meta-learning: entropy-driven inner rates, first-order
inner/outer loops, and the cold-start adaptation used at evaluation time.

The inner rate for a user with category-visit entropy H is

    rate = alpha0 * sigmoid(beta_ent * H)

so low-diversity users adapt at half the base rate and high-diversity
users approach the full base rate.  The outer loop applies the query-set
gradients evaluated at the adapted parameters directly to the shared
initialization (first-order approximation).
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit

from .autodiff import NonFiniteError, Tape, Tensor
from .model import ModelParams
from .records import CheckinRecord, DataError
from .sessions import Instance, MetaTask, category_entropy

LossFn = Callable[[ModelParams, list[Instance]], Tensor]


class DivergenceError(RuntimeError):
    """Training aborted because the query loss blew past its initial value."""


@dataclass
class MetaConfig:
    alpha0: float = 0.1
    beta_ent: float = 1.0
    beta_outer: float = 1e-3
    inner_steps: int = 1
    meta_batch: int = 8
    epochs: int = 30
    seed: int = 7
    clip_norm: float = 5.0
    fixed_rate: bool = False  # wo_dm ablation: rate = alpha0 for everyone
    threads: int = 1
    divergence_factor: float = 10.0

    def validate(self) -> None:
        if min(self.alpha0, self.beta_ent, self.beta_outer) <= 0:
            raise DataError("all meta-learning rates must be positive")
        if self.inner_steps < 1:
            raise DataError("inner_steps must be at least 1")
        if self.meta_batch < 1:
            raise DataError("meta_batch must be at least 1")
        if self.epochs < 0:
            raise DataError("epochs must be nonnegative")
        if self.threads < 1:
            raise DataError("threads must be at least 1")


@dataclass
class AdaptResult:
    user: int
    adapted: ModelParams
    support_loss_pre: float
    support_loss_post: float
    query_loss: float
    query_grads: dict[str, np.ndarray]
    inner_rate: float


def behavior_entropy(records: list[CheckinRecord]) -> float:
    """Category-visit entropy in nats; see sessions.category_entropy."""
    return category_entropy(records)


def adaptive_rate(entropy: float, alpha0: float, beta_ent: float) -> float:
    """alpha0 * sigmoid(beta_ent * entropy); exactly alpha0/2 at zero entropy."""
    if entropy < 0:
        raise DataError(f"entropy must be nonnegative, got {entropy}")
    return float(alpha0 * expit(beta_ent * entropy))


def resolve_rate(task: MetaTask, cfg: MetaConfig) -> float:
    if cfg.fixed_rate:
        return cfg.alpha0
    return adaptive_rate(task.entropy, cfg.alpha0, cfg.beta_ent)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    """Scale the whole gradient set so its global L2 norm is <= max_norm."""
    if max_norm <= 0:
        return grads
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    norm = np.sqrt(total)
    if norm <= max_norm:
        return grads
    factor = max_norm / norm
    return {name: g * factor for name, g in grads.items()}


def _loss_and_grads(theta: ModelParams, instances: list[Instance], loss_fn: LossFn) -> tuple[float, dict[str, np.ndarray]]:
    theta.zero_grads()
    with Tape() as tape:
        loss = loss_fn(theta, instances)
        tape.backward(loss)
    value = loss.item()
    if not np.isfinite(value):
        raise NonFiniteError(f"non-finite loss {value}")
    return value, theta.grads()


def adapt_on_support(
    params: ModelParams,
    support: list[Instance],
    rate: float,
    cfg: MetaConfig,
    loss_fn: LossFn,
) -> tuple[ModelParams, float, float]:
    """Take cfg.inner_steps gradient steps on the support loss.

    Returns (adapted params, loss before the first step, loss after the
    last step).  The master parameter set is never mutated.
    """
    if not support:
        raise DataError("support set is empty")
    theta = params.clone()
    loss_pre = None
    for _ in range(cfg.inner_steps):
        value, grads = _loss_and_grads(theta, support, loss_fn)
        if loss_pre is None:
            loss_pre = value
        grads = clip_gradients(grads, cfg.clip_norm)
        theta = theta.stepped(grads, rate)
    loss_post = loss_fn(theta, support).item()
    return theta, float(loss_pre), float(loss_post)


def inner_adapt(params: ModelParams, task: MetaTask, cfg: MetaConfig, loss_fn: LossFn) -> AdaptResult:
    """Adapt on the task's support set and evaluate the query gradient."""
    rate = task.inner_rate if task.inner_rate is not None else resolve_rate(task, cfg)
    task.inner_rate = rate
    theta, loss_pre, loss_post = adapt_on_support(params, task.support, rate, cfg, loss_fn)
    query_loss, query_grads = _loss_and_grads(theta, task.query, loss_fn)
    return AdaptResult(
        user=task.user,
        adapted=theta,
        support_loss_pre=loss_pre,
        support_loss_post=loss_post,
        query_loss=query_loss,
        query_grads=query_grads,
        inner_rate=rate,
    )


def outer_step(params: ModelParams, results: list[AdaptResult], beta_outer: float, clip_norm: float = 5.0) -> ModelParams:
    """Apply the summed query gradients to the shared initialization.

    Summation runs in ascending user id so the update is independent of
    scheduling order.
    """
    if not results:
        raise DataError("outer step with an empty batch")
    total: dict[str, np.ndarray] | None = None
    for res in sorted(results, key=lambda r: r.user):
        if total is None:
            total = {name: g.copy() for name, g in res.query_grads.items()}
        else:
            for name, g in res.query_grads.items():
                total[name] += g
    total = clip_gradients(total, clip_norm)
    params.apply_step(total, beta_outer)
    return params


def train(
    params: ModelParams,
    tasks: list[MetaTask],
    cfg: MetaConfig,
    loss_fn: LossFn,
) -> tuple[ModelParams, list[dict]]:
    """Run the full meta-training loop; returns (params, per-epoch log).

    Each epoch shuffles tasks with the seeded generator, adapts every
    task, and applies one outer step per meta-batch.  Aborts with
    DivergenceError when the mean query loss exceeds ten times its
    initial value.
    """
    cfg.validate()
    usable = [t for t in tasks if t.support and t.query]
    if not usable:
        raise DataError("no task has both a support and a query set")
    for task in usable:
        task.inner_rate = resolve_rate(task, cfg)

    rng = np.random.default_rng(cfg.seed)
    log: list[dict] = []
    initial_query = None
    order = np.arange(len(usable))
    for epoch in range(cfg.epochs):
        started = time.perf_counter()
        rng.shuffle(order)
        results_all: list[AdaptResult] = []
        for lo in range(0, len(order), cfg.meta_batch):
            batch = [usable[i] for i in order[lo : lo + cfg.meta_batch]]
            if cfg.threads > 1 and len(batch) > 1:
                with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                    results = list(pool.map(lambda t: inner_adapt(params, t, cfg, loss_fn), batch))
            else:
                results = [inner_adapt(params, t, cfg, loss_fn) for t in batch]
            outer_step(params, results, cfg.beta_outer, cfg.clip_norm)
            results_all.extend(results)

        entry = {
            "epoch": epoch,
            "mean_support_loss_pre": float(np.mean([r.support_loss_pre for r in results_all])),
            "mean_support_loss_post": float(np.mean([r.support_loss_post for r in results_all])),
            "mean_query_loss": float(np.mean([r.query_loss for r in results_all])),
            "mean_alpha_u": float(np.mean([r.inner_rate for r in results_all])),
            "wall_ms": (time.perf_counter() - started) * 1000.0,
        }
        log.append(entry)
        if initial_query is None:
            initial_query = entry["mean_query_loss"]
        elif entry["mean_query_loss"] > cfg.divergence_factor * initial_query:
            raise DivergenceError(
                f"mean query loss {entry['mean_query_loss']:.4f} exceeded "
                f"{cfg.divergence_factor}x its initial value {initial_query:.4f} at epoch {epoch}"
            )
    return params, log


def cold_start_eval_adapt(
    params: ModelParams,
    task: MetaTask,
    cfg: MetaConfig,
    loss_fn: LossFn,
) -> tuple[ModelParams, dict]:
    """Adapt a held-out user on their support set only.

    Entropy comes from the support-period check-ins; the query set is
    never touched here.  An empty support set falls back to the shared
    initialization and is flagged zero-shot.
    """
    if not task.support:
        return params.clone(), {"user": task.user, "zero_shot": True, "inner_rate": 0.0, "entropy": 0.0}
    entropy = category_entropy(task.support_records) if task.support_records else 0.0
    rate = cfg.alpha0 if cfg.fixed_rate else adaptive_rate(entropy, cfg.alpha0, cfg.beta_ent)
    theta, loss_pre, loss_post = adapt_on_support(params, task.support, rate, cfg, loss_fn)
    info = {
        "user": task.user,
        "zero_shot": False,
        "entropy": entropy,
        "inner_rate": rate,
        "support_loss_pre": loss_pre,
        "support_loss_post": loss_post,
    }
    return theta, info
