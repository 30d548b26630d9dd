"""Ranking metrics and the experiment harness: repeated cold-start runs,
ablation variants, and hyperparameter sweeps."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset_io import Dataset
from .hypergraph import NodeSpace, build_operators
from .metalearn import MetaConfig, cold_start_eval_adapt, train
from .model import ModelConfig, init_params, predict_scores, propagate, task_loss
from .records import DataError
from .sessions import MetaTask, SplitStats, build_meta_tasks, split_sessions

ABLATION_VARIANTS = ("full", "wo_tb", "wo_sf", "wo_up", "wo_dm")
_DROPPED_RELATION = {"wo_tb": "temporal", "wo_sf": "spatial", "wo_up": "preference"}


@dataclass(frozen=True)
class AblationSpec:
    variant: str = "full"

    def __post_init__(self) -> None:
        if self.variant not in ABLATION_VARIANTS:
            raise DataError(f"unknown ablation variant {self.variant!r}; expected one of {ABLATION_VARIANTS}")

    @property
    def drop_relation(self) -> str | None:
        return _DROPPED_RELATION.get(self.variant)

    @property
    def fixed_rate(self) -> bool:
        return self.variant == "wo_dm"


def recall_at_k(ranked, truth: int, k: int) -> float:
    """1.0 iff the true item appears in the first k ranked entries."""
    if k < 1:
        raise DataError(f"k must be positive, got {k}")
    return 1.0 if truth in list(ranked)[:k] else 0.0


def ndcg_at_k(ranked, truth: int, k: int) -> float:
    """1/log2(rank+1) when the truth ranks within k (1-based), else 0.

    Single ground-truth normalization: the ideal DCG is 1.
    """
    if k < 1:
        raise DataError(f"k must be positive, got {k}")
    head = list(ranked)[:k]
    if truth not in head:
        return 0.0
    rank = head.index(truth) + 1
    return 1.0 / math.log2(rank + 1)


def rank_of(scores: np.ndarray, truth: int) -> int:
    """1-based rank of `truth` under descending score, ties by ascending id."""
    scores = np.asarray(scores).ravel()
    s = scores[truth]
    better = int(np.sum(scores > s))
    tied_before = int(np.sum(scores[:truth] == s))
    return 1 + better + tied_before


def ranking_from_scores(scores: np.ndarray, k: int | None = None) -> np.ndarray:
    """Item ids ordered by descending score, ties broken by ascending id."""
    scores = np.asarray(scores).ravel()
    order = np.lexsort((np.arange(scores.size), -scores))
    return order if k is None else order[:k]


def metrics_from_scores(scores: np.ndarray, truth: int, ks) -> dict[int, tuple[float, float]]:
    """Engine path: per-k (recall, ndcg) computed from the rank directly."""
    r = rank_of(scores, truth)
    out = {}
    for k in ks:
        if k < 1:
            raise DataError(f"k must be positive, got {k}")
        hit = r <= k
        out[k] = (1.0 if hit else 0.0, 1.0 / math.log2(r + 1) if hit else 0.0)
    return out


def config_fingerprint(config: dict) -> str:
    """Stable hash of a fully resolved configuration."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


@dataclass
class MetricsReport:
    ks: list[int]
    recall: dict[int, float]
    ndcg: dict[int, float]
    instance_count: int
    per_user: dict[int, dict[str, float]]
    fingerprint: str
    config: dict = field(default_factory=dict)
    zero_shot_users: int = 0

    def to_dict(self) -> dict:
        return {
            "ks": self.ks,
            "recall": {str(k): v for k, v in self.recall.items()},
            "ndcg": {str(k): v for k, v in self.ndcg.items()},
            "instance_count": self.instance_count,
            "zero_shot_users": self.zero_shot_users,
            "per_user": {str(u): m for u, m in self.per_user.items()},
            "fingerprint": self.fingerprint,
            "config": self.config,
        }


@dataclass
class ExperimentResult:
    reports: list[MetricsReport]
    mean_recall: dict[int, float]
    std_recall: dict[int, float]
    mean_ndcg: dict[int, float]
    std_ndcg: dict[int, float]
    fingerprint: str
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "repeats": len(self.reports),
            "mean_recall": {str(k): v for k, v in self.mean_recall.items()},
            "std_recall": {str(k): v for k, v in self.std_recall.items()},
            "mean_ndcg": {str(k): v for k, v in self.mean_ndcg.items()},
            "std_ndcg": {str(k): v for k, v in self.std_ndcg.items()},
            "fingerprint": self.fingerprint,
            "config": self.config,
            "runs": [r.to_dict() for r in self.reports],
        }


def split_test_users(users: list[int], test_fraction: float, seed: int) -> tuple[list[int], list[int]]:
    """Seeded disjoint train/test user split; at least one user on each side."""
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must be in (0, 1), got {test_fraction}")
    order = np.array(sorted(users))
    rng = np.random.default_rng(seed)
    rng.shuffle(order)
    n_test = max(1, int(round(test_fraction * len(order))))
    n_test = min(n_test, len(order) - 1)
    test = sorted(int(u) for u in order[:n_test])
    trainers = sorted(int(u) for u in order[n_test:])
    return trainers, test


def evaluate_tasks(
    params,
    ops,
    test_tasks: list[MetaTask],
    meta_cfg: MetaConfig,
    ks,
    config: dict,
) -> MetricsReport:
    """Cold-start adaptation plus ranking metrics over query instances."""
    recall_acc = {k: [] for k in ks}
    ndcg_acc = {k: [] for k in ks}
    per_user: dict[int, dict[str, float]] = {}
    zero_shot = 0
    loss_fn = lambda p, inst: task_loss(p, ops, inst)
    for task in sorted(test_tasks, key=lambda t: t.user):
        theta, info = cold_start_eval_adapt(params, task, meta_cfg, loss_fn)
        if info["zero_shot"]:
            zero_shot += 1
        emb = propagate(theta, ops)
        scores = predict_scores(theta, ops, task.query, emb=emb)
        user_metrics = {f"recall@{k}": [] for k in ks} | {f"ndcg@{k}": [] for k in ks}
        for i, ins in enumerate(task.query):
            per_k = metrics_from_scores(scores[i], ins.next_poi, ks)
            for k, (rec, nd) in per_k.items():
                recall_acc[k].append(rec)
                ndcg_acc[k].append(nd)
                user_metrics[f"recall@{k}"].append(rec)
                user_metrics[f"ndcg@{k}"].append(nd)
        per_user[task.user] = {name: float(np.mean(vals)) for name, vals in user_metrics.items()}
    n_instances = len(next(iter(recall_acc.values()))) if recall_acc else 0
    return MetricsReport(
        ks=list(ks),
        recall={k: float(np.mean(v)) if v else 0.0 for k, v in recall_acc.items()},
        ndcg={k: float(np.mean(v)) if v else 0.0 for k, v in ndcg_acc.items()},
        instance_count=n_instances,
        per_user=per_user,
        fingerprint=config_fingerprint(config),
        config=config,
        zero_shot_users=zero_shot,
    )


def single_run(dataset: Dataset, config: dict, ablation: AblationSpec, seed: int) -> MetricsReport:
    """One end-to-end train + cold-start evaluation pass at one seed.

    The hypergraph is built from the training users' check-ins plus the
    held-out users' support-period check-ins only, so query behavior never
    leaks into the graph.
    """
    vocab, records = dataset.vocab, dataset.records
    run_cfg = dict(config, seed=seed, ablation=ablation.variant)

    stats = SplitStats()
    trajectories = split_sessions(records, local_time=bool(config.get("local_time", False)), stats=stats)
    tasks = build_meta_tasks(trajectories, float(config["support_fraction"]), stats=stats)
    if len(tasks) < 2:
        raise DataError("need at least 2 tasks to split train/test users")
    train_users, test_users = split_test_users(
        [t.user for t in tasks], float(config["test_fraction"]), seed
    )
    test_set = set(test_users)
    train_tasks = [t for t in tasks if t.user not in test_set]
    test_tasks = [t for t in tasks if t.user in test_set]

    graph_records = [r for r in records if r.user not in test_set]
    for t in test_tasks:
        graph_records.extend(t.support_records)

    nodes = NodeSpace.from_vocab(vocab)
    ops = build_operators(graph_records, vocab, float(config["delta_km"]), nodes, drop=ablation.drop_relation)

    model_cfg = ModelConfig(
        dim=int(config["dim"]),
        layers=int(config["layers"]),
        residual=bool(config["residual"]),
        leaky_slope=float(config["leaky_slope"]),
        seed=seed,
    )
    params = init_params(nodes, model_cfg)
    meta_cfg = MetaConfig(
        alpha0=float(config["alpha0"]),
        beta_ent=float(config["beta_ent"]),
        beta_outer=float(config["beta_outer"]),
        inner_steps=int(config["inner_steps"]),
        meta_batch=int(config["meta_batch"]),
        epochs=int(config["epochs"]),
        seed=seed,
        clip_norm=float(config["clip_norm"]),
        fixed_rate=ablation.fixed_rate,
        threads=int(config.get("threads", 1)),
    )
    loss_fn = lambda p, inst: task_loss(p, ops, inst)
    if meta_cfg.epochs > 0:
        params, _ = train(params, train_tasks, meta_cfg, loss_fn)
    ks = [int(k) for k in config["eval_ks"]]
    return evaluate_tasks(params, ops, test_tasks, meta_cfg, ks, run_cfg)


def run_experiment(
    dataset: Dataset,
    config: dict,
    ablation: AblationSpec = AblationSpec("full"),
    repeats: int = 1,
) -> ExperimentResult:
    """Repeat single_run with derived seeds and aggregate mean and std."""
    if repeats < 1:
        raise DataError(f"repeats must be at least 1, got {repeats}")
    base_seed = int(config["seed"])
    reports = [single_run(dataset, config, ablation, base_seed + i) for i in range(repeats)]
    ks = reports[0].ks

    def agg(values: list[float]) -> tuple[float, float]:
        mean = float(np.mean(values))
        std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
        return mean, std

    mean_recall, std_recall, mean_ndcg, std_ndcg = {}, {}, {}, {}
    for k in ks:
        mean_recall[k], std_recall[k] = agg([r.recall[k] for r in reports])
        mean_ndcg[k], std_ndcg[k] = agg([r.ndcg[k] for r in reports])
    exp_cfg = dict(config, ablation=ablation.variant, repeats=repeats)
    return ExperimentResult(
        reports=reports,
        mean_recall=mean_recall,
        std_recall=std_recall,
        mean_ndcg=mean_ndcg,
        std_ndcg=std_ndcg,
        fingerprint=config_fingerprint(exp_cfg),
        config=exp_cfg,
    )


def run_ablations(dataset: Dataset, config: dict, repeats: int = 1) -> dict[str, ExperimentResult]:
    """Run every ablation variant under identical seeds and data."""
    return {
        variant: run_experiment(dataset, config, AblationSpec(variant), repeats)
        for variant in ABLATION_VARIANTS
    }


SWEEPABLE = ("inner_steps", "delta_km")


def sweep(
    dataset: Dataset,
    parameter: str,
    values: list,
    config: dict,
    repeats: int = 1,
) -> list[tuple[float, ExperimentResult]]:
    """run_experiment once per parameter value, everything else fixed."""
    if parameter not in SWEEPABLE:
        raise DataError(f"cannot sweep {parameter!r}; expected one of {SWEEPABLE}")
    if len(values) < 2:
        raise DataError(f"sweep needs at least 2 values, got {len(values)}")
    out = []
    for v in values:
        cfg = dict(config)
        cfg[parameter] = int(v) if parameter == "inner_steps" else float(v)
        out.append((float(v), run_experiment(dataset, cfg, AblationSpec("full"), repeats)))
    return out


def write_sweep_csv(results: list[tuple[float, ExperimentResult]], path: str | Path) -> None:
    ks = results[0][1].reports[0].ks
    header = ["param_value"]
    for k in ks:
        header += [f"recall@{k}", f"ndcg@{k}"]
    for k in ks:
        header += [f"std_recall@{k}", f"std_ndcg@{k}"]
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for value, res in results:
            row = [value]
            for k in ks:
                row += [res.mean_recall[k], res.mean_ndcg[k]]
            for k in ks:
                row += [res.std_recall[k], res.std_ndcg[k]]
            writer.writerow(row)
