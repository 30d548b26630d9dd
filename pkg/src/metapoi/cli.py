"""Command-line interface: preprocess, synth, train, eval, ablate, sweep.

Exit codes: 0 success, 2 input/config error, 3 I/O error, 4 numeric
divergence.  Every command is deterministic given its config (seed
included) and input files.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import CheckpointError, save_params
from .config import ConfigError, RunConfig, as_dict, apply_overrides, help_text, load_config, parse_ks
from .dataset_io import Dataset, load_dataset, save_dataset
from .evaluate import (
    ABLATION_VARIANTS,
    AblationSpec,
    run_ablations,
    run_experiment,
    sweep,
    write_sweep_csv,
)
from .hypergraph import NodeSpace, build_operators
from .ingest import ingest_checkins
from .metalearn import DivergenceError, MetaConfig, train
from .model import ModelConfig, init_params, task_loss
from .autodiff import NonFiniteError
from .records import DataError
from .sessions import SplitStats, build_meta_tasks, category_entropy, split_sessions
from .synthetic import SynthConfig, generate_synthetic, routine_user_count

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_IO = 3
EXIT_DIVERGED = 4


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None, help="key = value config file")
    p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one config key; wins over the file, repeatable",
    )


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config, args.overrides)
    if getattr(args, "threads", None):
        apply_overrides(cfg, [f"threads={args.threads}"])
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metapoi",
        description="next-POI recommendation experiments on heterogeneous check-in hypergraphs",
        epilog=help_text(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"metapoi {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="parse a raw check-in TSV into a dataset file")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_config_args(p)

    p = sub.add_parser("synth", help="generate a synthetic check-in dataset")
    p.add_argument("--out", type=Path, required=True)
    _add_config_args(p)

    p = sub.add_parser("train", help="meta-train on a dataset and write a checkpoint")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--log", type=Path, default=None, help="JSON-lines epoch log (default: <out>.log.jsonl)")
    p.add_argument("--threads", type=int, default=None)
    _add_config_args(p)

    p = sub.add_parser("eval", help="run the cold-start evaluation protocol")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="metrics report JSON")
    p.add_argument("--ablation", choices=ABLATION_VARIANTS, default="full")
    p.add_argument("--threads", type=int, default=None)
    _add_config_args(p)

    p = sub.add_parser("ablate", help="run all ablation variants")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="combined report JSON")
    p.add_argument("--threads", type=int, default=None)
    _add_config_args(p)

    p = sub.add_parser("sweep", help="sweep one hyperparameter")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--param", choices=("inner_steps", "delta_km"), required=True)
    p.add_argument("--values", required=True, help="comma-separated values, at least two")
    p.add_argument("--out", type=Path, required=True, help="CSV curve")
    p.add_argument("--threads", type=int, default=None)
    _add_config_args(p)

    return parser


def cmd_preprocess(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    vocab, records = ingest_checkins(
        args.input, slot_count=cfg.slot_count, local_time=cfg.local_time
    )
    stats = SplitStats()
    trajectories = split_sessions(records, local_time=cfg.local_time, stats=stats)
    tasks = build_meta_tasks(trajectories, cfg.support_fraction, stats=stats)
    save_dataset(Dataset(vocab=vocab, records=records), args.out)
    print(
        f"users={vocab.user_count} pois={vocab.poi_count} categories={vocab.category_count} "
        f"records={len(records)} sessions={stats.sessions} dropped_short={stats.dropped_short} "
        f"tasks={len(tasks)} excluded_users={stats.excluded_users}"
    )
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    scfg = SynthConfig(
        n_users=cfg.synth_users,
        n_pois=cfg.synth_pois,
        n_categories=cfg.synth_categories,
        grid_extent_km=cfg.grid_extent_km,
        fraction_routine=cfg.fraction_routine,
        routine_category_count=cfg.routine_categories,
        explorer_category_count=cfg.explorer_categories,
        days_per_user=cfg.days_per_user,
        checkins_per_day=cfg.checkins_per_day,
        poi_noise=cfg.poi_noise,
        time_consistency=cfg.time_consistency,
        uniform_pois=cfg.uniform_pois,
        slot_count=cfg.slot_count,
        seed=cfg.seed,
    )
    vocab, records = generate_synthetic(scfg)
    save_dataset(Dataset(vocab=vocab, records=records), args.out)
    n_routine = routine_user_count(scfg)
    per_user: dict[int, list] = {}
    for r in records:
        per_user.setdefault(r.user, []).append(r)
    entropies = [category_entropy(rs) for _, rs in sorted(per_user.items())]
    routine_h = entropies[:n_routine]
    explorer_h = entropies[n_routine:]
    print(
        f"users={cfg.synth_users} routine={n_routine} explorer={cfg.synth_users - n_routine} "
        f"records={len(records)} "
        f"routine_entropy_mean={float(np.mean(routine_h)) if routine_h else 0.0:.4f} "
        f"explorer_entropy_mean={float(np.mean(explorer_h)) if explorer_h else 0.0:.4f}"
    )
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    dataset = load_dataset(args.data)
    stats = SplitStats()
    trajectories = split_sessions(dataset.records, local_time=cfg.local_time, stats=stats)
    tasks = build_meta_tasks(trajectories, cfg.support_fraction, stats=stats)
    if not tasks:
        raise DataError("no usable meta-task in this dataset")

    nodes = NodeSpace.from_vocab(dataset.vocab)
    ops = build_operators(dataset.records, dataset.vocab, cfg.delta_km, nodes)
    params = init_params(
        nodes,
        ModelConfig(dim=cfg.dim, layers=cfg.layers, residual=cfg.residual, leaky_slope=cfg.leaky_slope, seed=cfg.seed),
    )
    meta_cfg = MetaConfig(
        alpha0=cfg.alpha0,
        beta_ent=cfg.beta_ent,
        beta_outer=cfg.beta_outer,
        inner_steps=cfg.inner_steps,
        meta_batch=cfg.meta_batch,
        epochs=cfg.epochs,
        seed=cfg.seed,
        clip_norm=cfg.clip_norm,
        threads=cfg.threads,
    )
    log: list[dict] = []
    if meta_cfg.epochs > 0:
        params, log = train(params, tasks, meta_cfg, lambda p, inst: task_loss(p, ops, inst))
    save_params(params, args.out)
    log_path = args.log if args.log is not None else Path(f"{args.out}.log.jsonl")
    with log_path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"config": as_dict(cfg)}, sort_keys=True) + "\n")
        for entry in log:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    last = log[-1]["mean_query_loss"] if log else float("nan")
    print(f"tasks={len(tasks)} epochs={meta_cfg.epochs} final_query_loss={last:.6f} checkpoint={args.out}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    dataset = load_dataset(args.data)
    result = run_experiment(dataset, as_dict(cfg), AblationSpec(args.ablation), repeats=cfg.repeats)
    args.out.write_text(json.dumps(result.to_dict(), sort_keys=True, indent=2), encoding="utf-8")
    ks = parse_ks(cfg.eval_ks)
    summary = " ".join(
        f"recall@{k}={result.mean_recall[k]:.4f}+-{result.std_recall[k]:.4f} "
        f"ndcg@{k}={result.mean_ndcg[k]:.4f}+-{result.std_ndcg[k]:.4f}"
        for k in ks
    )
    print(f"ablation={args.ablation} repeats={cfg.repeats} {summary}")
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    dataset = load_dataset(args.data)
    results = run_ablations(dataset, as_dict(cfg), repeats=cfg.repeats)
    payload = {variant: res.to_dict() for variant, res in results.items()}
    args.out.write_text(json.dumps(payload, sort_keys=True, indent=2), encoding="utf-8")
    ks = parse_ks(cfg.eval_ks)
    k0 = ks[0]
    for variant in ABLATION_VARIANTS:
        res = results[variant]
        print(f"{variant:<6} recall@{k0}={res.mean_recall[k0]:.4f}+-{res.std_recall[k0]:.4f}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    dataset = load_dataset(args.data)
    raw_values = [v for v in args.values.split(",") if v.strip()]
    values = [int(v) if args.param == "inner_steps" else float(v) for v in raw_values]
    results = sweep(dataset, args.param, values, as_dict(cfg), repeats=cfg.repeats)
    write_sweep_csv(results, args.out)
    k0 = parse_ks(cfg.eval_ks)[0]
    for value, res in results:
        print(f"{args.param}={value} recall@{k0}={res.mean_recall[k0]:.4f}+-{res.std_recall[k0]:.4f}")
    return EXIT_OK


_COMMANDS = {
    "preprocess": cmd_preprocess,
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "sweep": cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (DataError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except NonFiniteError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, CheckpointError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
