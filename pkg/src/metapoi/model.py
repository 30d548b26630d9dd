"""The differentiable forward model: multi-relation hypergraph layers, an
attention trajectory encoder, and full-vocabulary next-POI scoring.

One layer update, for the stacked global feature matrix X:

    Z_r = A_r X                     (per relation r)
    Z   = sum_r Z_r W_r             (d x d weights on the feature axis)
    H_a = act(Z_a M_a Theta_a + X_a)  per node type a, residual optional

The trajectory encoder concatenates the final-layer poi/category/slot
embeddings per position, scores positions with a 1 x 3d weight row, and
pools with softmax attention.  Scoring concatenates the pooled vector
with the last check-in's poi and category embeddings (5d total) and maps
to |P| logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .hypergraph import NodeSpace, PropagationOperator, RELATIONS
from .sessions import Instance

NODE_TYPES = ("poi", "user", "category", "slot")


@dataclass
class ModelConfig:
    dim: int = 64
    layers: int = 1
    residual: bool = True
    leaky_slope: float = 0.01
    seed: int = 7


class ModelParams:
    """All learnable tensors, keyed by name in a fixed order."""

    def __init__(self, tensors: dict[str, Tensor], cfg: ModelConfig, nodes: NodeSpace):
        self.tensors = tensors
        self.cfg = cfg
        self.nodes = nodes

    @property
    def names(self) -> list[str]:
        return list(self.tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def zero_grads(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        return {
            name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.value))
            for name, t in self.tensors.items()
        }

    def clone(self) -> "ModelParams":
        return ModelParams(
            {name: Tensor(t.value.copy()) for name, t in self.tensors.items()},
            self.cfg,
            self.nodes,
        )

    def stepped(self, grads: dict[str, np.ndarray], lr: float) -> "ModelParams":
        """New parameter set one gradient step away; self is untouched."""
        return ModelParams(
            {name: Tensor(t.value - lr * grads[name]) for name, t in self.tensors.items()},
            self.cfg,
            self.nodes,
        )

    def apply_step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        """In-place update of the master copy."""
        for name, t in self.tensors.items():
            t.value -= lr * grads[name]

    def allclose(self, other: "ModelParams") -> bool:
        return self.names == other.names and all(
            np.array_equal(self.tensors[n].value, other.tensors[n].value) for n in self.names
        )


def init_params(nodes: NodeSpace, cfg: ModelConfig) -> ModelParams:
    """Seeded uniform init on [-1/sqrt(d), 1/sqrt(d)]; zero output bias."""
    rng = np.random.default_rng(cfg.seed)
    d = cfg.dim
    bound = 1.0 / np.sqrt(d)

    def u(*shape: int) -> Tensor:
        return Tensor(rng.uniform(-bound, bound, size=shape))

    tensors: dict[str, Tensor] = {
        "emb_poi": u(nodes.n_pois, d),
        "emb_user": u(nodes.n_users, d),
        "emb_category": u(nodes.n_categories, d),
        "emb_slot": u(nodes.n_slots, d),
    }
    for layer in range(cfg.layers):
        for rel in RELATIONS:
            tensors[f"w_{rel}_{layer}"] = u(d, d)
        for a in NODE_TYPES:
            tensors[f"m_{a}_{layer}"] = u(d, d)
            tensors[f"theta_{a}_{layer}"] = u(d, d)
    tensors["w_att"] = u(1, 3 * d)
    tensors["w_out"] = u(5 * d, nodes.n_pois)
    tensors["b_out"] = Tensor(np.zeros((1, nodes.n_pois)))
    return ModelParams(tensors, cfg, nodes)


class NodeEmbeddings:
    """Per-layer global embedding matrices in node-space row order."""

    def __init__(self, layers: list[Tensor], nodes: NodeSpace):
        self.layers = layers
        self.nodes = nodes

    @property
    def final(self) -> Tensor:
        return self.layers[-1]

    def poi_rows(self, poi_ids) -> Tensor:
        return ad.gather_rows(self.final, np.asarray(poi_ids, dtype=np.int64))

    def category_rows(self, cat_ids) -> Tensor:
        idx = self.nodes.category_offset + np.asarray(cat_ids, dtype=np.int64)
        return ad.gather_rows(self.final, idx)

    def slot_rows(self, slot_ids) -> Tensor:
        idx = self.nodes.slot_offset + np.asarray(slot_ids, dtype=np.int64)
        return ad.gather_rows(self.final, idx)


def _type_blocks(nodes: NodeSpace) -> list[tuple[str, int, int]]:
    return [
        ("poi", 0, nodes.n_pois),
        ("user", nodes.user_offset, nodes.user_offset + nodes.n_users),
        ("category", nodes.category_offset, nodes.category_offset + nodes.n_categories),
        ("slot", nodes.slot_offset, nodes.slot_offset + nodes.n_slots),
    ]


def propagate(params: ModelParams, ops: dict[str, PropagationOperator | None]) -> NodeEmbeddings:
    """Run all hypergraph layers; returns embeddings for layers 0..L."""
    nodes = params.nodes
    cfg = params.cfg
    x = ad.concat(
        [params["emb_poi"], params["emb_user"], params["emb_category"], params["emb_slot"]],
        axis=0,
    )
    layers = [x]
    for layer in range(cfg.layers):
        z = None
        for rel in RELATIONS:
            op = ops.get(rel)
            if op is None or op.matrix.nnz == 0:
                continue
            term = ad.matmul(ad.sparse_apply(op.matrix, x), params[f"w_{rel}_{layer}"])
            z = term if z is None else ad.add(z, term)
        updated = []
        for a, lo, hi in _type_blocks(nodes):
            rows = np.arange(lo, hi, dtype=np.int64)
            xa = ad.gather_rows(x, rows)
            if z is None:
                pre = xa if cfg.residual else ad.scale(xa, 0.0)
            else:
                za = ad.gather_rows(z, rows)
                msg = ad.matmul(ad.matmul(za, params[f"m_{a}_{layer}"]), params[f"theta_{a}_{layer}"])
                pre = ad.add(msg, xa) if cfg.residual else msg
            updated.append(ad.leaky_relu(pre, cfg.leaky_slope))
        x = ad.concat(updated, axis=0)
        layers.append(x)
    return NodeEmbeddings(layers, nodes)


def encode_trajectory(prefix, emb: NodeEmbeddings, w_att: Tensor) -> tuple[Tensor, Tensor]:
    """Attention-pooled 1 x 3d representation of a check-in prefix.

    Returns (pooled, attention_weights); weights is a 1 x n row summing
    to one.
    """
    if len(prefix) == 0:
        raise ad.ShapeError("cannot encode an empty prefix")
    pois = [r.poi for r in prefix]
    cats = [r.category for r in prefix]
    slots = [r.time_slot for r in prefix]
    feats = ad.concat(
        [emb.poi_rows(pois), emb.category_rows(cats), emb.slot_rows(slots)],
        axis=1,
    )  # n x 3d
    logits = ad.matmul(feats, ad.transpose(w_att))  # n x 1
    alpha = ad.row_softmax(ad.transpose(logits))  # 1 x n
    pooled = ad.weighted_sum(alpha, feats)  # 1 x 3d
    return pooled, alpha


def instance_features(instances, emb: NodeEmbeddings, params: ModelParams) -> Tensor:
    """Stacked n x 5d scoring features, one row per instance."""
    rows = []
    for ins in instances:
        pooled, _ = encode_trajectory(ins.prefix, emb, params["w_att"])
        last = ins.prefix[-1]
        rows.append(
            ad.concat(
                [pooled, emb.poi_rows([last.poi]), emb.category_rows([last.category])],
                axis=1,
            )
        )
    return ad.concat(rows, axis=0)


def score(feats: Tensor, params: ModelParams) -> Tensor:
    """Map n x 5d features to n x |P| next-POI logits."""
    return ad.add_bias(ad.matmul(feats, params["w_out"]), params["b_out"])


def task_loss(
    params: ModelParams,
    ops: dict[str, PropagationOperator | None],
    instances: list[Instance],
) -> Tensor:
    """Mean cross-entropy over instances; one propagation per evaluation."""
    if not instances:
        raise ValueError("task_loss of an empty instance list")
    emb = propagate(params, ops)
    feats = instance_features(instances, emb, params)
    logits = score(feats, params)
    targets = np.array([ins.next_poi for ins in instances], dtype=np.int64)
    return ad.cross_entropy_with_logits(logits, targets)


def predict_scores(
    params: ModelParams,
    ops: dict[str, PropagationOperator | None],
    instances: list[Instance],
    emb: NodeEmbeddings | None = None,
) -> np.ndarray:
    """Value-only n x |P| score matrix for ranking; no tape required."""
    if emb is None:
        emb = propagate(params, ops)
    feats = instance_features(instances, emb, params)
    return score(feats, params).value
