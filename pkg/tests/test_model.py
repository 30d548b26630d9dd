"""Forward-model checks: hand-expanded propagation, attention algebra,
scoring properties, the full gradient check, and checkpoint round-trips."""

import math

import numpy as np
import pytest

from conftest import make_record
from metapoi.autodiff import grad_check
from metapoi.checkpoint import load_params, save_params
from metapoi.hypergraph import NodeSpace, build_operators, build_temporal_edges, normalize, zero_operator
from metapoi.model import (
    ModelConfig,
    encode_trajectory,
    init_params,
    instance_features,
    predict_scores,
    propagate,
    task_loss,
)
from metapoi.records import Vocab
from metapoi.sessions import Instance


@pytest.fixture
def tiny_world(tiny_vocab, tiny_records):
    nodes = NodeSpace.from_vocab(tiny_vocab)
    ops = build_operators(tiny_records, tiny_vocab, 1.0, nodes)
    return tiny_vocab, tiny_records, nodes, ops


def make_instances(records):
    return [
        Instance(prefix=(records[0], records[1]), target=records[2]),
        Instance(prefix=(records[3],), target=records[4]),
    ]


class TestPropagate:
    def test_zero_layers_returns_raw_tables(self, tiny_world):
        vocab, records, nodes, ops = tiny_world
        params = init_params(nodes, ModelConfig(dim=4, layers=0, seed=0))
        emb = propagate(params, ops)
        assert len(emb.layers) == 1
        stacked = np.concatenate(
            [params["emb_poi"].value, params["emb_user"].value, params["emb_category"].value, params["emb_slot"].value]
        )
        np.testing.assert_array_equal(emb.final.value, stacked)

    def test_zero_embeddings_stay_zero(self, tiny_world):
        vocab, records, nodes, ops = tiny_world
        params = init_params(nodes, ModelConfig(dim=4, layers=2, seed=0))
        for name in ("emb_poi", "emb_user", "emb_category", "emb_slot"):
            params[name].value[:] = 0.0
        emb = propagate(params, ops)
        assert np.all(emb.final.value == 0.0)

    def test_single_hyperedge_hand_expansion(self):
        """d=1, one temporal edge over 3 degree-1 nodes: A is the 1/3 block.

        With identity relation/type weights and no residual the update is
        leaky(A x * m * theta) computed here by hand.
        """
        vocab = Vocab(
            user_ids=["u0"], poi_ids=["p0"], category_ids=["c0"],
            poi_category=[0], poi_lat=[40.0], poi_lon=[-74.0], slot_count=1,
        )
        nodes = NodeSpace.from_vocab(vocab)
        rec = make_record(vocab, 0, 0, 0, slot=0)
        ops = {
            "temporal": normalize(build_temporal_edges([rec], nodes)),
            "spatial": None,
            "preference": None,
        }
        params = init_params(nodes, ModelConfig(dim=1, layers=1, residual=False, leaky_slope=0.01, seed=0))
        # node order: p0, u0, c0, t0 with embeddings 1, 5, 2, 3
        params["emb_poi"].value[:] = 1.0
        params["emb_user"].value[:] = 5.0
        params["emb_category"].value[:] = 2.0
        params["emb_slot"].value[:] = 3.0
        params["w_temporal_0"].value[:] = 1.0
        for a in ("poi", "user", "category", "slot"):
            params[f"m_{a}_0"].value[:] = 1.0
            params[f"theta_{a}_0"].value[:] = 1.0
        emb = propagate(params, ops)
        # A x: mean of {p, c, t} = (1+2+3)/3 = 2 on those nodes; u isolated -> 0
        expected = np.array([[2.0], [0.0], [2.0], [2.0]])
        np.testing.assert_allclose(emb.final.value, expected, atol=1e-12)

    def test_zero_operator_equals_dropped_relation(self, tiny_world):
        vocab, records, nodes, ops = tiny_world
        params = init_params(nodes, ModelConfig(dim=4, layers=1, seed=1))
        dropped = dict(ops, spatial=None)
        zeroed = dict(ops, spatial=zero_operator(nodes, "spatial"))
        out_dropped = propagate(params, dropped).final.value
        out_zeroed = propagate(params, zeroed).final.value
        np.testing.assert_array_equal(out_dropped, out_zeroed)

    def test_residual_keeps_layer_zero_information(self, tiny_world):
        vocab, records, nodes, ops = tiny_world
        params = init_params(nodes, ModelConfig(dim=4, layers=1, residual=True, seed=2))
        none_ops = {"temporal": None, "spatial": None, "preference": None}
        emb = propagate(params, none_ops)
        base = np.concatenate(
            [params["emb_poi"].value, params["emb_user"].value, params["emb_category"].value, params["emb_slot"].value]
        )
        slope = params.cfg.leaky_slope
        np.testing.assert_allclose(emb.final.value, np.where(base > 0, base, slope * base), atol=1e-15)


class TestAttention:
    def test_singleton_prefix_gets_weight_one(self, tiny_world):
        vocab, records, nodes, ops = tiny_world
        params = init_params(nodes, ModelConfig(dim=3, layers=1, seed=3))
        emb = propagate(params, ops)
        pooled, alpha = encode_trajectory((records[0],), emb, params["w_att"])
        np.testing.assert_allclose(alpha.value, [[1.0]])
        assert pooled.shape == (1, 9)

    def test_zero_attention_weights_give_uniform(self, tiny_world):
        vocab, records, nodes, ops = tiny_world
        params = init_params(nodes, ModelConfig(dim=3, layers=1, seed=4))
        params["w_att"].value[:] = 0.0
        emb = propagate(params, ops)
        prefix = tuple(records[:3])
        _, alpha = encode_trajectory(prefix, emb, params["w_att"])
        np.testing.assert_allclose(alpha.value, np.full((1, 3), 1 / 3), atol=1e-15)

    def test_two_position_hand_softmax(self):
        """d=1 with pinned embeddings: alpha and the pooled vector by hand."""
        vocab = Vocab(
            user_ids=["u0"], poi_ids=["p0", "p1"], category_ids=["c0"],
            poi_category=[0, 0], poi_lat=[40.0, 40.0], poi_lon=[-74.0, -74.0], slot_count=2,
        )
        nodes = NodeSpace.from_vocab(vocab)
        params = init_params(nodes, ModelConfig(dim=1, layers=0, seed=0))
        params["emb_poi"].value[:] = np.array([[1.0], [0.0]])
        params["emb_category"].value[:] = np.array([[0.0]])
        params["emb_slot"].value[:] = np.array([[2.0], [1.0]])
        params["w_att"].value[:] = np.array([[1.0, 1.0, -1.0]])
        r0 = make_record(vocab, 0, 0, 0, slot=0)   # feats [1, 0, 2] -> logit -1
        r1 = make_record(vocab, 0, 1, 60, slot=1)  # feats [0, 0, 1] -> logit -1
        emb = propagate(params, {"temporal": None, "spatial": None, "preference": None})
        pooled, alpha = encode_trajectory((r0, r1), emb, params["w_att"])
        np.testing.assert_allclose(alpha.value, [[0.5, 0.5]], atol=1e-15)
        np.testing.assert_allclose(pooled.value, [[0.5, 0.0, 1.5]], atol=1e-15)

    def test_weights_sum_to_one_and_nonnegative(self, tiny_world):
        vocab, records, nodes, ops = tiny_world
        params = init_params(nodes, ModelConfig(dim=5, layers=1, seed=5))
        emb = propagate(params, ops)
        _, alpha = encode_trajectory(tuple(records[:3]), emb, params["w_att"])
        assert alpha.value.min() >= 0.0
        assert abs(alpha.value.sum() - 1.0) <= 1e-12

    def test_position_permutation_permutes_weights(self, tiny_world):
        vocab, records, nodes, ops = tiny_world
        params = init_params(nodes, ModelConfig(dim=4, layers=1, seed=6))
        emb = propagate(params, ops)
        prefix = tuple(records[:3])
        _, alpha = encode_trajectory(prefix, emb, params["w_att"])
        perm = (2, 0, 1)
        _, alpha_p = encode_trajectory(tuple(prefix[i] for i in perm), emb, params["w_att"])
        np.testing.assert_allclose(alpha_p.value[0], alpha.value[0][list(perm)], atol=1e-14)


class TestScoring:
    def test_zero_weights_leave_only_bias(self, tiny_world):
        vocab, records, nodes, ops = tiny_world
        params = init_params(nodes, ModelConfig(dim=3, layers=1, seed=7))
        params["w_out"].value[:] = 0.0
        params["b_out"].value[:] = np.array([[0.3, -0.1, 0.5]])
        scores = predict_scores(params, ops, make_instances(records))
        np.testing.assert_allclose(scores, np.tile([[0.3, -0.1, 0.5]], (2, 1)), atol=1e-15)

    def test_constant_logit_shift_keeps_argmax(self, tiny_world):
        vocab, records, nodes, ops = tiny_world
        params = init_params(nodes, ModelConfig(dim=3, layers=1, seed=8))
        scores = predict_scores(params, ops, make_instances(records))
        shifted = scores + 7.5
        assert np.argmax(scores, axis=1).tolist() == np.argmax(shifted, axis=1).tolist()
        # softmax itself is shift invariant
        p = np.exp(scores - scores.max(axis=1, keepdims=True))
        p /= p.sum(axis=1, keepdims=True)
        q = np.exp(shifted - shifted.max(axis=1, keepdims=True))
        q /= q.sum(axis=1, keepdims=True)
        np.testing.assert_allclose(p, q, atol=1e-12)

    def test_reduces_to_inner_product_model(self, tiny_world):
        """L=0 with output rows = [poi table | zeros] scores by dot product
        between the pooled poi part and each candidate's embedding."""
        vocab, records, nodes, ops = tiny_world
        params = init_params(nodes, ModelConfig(dim=3, layers=0, seed=21))
        d = 3
        params["w_out"].value[:] = 0.0
        params["w_out"].value[:d, :] = params["emb_poi"].value.T
        params["b_out"].value[:] = 0.0
        instances = make_instances(records)
        scores = predict_scores(params, ops, instances)
        emb = propagate(params, ops)
        pooled = instance_features(instances, emb, params).value[:, :d]
        np.testing.assert_allclose(scores, pooled @ params["emb_poi"].value.T, atol=1e-12)

    def test_three_poi_hand_softmax(self, tiny_world):
        vocab, records, nodes, ops = tiny_world
        params = init_params(nodes, ModelConfig(dim=2, layers=0, seed=9))
        instances = [make_instances(records)[1]]
        logits = predict_scores(params, ops, instances)[0]
        emb = propagate(params, ops)
        feats = instance_features(instances, emb, params).value
        expected = feats @ params["w_out"].value + params["b_out"].value
        np.testing.assert_allclose(logits, expected[0], atol=1e-12)


class TestTaskLoss:
    def test_uniform_logits_give_log_vocab(self, tiny_world):
        vocab, records, nodes, ops = tiny_world
        params = init_params(nodes, ModelConfig(dim=3, layers=1, seed=10))
        params["w_out"].value[:] = 0.0
        params["b_out"].value[:] = 0.0
        loss = task_loss(params, ops, make_instances(records))
        assert loss.item() == pytest.approx(math.log(vocab.poi_count), abs=1e-12)

    def test_extreme_correct_logits_drive_loss_to_zero(self, tiny_world):
        vocab, records, nodes, ops = tiny_world
        params = init_params(nodes, ModelConfig(dim=3, layers=1, seed=11))
        instance = make_instances(records)[0]
        params["w_out"].value[:] = 0.0
        params["b_out"].value[:] = -50.0
        params["b_out"].value[0, instance.next_poi] = 50.0
        loss = task_loss(params, ops, [instance])
        assert loss.item() < 1e-6

    def test_mean_of_instance_losses(self, tiny_world):
        vocab, records, nodes, ops = tiny_world
        params = init_params(nodes, ModelConfig(dim=3, layers=1, seed=12))
        instances = make_instances(records)
        both = task_loss(params, ops, instances).item()
        singles = [task_loss(params, ops, [ins]).item() for ins in instances]
        assert both == pytest.approx(sum(singles) / 2, abs=1e-12)

    def test_empty_instances_rejected(self, tiny_world):
        vocab, records, nodes, ops = tiny_world
        params = init_params(nodes, ModelConfig(dim=3, layers=1, seed=13))
        with pytest.raises(ValueError):
            task_loss(params, ops, [])


class TestFullGradient:
    def test_full_model_gradient_check(self, tiny_world):
        """Every parameter tensor against central differences, d=4, L=1."""
        vocab, records, nodes, ops = tiny_world
        params = init_params(nodes, ModelConfig(dim=4, layers=1, seed=14))
        instances = make_instances(records)
        tensors = list(params.tensors.values())
        err = grad_check(lambda: task_loss(params, ops, instances), tensors, eps=1e-5)
        assert err < 1e-4


class TestParamsLifecycle:
    def test_clone_is_deep(self, tiny_world):
        vocab, records, nodes, ops = tiny_world
        params = init_params(nodes, ModelConfig(dim=3, layers=1, seed=15))
        other = params.clone()
        other["emb_poi"].value[:] = 99.0
        assert not np.any(params["emb_poi"].value == 99.0)

    def test_stepped_leaves_original(self, tiny_world):
        vocab, records, nodes, ops = tiny_world
        params = init_params(nodes, ModelConfig(dim=3, layers=1, seed=16))
        grads = {name: np.ones_like(t.value) for name, t in params.tensors.items()}
        before = params["w_att"].value.copy()
        stepped = params.stepped(grads, 0.5)
        np.testing.assert_array_equal(params["w_att"].value, before)
        np.testing.assert_allclose(stepped["w_att"].value, before - 0.5)


class TestCheckpoint:
    def test_round_trip_file_is_bit_exact(self, tiny_world, tmp_path):
        vocab, records, nodes, ops = tiny_world
        params = init_params(nodes, ModelConfig(dim=4, layers=2, seed=17))
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_params(params, p1)
        save_params(load_params(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_magic_and_structure(self, tiny_world, tmp_path):
        vocab, records, nodes, ops = tiny_world
        params = init_params(nodes, ModelConfig(dim=4, layers=1, seed=18))
        path = tmp_path / "m.ckpt"
        save_params(params, path)
        blob = path.read_bytes()
        assert blob[:4] == b"HMAN"
        loaded = load_params(path)
        assert loaded.cfg.dim == 4 and loaded.cfg.layers == 1
        assert loaded.names == params.names

    def test_values_survive_via_float32(self, tiny_world, tmp_path):
        vocab, records, nodes, ops = tiny_world
        params = init_params(nodes, ModelConfig(dim=4, layers=1, seed=19))
        path = tmp_path / "v.ckpt"
        save_params(params, path)
        loaded = load_params(path)
        for name in params.names:
            np.testing.assert_array_equal(
                loaded[name].value,
                params[name].value.astype(np.float32).astype(np.float64),
            )
