import numpy as np
import pytest

from grail.attacks import (AttackConfig, Budget, attack_loss, chunk_sizes,
                           grbcd_attack, linear_from_pairs, pair_count,
                           pairs_from_linear, pgd_attack, prbcd_attack,
                           random_flip_attack, run_attack)
from grail.autodiff import Tensor, backward
from grail.encoders import EncoderConfig, EncoderModel, relaxed_adjacency
from grail.errors import BudgetInfeasible, ValidationError
from grail.graphs import Graph, apply_perturbation, dense_adjacency
from grail.probe import LinearProbe, ProbeConfig, accuracy, train_probe
from grail.data import SbmSpec, generate_sbm_node_dataset

from conftest import assert_grads_match, fd_gradient, tiny_node_dataset


def small_victim(seed=0, n=10):
    ds = tiny_node_dataset(seed=seed, n=n)
    encoder = EncoderModel(EncoderConfig(num_layers=2, hidden_dim=4),
                           ds.feature_dim, seed=seed)
    probe = train_probe(encoder, ds, ProbeConfig(epochs=40, seed=seed))
    return ds, encoder, probe


class TestPairIndexing:
    def test_round_trip_all_pairs(self):
        for n in (2, 3, 7, 20):
            lin = np.arange(pair_count(n))
            rows, cols = pairs_from_linear(lin, n)
            assert np.all(rows < cols)
            assert np.all((0 <= rows) & (cols < n))
            np.testing.assert_array_equal(linear_from_pairs(rows, cols, n), lin)

    def test_enumeration_order(self):
        rows, cols = pairs_from_linear(np.arange(6), 4)
        assert list(zip(rows.tolist(), cols.tolist())) == [
            (0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]


class TestAttackLoss:
    def test_uniform_logits_give_negative_log_k(self):
        ds, encoder, _ = small_victim()
        probe = LinearProbe(4, 2, seed=0)
        probe.weight = Tensor(np.zeros((4, 2)), requires_grad=True)
        probe.bias = Tensor(np.zeros((1, 2)), requires_grad=True)
        loss = attack_loss(encoder, probe, ds.graph,
                           labels=np.asarray(ds.graph.node_labels),
                           target_idx=ds.test_indices)
        assert float(loss.data) == pytest.approx(-np.log(2), abs=1e-12)

    def test_sign_semantics(self):
        # The objective is the negated cross-entropy, so it is never
        # positive, and a confidently wrong model makes it hugely negative
        # (the state the minimizing attack drives toward).
        ds, encoder, probe = small_victim(seed=3)
        labels = np.asarray(ds.graph.node_labels)
        base = attack_loss(encoder, probe, ds.graph, labels=labels,
                           target_idx=ds.test_indices)
        assert float(base.data) <= 0.0
        probe.weight = Tensor(probe.weight.data * -50, requires_grad=True)
        probe.bias = Tensor(np.zeros_like(probe.bias.data), requires_grad=True)
        wrong = attack_loss(encoder, probe, ds.graph, labels=labels,
                            target_idx=ds.test_indices)
        assert float(wrong.data) < float(base.data)
        assert float(wrong.data) < -np.log(2)

    @pytest.mark.parametrize("loss_kind", ["neg_ce", "margin"])
    def test_gradient_wrt_relaxed_entries_matches_fd(self, loss_kind):
        rng = np.random.default_rng(4)
        from conftest import random_graph
        g = random_graph(rng, 6)
        from grail.graphs import GraphDataset, random_split
        tr, te = random_split(6, 0.6, 1)
        ds = GraphDataset((g,), "node", 2, tr, te)
        encoder = EncoderModel(EncoderConfig(num_layers=2, hidden_dim=3), 3, seed=1)
        probe = train_probe(encoder, ds, ProbeConfig(epochs=25, seed=1))
        A = dense_adjacency(g)
        pairs = np.array([(0, 1), (1, 2), (3, 4), (2, 5)])
        p0 = np.array([0.3, 0.5, 0.1, 0.8])

        def build(p):
            W = relaxed_adjacency(A, pairs[:, 0], pairs[:, 1], p)
            return attack_loss(encoder, probe, g,
                               labels=np.asarray(g.node_labels), target_idx=te,
                               kind=loss_kind, W=W)

        leaf = Tensor(p0, requires_grad=True)
        backward(build(leaf))
        numeric = fd_gradient(lambda v: float(build(Tensor(v)).data), p0)
        assert_grads_match(leaf.grad, numeric)


class TestRandomFlip:
    def test_zero_budget_is_identity(self):
        ds, encoder, probe = small_victim()
        result = random_flip_attack(ds.graph, Budget(0), seed=3)
        assert result.flips == ()
        clean = accuracy(probe, encoder, ds, "test")
        perturbed = apply_perturbation(ds.graph, result.flips)
        assert accuracy(probe, encoder, ds, "test", graph_override=perturbed) == clean

    def test_full_budget_on_triangle_gives_complement(self):
        g = Graph(3, ((0, 1), (0, 2), (1, 2)), np.zeros((3, 1)))
        result = random_flip_attack(g, Budget(3), seed=0)
        assert apply_perturbation(g, result.flips).edges == ()

    def test_edit_distance(self):
        rng = np.random.default_rng(5)
        from conftest import random_graph
        g = random_graph(rng, 12)
        result = random_flip_attack(g, Budget(5), seed=9)
        diff = dense_adjacency(apply_perturbation(g, result.flips)) \
            - dense_adjacency(g)
        assert np.count_nonzero(diff) == 10

    def test_budget_too_large(self):
        g = Graph(3, (), np.zeros((3, 1)))
        with pytest.raises(BudgetInfeasible):
            random_flip_attack(g, Budget(4), seed=0)

    def test_deterministic(self):
        ds, _, _ = small_victim()
        a = random_flip_attack(ds.graph, Budget(4), seed=11)
        b = random_flip_attack(ds.graph, Budget(4), seed=11)
        assert a.flips == b.flips


class TestPgd:
    def test_zero_lr_keeps_clean_graph(self):
        ds, encoder, probe = small_victim(seed=1)
        config = AttackConfig(kind="pgd", steps=5, lr=0.0, seed=2)
        result = pgd_attack(ds.graph, encoder, probe, Budget(3), config,
                            labels=np.asarray(ds.graph.node_labels),
                            target_idx=ds.test_indices)
        assert result.flips == ()

    def test_zero_budget_empty_flips(self):
        ds, encoder, probe = small_victim(seed=1)
        config = AttackConfig(kind="pgd", steps=5, seed=2)
        result = pgd_attack(ds.graph, encoder, probe, Budget(0), config,
                            labels=np.asarray(ds.graph.node_labels),
                            target_idx=ds.test_indices)
        assert result.flips == ()

    def test_beats_random_search_oracle(self):
        # Attacked accuracy no worse than the best of 200 random flip sets
        # of the same size, in at least 90% of seeds.
        wins = 0
        seeds = range(10)
        for seed in seeds:
            ds = generate_sbm_node_dataset(SbmSpec(
                blocks=2, nodes_per_block=6, p_in=0.6, p_out=0.1,
                feature_dim=3, feature_signal=0.5, seed=seed))
            encoder = EncoderModel(EncoderConfig(num_layers=2, hidden_dim=4),
                                   ds.feature_dim, seed=seed)
            probe = train_probe(encoder, ds, ProbeConfig(epochs=60, seed=seed))
            labels = np.asarray(ds.graph.node_labels)
            config = AttackConfig(kind="pgd", steps=40, seed=seed)
            result = pgd_attack(ds.graph, encoder, probe, Budget(3), config,
                                labels=labels, target_idx=ds.test_indices)
            adv = accuracy(probe, encoder, ds, "test",
                           graph_override=apply_perturbation(ds.graph,
                                                             result.flips))
            rng = np.random.default_rng(1000 + seed)
            best_random = 1.0
            for _ in range(200):
                trial = random_flip_attack(ds.graph, Budget(3),
                                           seed=int(rng.integers(2**31)))
                acc = accuracy(probe, encoder, ds, "test",
                               graph_override=apply_perturbation(ds.graph,
                                                                 trial.flips))
                best_random = min(best_random, acc)
            if adv <= best_random:
                wins += 1
        assert wins >= 0.9 * len(seeds)


class TestPrbcd:
    def test_degenerate_block_equals_pgd(self):
        ds, encoder, probe = small_victim(seed=7, n=9)
        labels = np.asarray(ds.graph.node_labels)
        total = pair_count(9)
        pgd = pgd_attack(ds.graph, encoder, probe, Budget(3),
                         AttackConfig(kind="pgd", steps=15, seed=4),
                         labels=labels, target_idx=ds.test_indices)
        full = prbcd_attack(ds.graph, encoder, probe, Budget(3),
                            AttackConfig(kind="prbcd", steps=15, seed=4,
                                         block_size=total),
                            labels=labels, target_idx=ds.test_indices)
        assert pgd.flips == full.flips
        assert pgd.loss_trace == full.loss_trace
        np.testing.assert_array_equal(pgd.relaxed_final, full.relaxed_final)

    def test_keep_fraction_one_freezes_block(self):
        ds, encoder, probe = small_victim(seed=2, n=12)
        labels = np.asarray(ds.graph.node_labels)
        config = AttackConfig(kind="prbcd", steps=8, seed=3, block_size=20,
                              resample_keep_fraction=1.0)
        result = prbcd_attack(ds.graph, encoder, probe, Budget(3), config,
                              labels=labels, target_idx=ds.test_indices)
        first_block = prbcd_attack(
            ds.graph, encoder, probe, Budget(3),
            AttackConfig(kind="prbcd", steps=1, seed=3, block_size=20,
                         resample_keep_fraction=1.0),
            labels=labels, target_idx=ds.test_indices)
        assert result.final_pairs == first_block.final_pairs

    def test_live_weights_never_exceed_block_size(self):
        ds, encoder, probe = small_victim(seed=4, n=12)
        config = AttackConfig(kind="prbcd", steps=10, seed=5, block_size=18)
        result = prbcd_attack(ds.graph, encoder, probe, Budget(3), config,
                              labels=np.asarray(ds.graph.node_labels),
                              target_idx=ds.test_indices)
        assert len(result.relaxed_final) == 18
        assert len(result.final_pairs) == 18

    def test_block_smaller_than_budget_rejected(self):
        ds, encoder, probe = small_victim()
        config = AttackConfig(kind="prbcd", steps=2, seed=0, block_size=2)
        with pytest.raises(BudgetInfeasible):
            prbcd_attack(ds.graph, encoder, probe, Budget(5), config,
                         labels=np.asarray(ds.graph.node_labels),
                         target_idx=ds.test_indices)


class TestGrbcd:
    def test_chunk_split_even(self):
        assert chunk_sizes(4, 2) == [2, 2]

    def test_chunk_split_remainder_first(self):
        assert chunk_sizes(5, 2) == [3, 2]

    def test_chunks_cover_budget(self):
        for delta in range(0, 12):
            for steps in range(1, 6):
                assert sum(chunk_sizes(delta, steps)) == delta

    def test_flips_within_budget_never_reverted_loss_monotone(self):
        ds, encoder, probe = small_victim(seed=9, n=12)
        config = AttackConfig(kind="grbcd", steps=4, seed=6, block_size=30)
        result = grbcd_attack(ds.graph, encoder, probe, Budget(6), config,
                              labels=np.asarray(ds.graph.node_labels),
                              target_idx=ds.test_indices)
        assert len(result.flips) <= 6
        assert len(set(result.flips)) == len(result.flips)
        trace = result.loss_trace
        assert all(later <= earlier + 1e-12
                   for earlier, later in zip(trace, trace[1:]))


class TestEvasionContract:
    def test_model_parameters_untouched_by_all_attacks(self):
        ds, encoder, probe = small_victim(seed=12)
        enc_sum, probe_sum = encoder.checksum(), probe.checksum()
        labels = np.asarray(ds.graph.node_labels)
        for kind in ("random", "pgd", "prbcd", "grbcd"):
            config = AttackConfig(kind=kind, steps=4, seed=1, block_size=24)
            run_attack(ds.graph, encoder, probe, Budget(3), config,
                       labels=labels, target_idx=ds.test_indices)
        assert encoder.checksum() == enc_sum
        assert probe.checksum() == probe_sum


class TestResultSerialization:
    def test_record_fields(self):
        ds, encoder, probe = small_victim()
        result = random_flip_attack(ds.graph, Budget(2), seed=5)
        result.attacked_accuracy = 0.5
        record = result.to_record()
        assert record["attack"] == "random"
        assert record["delta"] == 2
        assert record["acc_adv"] == 0.5
        assert all(len(pair) == 2 for pair in record["flips"])
        assert record["seed"] == 5

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            AttackConfig(kind="nope")
        with pytest.raises(ValidationError):
            AttackConfig(steps=0)
        with pytest.raises(ValidationError):
            AttackConfig(resample_keep_fraction=0.0)
