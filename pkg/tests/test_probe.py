import numpy as np
import pytest

from grail.autodiff import Tensor
from grail.data import SbmSpec, generate_sbm_node_dataset
from grail.encoders import EncoderConfig, EncoderModel
from grail.errors import EmptySelection, ValidationError
from grail.graphs import GraphDataset, apply_perturbation
from grail.probe import (LinearProbe, ProbeConfig, accuracy, cross_entropy,
                         load_probe, predictions, save_probe, train_probe,
                         train_supervised)

from conftest import tiny_node_dataset


class TestCrossEntropy:
    def test_uniform_logits(self):
        logits = np.zeros((4, 3))
        loss = cross_entropy(logits, np.array([0, 1, 2, 0]))
        assert float(loss.data) == pytest.approx(np.log(3), abs=1e-12)

    def test_saturated_correct_logits(self):
        logits = np.full((3, 4), -50.0)
        labels = np.array([1, 2, 0])
        logits[np.arange(3), labels] = 50.0
        assert float(cross_entropy(logits, labels).data) < 1e-8

    def test_matches_naive_softmax_oracle(self, rng):
        logits = rng.standard_normal((5, 3))
        labels = rng.integers(0, 3, size=5)
        probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
        expected = -np.mean(np.log(probs[np.arange(5), labels]))
        assert float(cross_entropy(logits, labels).data) == pytest.approx(
            expected, abs=1e-10)

    def test_nonnegative(self, rng):
        for _ in range(20):
            logits = rng.standard_normal((6, 4)) * 3
            labels = rng.integers(0, 4, size=6)
            assert float(cross_entropy(logits, labels).data) >= 0.0

    def test_empty_mask_rejected(self, rng):
        with pytest.raises(EmptySelection):
            cross_entropy(rng.standard_normal((3, 2)), np.zeros(3, dtype=int),
                          mask=np.zeros(3, dtype=bool))

    def test_boolean_and_index_masks_agree(self, rng):
        logits = rng.standard_normal((6, 3))
        labels = rng.integers(0, 3, size=6)
        mask = np.array([True, False, True, True, False, False])
        a = float(cross_entropy(logits, labels, mask).data)
        b = float(cross_entropy(logits, labels, np.flatnonzero(mask)).data)
        assert a == pytest.approx(b, abs=1e-15)


class TestTrainProbe:
    def test_separable_embeddings_reach_full_train_accuracy(self):
        # Encoder whose representations are the (linearly separable) labels
        # themselves: identity GCN features in, labels encoded in features.
        rng = np.random.default_rng(0)
        n = 40
        labels = rng.integers(0, 2, size=n)
        features = np.stack([labels + 0.05 * rng.standard_normal(n),
                             1 - labels + 0.05 * rng.standard_normal(n)], axis=1)
        from grail.graphs import Graph
        g = Graph(n, (), features, node_labels=labels)
        ds = GraphDataset((g,), "node", 2, np.arange(30), np.arange(30, 40))
        encoder = EncoderModel(EncoderConfig(num_layers=1, hidden_dim=2), 2, seed=0)
        encoder.params["layer0.weight"] = Tensor(np.eye(2), requires_grad=True)
        probe = train_probe(encoder, ds, ProbeConfig(epochs=500, lr=1e-2, seed=0))
        assert accuracy(probe, encoder, ds, "train") == 1.0

    def test_zero_epochs_keeps_initialization(self):
        ds = tiny_node_dataset()
        encoder = EncoderModel(EncoderConfig(num_layers=1, hidden_dim=4),
                               ds.feature_dim, seed=0)
        probe = train_probe(encoder, ds, ProbeConfig(epochs=0, seed=3))
        fresh = LinearProbe(4, 2, seed=3)
        np.testing.assert_array_equal(probe.weight.data, fresh.weight.data)

    def test_encoder_checksum_unchanged(self):
        ds = tiny_node_dataset()
        encoder = EncoderModel(EncoderConfig(num_layers=2, hidden_dim=4),
                               ds.feature_dim, seed=1)
        before = encoder.checksum()
        train_probe(encoder, ds, ProbeConfig(epochs=50, seed=0))
        assert encoder.checksum() == before


class TestAccuracy:
    def _fixture(self):
        ds = tiny_node_dataset(seed=5)
        encoder = EncoderModel(EncoderConfig(num_layers=1, hidden_dim=4),
                               ds.feature_dim, seed=2)
        probe = train_probe(encoder, ds, ProbeConfig(epochs=30, seed=2))
        return ds, encoder, probe

    def test_bounds_and_formula(self):
        ds, encoder, probe = self._fixture()
        preds = predictions(probe, encoder, ds)
        labels = np.asarray(ds.graph.node_labels)
        expected = float(np.mean(preds[ds.test_indices] == labels[ds.test_indices]))
        assert accuracy(probe, encoder, ds, "test") == expected

    def test_identity_override_bitwise_equal(self):
        ds, encoder, probe = self._fixture()
        clean = accuracy(probe, encoder, ds, "test")
        override = accuracy(probe, encoder, ds, "test", graph_override=ds.graph)
        assert clean == override

    def test_perturbation_override_changes_representations(self):
        ds, encoder, probe = self._fixture()
        flipped = apply_perturbation(ds.graph, [(0, 1), (2, 3)])
        value = accuracy(probe, encoder, ds, "test", graph_override=flipped)
        assert 0.0 <= value <= 1.0

    def test_empty_split_rejected(self):
        ds, encoder, probe = self._fixture()
        with pytest.raises(EmptySelection):
            accuracy(probe, encoder, ds, np.array([], dtype=int))

    def test_argmax_ties_take_lowest_class(self):
        ds = tiny_node_dataset(seed=6)
        encoder = EncoderModel(EncoderConfig(num_layers=1, hidden_dim=4),
                               ds.feature_dim, seed=2)
        probe = LinearProbe(4, 2, seed=0)
        probe.weight = Tensor(np.zeros((4, 2)), requires_grad=True)
        probe.bias = Tensor(np.zeros((1, 2)), requires_grad=True)
        assert np.all(predictions(probe, encoder, ds) == 0)


class TestSupervised:
    def test_supervised_training_learns_and_freezes(self):
        ds = generate_sbm_node_dataset(SbmSpec(blocks=2, nodes_per_block=20,
                                               p_in=0.4, p_out=0.02,
                                               feature_dim=4, feature_signal=2.0,
                                               seed=4))
        encoder, head = train_supervised(ds, EncoderConfig(num_layers=2,
                                                           hidden_dim=8),
                                         epochs=120, lr=1e-2, seed=1)
        assert accuracy(head, encoder, ds, "train") > 0.9

    def test_deterministic(self):
        ds = tiny_node_dataset(seed=8)
        e1, h1 = train_supervised(ds, EncoderConfig(num_layers=1, hidden_dim=4),
                                  epochs=20, seed=5)
        e2, h2 = train_supervised(ds, EncoderConfig(num_layers=1, hidden_dim=4),
                                  epochs=20, seed=5)
        assert e1.checksum() == e2.checksum()
        assert h1.checksum() == h2.checksum()


class TestProbeCheckpoint:
    def test_round_trip(self, tmp_path):
        probe = LinearProbe(6, 3, seed=4)
        save_probe(probe, tmp_path / "probe")
        loaded = load_probe(tmp_path / "probe")
        np.testing.assert_array_equal(loaded.weight.data, probe.weight.data)
        np.testing.assert_array_equal(loaded.bias.data, probe.bias.data)

    def test_wrong_kind_rejected(self, tmp_path):
        encoder = EncoderModel(EncoderConfig(num_layers=1, hidden_dim=2), 2, seed=0)
        from grail.encoders import save_encoder
        save_encoder(encoder, tmp_path / "enc")
        with pytest.raises(ValidationError):
            load_probe(tmp_path / "enc")
