import numpy as np
import pytest

from grail.errors import IncompleteCoverage, NoRecords, UndefinedDrop
from grail.metrics import (EvalRecord, min_over_attacks, model_delta,
                           relative_drop, summarize)


def record(model="m", dataset="d", attack="a", seed=0, clean=0.8, adv=0.5,
           delta=5):
    return EvalRecord(model, dataset, attack, seed, clean, adv, delta)


class TestRelativeDrop:
    def test_published_pairs(self):
        # Drops recomputed from published accuracy pairs.
        assert relative_drop(0.7398, 0.6804) == pytest.approx(0.0803, abs=5e-5)
        assert relative_drop(0.7467, 0.3391) == pytest.approx(0.5459, abs=5e-5)

    def test_no_drop(self):
        assert relative_drop(0.64, 0.64) == 0.0

    def test_full_collapse(self):
        for clean in (0.2, 0.5, 0.99):
            assert relative_drop(clean, 0.0) == 1.0

    def test_negative_drop_passes_through(self):
        assert relative_drop(0.5, 0.6) == pytest.approx(-0.2)

    def test_scale_invariance(self, rng):
        for _ in range(20):
            clean = float(rng.uniform(0.1, 1.0))
            adv = float(rng.uniform(0.0, clean))
            k = float(rng.uniform(0.1, 3.0))
            assert relative_drop(k * clean, k * adv) == pytest.approx(
                relative_drop(clean, adv), abs=1e-12)

    def test_zero_clean_rejected(self):
        with pytest.raises(UndefinedDrop):
            relative_drop(0.0, 0.0)


class TestMinOverAttacks:
    def test_published_min_row(self):
        drops = {"flip": 13.98, "pgd": 26.85, "prbcd": 87.57, "grbcd": 18.24}
        assert min_over_attacks(drops) == ("prbcd", 87.57)

    def test_single_attack(self):
        assert min_over_attacks({"pgd": 12.5}) == ("pgd", 12.5)

    def test_tie_takes_lexicographic_first(self):
        assert min_over_attacks({"b": 5.0, "a": 5.0, "c": 5.0})[0] == "a"

    def test_records_input_uses_seed_means(self):
        group = {
            "strong": [record(attack="strong", seed=s, adv=0.2) for s in range(3)],
            "weak": [record(attack="weak", seed=s, adv=0.7) for s in range(3)],
        }
        attack_id, drop = min_over_attacks(group)
        assert attack_id == "strong"
        assert drop == pytest.approx((0.8 - 0.2) / 0.8)

    def test_empty_rejected(self):
        with pytest.raises(NoRecords):
            min_over_attacks({})

    def test_selected_accuracy_not_above_others(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            group = {f"a{k}": [record(attack=f"a{k}", seed=s,
                                      adv=float(rng.uniform(0, 0.8)))
                               for s in range(4)]
                     for k in range(3)}
            chosen, _ = min_over_attacks(group)
            means = {a: np.mean([r.acc_adv for r in rs]) for a, rs in group.items()}
            assert means[chosen] == min(means.values())


class TestModelDelta:
    def test_self_comparison_is_zero(self):
        drops = {"d1": 10.0, "d2": 25.0}
        assert model_delta(drops, drops, ["d1", "d2"]) == 0.0

    def test_published_three_dataset_comparison(self):
        graphcl = {"PROTEINS": 38.89, "NCI1": 55.94, "DD": 75.34}
        gcn = {"PROTEINS": 8.04, "NCI1": 54.59, "DD": 87.57}
        delta = model_delta(graphcl, gcn, ["PROTEINS", "NCI1", "DD"])
        assert delta == pytest.approx(6.657, abs=5e-4)

    def test_antisymmetry(self):
        a = {"x": 12.0, "y": 30.0}
        b = {"x": 20.0, "y": 10.0}
        assert model_delta(a, b, ["x", "y"]) == -model_delta(b, a, ["x", "y"])

    def test_symmetric_diffs_cancel(self):
        a = {"x": 20.0, "y": 10.0}
        b = {"x": 10.0, "y": 20.0}
        assert model_delta(a, b, ["x", "y"]) == 0.0

    def test_missing_dataset_rejected(self):
        with pytest.raises(IncompleteCoverage):
            model_delta({"x": 1.0}, {"x": 1.0, "y": 2.0}, ["x", "y"])


class TestSummarize:
    def test_single_record_zero_std(self):
        summary = summarize([record(attack="clean", adv=0.8),
                             record(attack="pgd", adv=0.6)])
        cell = summary["cells"][0]
        assert cell["acc_clean_std"] == 0.0
        assert cell["attacks"]["pgd"]["acc_std"] == 0.0
        assert cell["min"]["attack"] == "pgd"

    def test_drop_uses_seed_mean_accuracies(self):
        records = [record(attack="pgd", seed=s, clean=0.8, adv=adv)
                   for s, adv in enumerate([0.5, 0.7])]
        summary = summarize(records)
        info = summary["cells"][0]["attacks"]["pgd"]
        assert info["drop"] == pytest.approx((0.8 - 0.6) / 0.8)

    def test_empty_rejected(self):
        with pytest.raises(NoRecords):
            summarize([])

    def test_json_round_trip(self):
        rec = record()
        assert EvalRecord.from_json(rec.to_json()) == rec
