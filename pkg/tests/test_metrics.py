"""Quality scores, quality gain, budget sweeps, and stability runs."""

from __future__ import annotations

import numpy as np
import pytest

from labelvet.metrics import (
    EXACT_MATCH,
    MetricsError,
    QualityMeasure,
    budget_curve,
    quality,
    quality_gain,
    stability_runs,
)
from labelvet.simulator import SimulatorConfig, simulate_annotator

from conftest import text_dataset


class TestQuality:
    def test_half_match(self):
        assert quality([1, 2, 3, 4], [1, 2, 0, 0]) == pytest.approx(0.5)

    def test_exact_match_is_symmetric(self):
        a, b = [1, 2, 3, 4], [1, 2, 0, 0]
        assert quality(a, b) == quality(b, a)

    def test_missing_labels_score_zero(self):
        assert quality([1, 2], [1, None]) == pytest.approx(0.5)

    def test_empty_rejected(self):
        with pytest.raises(MetricsError):
            quality([], [])

    def test_length_mismatch_rejected(self):
        with pytest.raises(MetricsError):
            quality([1, 2], [1])

    def test_custom_measure(self):
        overlap = QualityMeasure(
            name="shared_prefix",
            similarity=lambda a, b: 1.0 if str(a)[0] == str(b)[0] else 0.0)
        assert quality(["ab", "cd"], ["ax", "zz"], overlap) == pytest.approx(0.5)


class TestQualityGain:
    def test_realized_fraction(self):
        reference = [0] * 20
        machine = [1] * 4 + [0] * 16       # quality 0.8
        corrected = [1] * 1 + [0] * 19     # quality 0.95
        gain = quality_gain(reference, machine, corrected)
        assert gain.value == pytest.approx(0.75)
        assert not gain.degenerate

    def test_no_correction_scores_zero(self):
        reference = [0, 1, 2, 3]
        machine = [0, 1, 0, 0]
        gain = quality_gain(reference, machine, machine)
        assert gain.value == 0.0

    def test_full_correction_scores_one(self):
        reference = [0, 1, 2, 3]
        machine = [0, 1, 0, 0]
        gain = quality_gain(reference, machine, reference)
        assert gain.value == pytest.approx(1.0)

    def test_perfect_machine_labels_are_degenerate(self):
        reference = [0, 1, 2]
        gain = quality_gain(reference, reference, reference)
        assert gain.value == 1.0
        assert gain.degenerate


class TestBudgetCurveThreshold:
    def _instance(self):
        # Twenty items, exactly five machine errors, and an error indicator
        # as the estimate (the perfect-criticizer shape).
        reference = list(range(20))
        machine = list(reference)
        for i in (2, 5, 8, 11, 17):
            machine[i] = (machine[i] + 1) % 20
        eps = [1.0 if reference[i] != machine[i] else 0.0 for i in range(20)]
        return reference, machine, eps

    def test_perfect_estimates_give_linear_ramp(self):
        reference, machine, eps = self._instance()
        curve = budget_curve(reference, machine, eps, "threshold", seed=0)
        for point in curve.points:
            assert point.gain == pytest.approx(min(1.0, point.budget / 5))

    def test_ramp_area(self):
        reference, machine, eps = self._instance()
        curve = budget_curve(reference, machine, eps, "threshold", seed=0)
        # (0 + .2 + .4 + .6 + .8)/20 + 16 * 1/20
        assert curve.area == pytest.approx(0.9)

    def test_trapezoid_area_close_to_grid_sum(self):
        reference, machine, eps = self._instance()
        curve = budget_curve(reference, machine, eps, "threshold", seed=0)
        assert abs(curve.trapezoid_area() - curve.area) <= 1.0 / 20

    def test_endpoints(self):
        reference, machine, eps = self._instance()
        curve = budget_curve(reference, machine, eps, "threshold", seed=0)
        assert curve.points[0].budget == 0
        assert curve.points[0].gain == 0.0
        assert curve.points[-1].budget == 20
        assert curve.points[-1].gain == pytest.approx(1.0)

    def test_gains_monotone_under_exact_match(self):
        rng = np.random.default_rng(2)
        reference = rng.integers(0, 5, size=50).tolist()
        machine = [r if rng.random() < 0.7 else int((r + 1) % 5)
                   for r in reference]
        eps = rng.random(50).tolist()
        curve = budget_curve(reference, machine, eps, "threshold", seed=1)
        gains = curve.gains()
        assert all(b >= a - 1e-12 for a, b in zip(gains, gains[1:]))

    def test_degenerate_when_machine_is_perfect(self):
        reference = [0, 1, 2]
        curve = budget_curve(reference, reference, [0.5, 0.5, 0.5],
                             "threshold", seed=0)
        assert all(p.degenerate for p in curve.points)
        assert all(p.gain == 1.0 for p in curve.points)
        # The grid covers budgets 0..N inclusive and normalizes by N, so a
        # flat all-ones curve sums to (N + 1) / N.
        assert curve.area == pytest.approx(4 / 3)


class TestBudgetCurveStrided:
    def test_large_sweeps_are_strided_with_endpoints(self):
        rng = np.random.default_rng(3)
        n = 3000
        reference = rng.integers(0, 4, size=n).tolist()
        machine = [r if rng.random() < 0.8 else int((r + 1) % 4)
                   for r in reference]
        eps = rng.random(n).tolist()
        curve = budget_curve(reference, machine, eps, "threshold", seed=0)
        assert len(curve.points) <= 2001
        assert curve.stride > 1
        assert curve.points[0].budget == 0
        assert curve.points[-1].budget == n

    def test_strided_area_close_to_full_sweep(self):
        rng = np.random.default_rng(4)
        n = 2500
        reference = rng.integers(0, 4, size=n).tolist()
        machine = [r if rng.random() < 0.8 else int((r + 1) % 4)
                   for r in reference]
        eps = rng.random(n).tolist()
        strided = budget_curve(reference, machine, eps, "threshold", seed=0)
        full = budget_curve(reference, machine, eps, "threshold", seed=0,
                            max_points=n + 1)
        assert full.stride == 1
        assert strided.area == pytest.approx(full.area, abs=0.01)


class TestBudgetCurveOtherRules:
    def _instance(self, n=60, seed=5):
        rng = np.random.default_rng(seed)
        reference = rng.integers(0, 4, size=n).tolist()
        machine = [r if rng.random() < 0.75 else int((r + 1) % 4)
                   for r in reference]
        eps = rng.uniform(0.01, 0.99, size=n).tolist()
        return reference, machine, eps

    def test_normalization_curve_is_deterministic_per_seed(self):
        reference, machine, eps = self._instance()
        a = budget_curve(reference, machine, eps, "normalization", seed=9)
        b = budget_curve(reference, machine, eps, "normalization", seed=9)
        c = budget_curve(reference, machine, eps, "normalization", seed=10)
        assert a == b
        assert a != c

    def test_exponential_curve_endpoints(self):
        reference, machine, eps = self._instance()
        curve = budget_curve(reference, machine, eps, "exponential", seed=9,
                             sharpness=10.0)
        assert curve.points[0].gain == 0.0
        assert curve.points[-1].gain == pytest.approx(1.0)

    def test_ppl_priority_ramp(self):
        # Items 0..2 are machine errors; flagged items come first, cheaper
        # reasoning first among them, then unflagged by descending cost.
        reference = [0, 1, 2, 3]
        machine = [1, 2, 3, 3]
        decisions = ["yes", "yes", "no", "no"]
        perplexities = [2.0, 9.0, 9.0, 2.0]
        curve = budget_curve(reference, machine, None, "ppl_priority", seed=0,
                             decisions=decisions, perplexities=perplexities)
        assert curve.gains() == pytest.approx([0.0, 1 / 3, 2 / 3, 1.0, 1.0])
        assert curve.area == pytest.approx(3 / 4)

    def test_unknown_rule_rejected(self):
        reference, machine, eps = self._instance(n=10)
        with pytest.raises(MetricsError):
            budget_curve(reference, machine, eps, "lottery", seed=0)

    def test_missing_estimates_rejected(self):
        with pytest.raises(MetricsError):
            budget_curve([0, 1], [0, 1], None, "threshold", seed=0)

    def test_missing_ppl_inputs_rejected(self):
        with pytest.raises(MetricsError):
            budget_curve([0, 1], [0, 1], None, "ppl_priority", seed=0)


class TestStabilityRuns:
    def test_deterministic_experiment_has_zero_spread(self):
        stats = stability_runs(lambda seed: {"value": 3.5}, n_runs=4)
        assert stats["value"].mean == 3.5
        assert stats["value"].std == 0.0
        assert stats["value"].n_runs == 4

    def test_hand_worked_spread(self):
        stats = stability_runs(lambda seed: {"value": float(seed)},
                               seeds=[1, 2, 3])
        assert stats["value"].mean == pytest.approx(2.0)
        assert stats["value"].std == pytest.approx(1.0)  # ddof = 1

    def test_single_run_rejected(self):
        with pytest.raises(MetricsError):
            stability_runs(lambda seed: {"value": 1.0}, n_runs=1)

    def test_inconsistent_metrics_rejected(self):
        def experiment(seed):
            return {"a": 1.0} if seed == 0 else {"b": 1.0}

        with pytest.raises(MetricsError):
            stability_runs(experiment, n_runs=2)

    def test_simulated_annotator_quality_is_stable(self):
        dataset = text_dataset(10_000, seed=30)
        truths = [dataset[i].hidden_truth for i in range(dataset.n)]

        def experiment(seed):
            labels = simulate_annotator(dataset,
                                        SimulatorConfig(accuracy=0.8, seed=seed))
            return {"machine_quality": quality(truths, labels)}

        stats = stability_runs(experiment, n_runs=5, base_seed=100)
        assert stats["machine_quality"].mean == pytest.approx(0.8, abs=0.012)
        assert stats["machine_quality"].std < 0.02
