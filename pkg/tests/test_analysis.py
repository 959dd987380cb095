import json
import math

import numpy as np
import pytest

from currikit.analysis import (
    AnalysisError,
    category_correct_rates,
    rate_bin,
    rate_interval_report,
    subset_noise_rates,
)
from currikit.curriculum import CurriculumDesign, CurriculumParams, design_curriculum
from currikit.data import SynthConfig, generate_synthetic, reference_from_truth
from currikit.trainer import RunMetrics


def fixture_design(levels, categories, ids=None):
    n = len(levels)
    ids = ids or tuple(f"s{i}" for i in range(n))
    c = int(max(categories)) + 1
    return CurriculumDesign(
        params=CurriculumParams(n_subsets=3),
        sample_ids=tuple(ids),
        categories=np.array(categories),
        levels=np.array(levels),
        dist_to_center=np.zeros(n),
        center_ids=tuple(f"s{list(categories).index(cat)}" for cat in range(c)),
        d_c=np.zeros(c),
    )


class TestSubsetNoiseRates:
    def test_hand_fixture(self):
        # six samples, two mislabeled, both in the highly-noisy subset
        cd = fixture_design(levels=[0, 0, 1, 1, 2, 2], categories=[0, 1, 0, 1, 0, 1])
        reference = {"s0": 0, "s1": 1, "s2": 0, "s3": 1, "s4": 1, "s5": 0}
        rates = subset_noise_rates(cd, reference)
        assert rates.rates == (0.0, 0.0, 1.0)
        assert rates.sizes == (2, 2, 2)
        assert rates.mislabeled == (0, 0, 2)

    def test_all_clean_generation(self):
        cfg = SynthConfig(n_categories=3, per_category=12, n_features=4,
                          clean_frac=1.0, cross_frac=0.0, uniform_frac=0.0, seed=5)
        fs, truth = generate_synthetic(cfg)
        cd = design_curriculum(fs, CurriculumParams(seed=5))
        rates = subset_noise_rates(cd, reference_from_truth(fs, truth))
        for size, rate in zip(rates.sizes, rates.rates):
            assert size == 0 or rate == 0.0

    def test_weighted_rates_equal_overall(self):
        fs, truth = generate_synthetic(SynthConfig(5, 40, 8, 0.6, 0.25, 0.15, seed=6))
        cd = design_curriculum(fs, CurriculumParams(seed=6))
        rates = subset_noise_rates(cd, reference_from_truth(fs, truth))
        assert sum(rates.mislabeled) / cd.n_samples == rates.overall_rate

    def test_id_mismatch(self):
        cd = fixture_design(levels=[0, 1], categories=[0, 1])
        with pytest.raises(AnalysisError, match="s1"):
            subset_noise_rates(cd, {"s0": 0})


class TestCorrectRates:
    def test_values(self):
        cd = fixture_design(levels=[0, 0, 0, 0], categories=[0, 0, 1, 1])
        reference = {"s0": 0, "s1": 5, "s2": 1, "s3": 1}
        rates = category_correct_rates(cd, reference)
        assert rates.tolist() == [0.5, 1.0]


def metrics_with(topk_acc):
    return RunMetrics(
        strategy="x", seed=0, topk=5,
        final_top1=0.0, final_topk=0.0,
        per_category_top1=np.asarray(topk_acc, dtype=float),
        per_category_topk=np.asarray(topk_acc, dtype=float),
    )


class TestRateIntervalReport:
    def test_all_perfect_rates(self):
        c = 7
        audit = rate_interval_report(
            np.ones(c), metrics_with(np.zeros(c)), metrics_with(np.ones(c))
        )
        assert audit.histogram == (0,) * 9 + (c,)
        assert audit.interval_gains[-1] == pytest.approx(1.0)

    def test_bin_arithmetic(self):
        audit = rate_interval_report(
            np.array([0.05, 0.15, 0.95]),
            metrics_with([0.0, 0.0, 0.0]),
            metrics_with([0.5, 0.25, 0.0]),
        )
        assert audit.histogram == (1, 1, 0, 0, 0, 0, 0, 0, 0, 1)
        assert audit.interval_gains[0] == pytest.approx(0.5)
        assert audit.interval_gains[1] == pytest.approx(0.25)
        assert math.isnan(audit.interval_gains[5])

    def test_boundary_bins(self):
        assert rate_bin(0.0) == 0
        assert rate_bin(0.1) == 1
        assert rate_bin(0.999) == 9
        assert rate_bin(1.0) == 9
        with pytest.raises(AnalysisError):
            rate_bin(1.5)

    def test_category_permutation_invariant_histogram(self):
        rng = np.random.default_rng(8)
        rates = rng.uniform(0, 1, 30)
        base = metrics_with(rng.uniform(0, 1, 30))
        curr = metrics_with(rng.uniform(0, 1, 30))
        audit = rate_interval_report(rates, base, curr)
        perm = rng.permutation(30)
        audit_p = rate_interval_report(
            rates[perm],
            metrics_with(base.per_category_topk[perm]),
            metrics_with(curr.per_category_topk[perm]),
        )
        assert audit.histogram == audit_p.histogram
        for a, b in zip(audit.interval_gains, audit_p.interval_gains):
            assert (math.isnan(a) and math.isnan(b)) or a == pytest.approx(b)

    def test_length_mismatch(self):
        with pytest.raises(AnalysisError, match="categories"):
            rate_interval_report(np.ones(3), metrics_with(np.zeros(2)), metrics_with(np.zeros(3)))

    def test_pure_deterministic_output(self):
        rates = np.array([0.2, 0.4, 0.9])
        base, curr = metrics_with([0.1, 0.2, 0.3]), metrics_with([0.2, 0.3, 0.4])
        a1 = rate_interval_report(rates, base, curr)
        a2 = rate_interval_report(rates, base, curr)
        assert json.dumps(a1.histogram) == json.dumps(a2.histogram)
        assert repr(a1.interval_gains) == repr(a2.interval_gains)
