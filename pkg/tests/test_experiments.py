import numpy as np
import pytest

from currikit.analysis import category_correct_rates, rate_interval_report
from currikit.curriculum import CurriculumParams
from currikit.data import FeatureSet, SynthConfig, SyntheticTruth, generate_synthetic
from currikit.experiments import (
    CurriculumCache,
    build_strategy,
    noisy_fraction_sweep,
    restrict_highly_noisy,
    run_strategy,
    summarize,
)
from currikit.trainer import holdout_split

PLANT = dict(n_categories=10, per_category=200, n_features=32,
             clean_frac=0.60, cross_frac=0.25, uniform_frac=0.15, blob_sigma=2.0)


@pytest.fixture(scope="module")
def split():
    fs, truth = generate_synthetic(SynthConfig(seed=0, **PLANT))
    fs_train, train_truth, fs_test = holdout_split(fs, truth, 0.2, 0)
    return fs_train, train_truth, fs_test


class TestStrategyComparisons:
    def test_density_design_beats_kmeans_design(self, split):
        fs_train, _, fs_test = split
        cache = CurriculumCache(fs_train, CurriculumParams(seed=0))
        density = build_strategy("ModelD", cache, 64, 0.001)
        kmeans = build_strategy("ModelD_kmeans", cache, 64, 0.001)
        seeds = range(10)
        wins = 0
        for seed in seeds:
            _, md = run_strategy(density, fs_train, fs_test, seed)
            _, mk = run_strategy(kmeans, fs_train, fs_test, seed)
            wins += md.final_top1 <= mk.final_top1
        assert wins > 5, f"density curriculum won only {wins}/10 seeds"

    def test_summarize_groups_by_tag(self, split):
        fs_train, _, fs_test = split
        cache = CurriculumCache(fs_train, CurriculumParams(seed=0))
        st = build_strategy("ModelB", cache, 64, 0.0005)
        runs = [run_strategy(st, fs_train, fs_test, s)[1] for s in (0, 1)]
        table = summarize(runs)
        assert table["ModelB"]["runs"] == 2
        assert 0.0 <= table["ModelB"]["mean_top1"] <= 1.0


class TestNoisyFractionSweep:
    def test_zero_fraction_equals_model_c(self, split):
        fs_train, _, fs_test = split
        cache = CurriculumCache(fs_train, CurriculumParams(seed=0))
        model_c = build_strategy("ModelC", cache, 64, 0.001)
        _, mc = run_strategy(model_c, fs_train, fs_test, 4)
        [(_, m0)] = noisy_fraction_sweep([0.0], [4], fs_train, fs_test,
                                         CurriculumParams(seed=0))
        assert [(p.iteration, p.train_loss, p.test_top1, p.test_topk) for p in m0.points] \
            == [(p.iteration, p.train_loss, p.test_top1, p.test_topk) for p in mc.points]
        assert (m0.final_top1, m0.final_topk) == (mc.final_top1, mc.final_topk)

    def test_full_fraction_equals_model_d(self, split):
        fs_train, _, fs_test = split
        cache = CurriculumCache(fs_train, CurriculumParams(seed=0))
        model_d = build_strategy("ModelD", cache, 64, 0.001)
        _, md = run_strategy(model_d, fs_train, fs_test, 4)
        [(_, m1)] = noisy_fraction_sweep([1.0], [4], fs_train, fs_test,
                                         CurriculumParams(seed=0))
        assert m1.to_dict()["points"] == md.to_dict()["points"]

    def test_deterministic_per_fraction_and_seed(self, split):
        fs_train, _, fs_test = split
        a = noisy_fraction_sweep([0.5], [7], fs_train, fs_test, CurriculumParams(seed=0))
        b = noisy_fraction_sweep([0.5], [7], fs_train, fs_test, CurriculumParams(seed=0))
        assert a[0][1].to_dict() == b[0][1].to_dict()

    def test_restrict_mask_counts(self, split):
        fs_train, _, _ = split
        from currikit.curriculum import design_curriculum

        cd = design_curriculum(fs_train, CurriculumParams(seed=0))
        hn = int((cd.levels == 2).sum())
        for fraction in (0.0, 0.25, 1.0):
            keep = restrict_highly_noisy(cd, fraction, seed=3)
            kept_hn = int((keep & (cd.levels == 2)).sum())
            assert kept_hn == int(np.floor(fraction * hn + 0.5))
            assert keep[cd.levels < 2].all()


def merged_noise_dataset(seed):
    """Two 5-category blocks with very different label-noise rates, merged
    into one 10-category dataset (distinct per-category correct rates)."""
    noisy_cfg = SynthConfig(n_categories=5, per_category=120, n_features=32,
                            clean_frac=0.40, cross_frac=0.45, uniform_frac=0.15,
                            blob_sigma=2.0, seed=seed)
    clean_cfg = SynthConfig(n_categories=5, per_category=120, n_features=32,
                            clean_frac=0.90, cross_frac=0.00, uniform_frac=0.10,
                            blob_sigma=2.0, seed=seed + 500)
    fs_a, truth_a = generate_synthetic(noisy_cfg)
    fs_b, truth_b = generate_synthetic(clean_cfg)
    true_b = truth_b.true_labels.copy()
    true_b[true_b >= 0] += 5
    fs = FeatureSet(
        features=np.vstack([fs_a.features, fs_b.features]),
        labels=np.concatenate([fs_a.labels, fs_b.labels + 5]),
        sample_ids=tuple(f"a_{s}" for s in fs_a.sample_ids)
        + tuple(f"b_{s}" for s in fs_b.sample_ids),
        category_names=fs_a.category_names + fs_b.category_names,
    )
    truth = SyntheticTruth(
        true_labels=np.concatenate([truth_a.true_labels, true_b]),
        noise_kind=truth_a.noise_kind + truth_b.noise_kind,
    )
    return fs, truth


class TestRateIntervalExperiment:
    def test_noisier_categories_gain_more(self):
        """Categories with lower label-correct rates benefit more from the
        curriculum than from plain training, in a majority of seeds."""
        from currikit.data import reference_from_truth
        from currikit.curriculum import design_curriculum

        favorable = 0
        seeds = range(5)
        for seed in seeds:
            fs, truth = merged_noise_dataset(seed)
            fs_train, train_truth, fs_test = holdout_split(fs, truth, 0.2, seed)
            cache = CurriculumCache(fs_train, CurriculumParams(seed=seed))
            _, base = run_strategy(build_strategy("ModelA", cache, 64, 0.001),
                                   fs_train, fs_test, seed)
            _, curr = run_strategy(build_strategy("ModelD", cache, 64, 0.001),
                                   fs_train, fs_test, seed)
            cd = cache.get("density", 3)
            correct = category_correct_rates(cd, reference_from_truth(fs_train, train_truth))
            audit = rate_interval_report(correct, base, curr)
            occupied = [b for b in range(10) if audit.histogram[b]
                        and not np.isnan(audit.interval_gains[b])]
            lower = occupied[: len(occupied) // 2]
            upper = occupied[len(occupied) - len(lower):]
            if not lower or not upper:
                continue
            gain_low = np.mean([audit.interval_gains[b] for b in lower])
            gain_high = np.mean([audit.interval_gains[b] for b in upper])
            favorable += gain_low >= gain_high
        assert favorable > len(list(seeds)) // 2, (
            f"low-correct-rate bins gained more in only {favorable}/5 seeds")
