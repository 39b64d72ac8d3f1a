import csv

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_images
from outpainter.data import MaskSpec, load_dataset
from outpainter.errors import ConfigError
from outpainter.evaluation import (
    EvalReport,
    band_gradient_energy,
    eval_mse,
    eval_realism,
    evaluate,
    image_mse,
    realism_scores,
    select_extremes,
    write_gallery,
)

MASK = MaskSpec(16, 10)


@pytest.fixture
def black_data(image_dir, tmp_path):
    image_dir([np.zeros((16, 16, 3))] * 3)
    return load_dataset(tmp_path, full_size=16)


@pytest.fixture
def noisy_data(image_dir, rng, tmp_path):
    image_dir(random_images(rng, 6, 16), name="test")
    return load_dataset(tmp_path, "test", full_size=16)


def echo_truth(data):
    """Stub generator that returns each batch's unmasked ground truth."""
    from outpainter.data import OutpaintDataset, iter_batches

    targets = iter([x for _, x in iter_batches(OutpaintDataset(data, MASK, (0, 0, 0)), 4)])
    return lambda masked: next(targets)


def gray(masked):
    # 0.5 in [0, 1] scale
    return torch.zeros_like(masked)


class TestMSE:
    def test_perfect_stub_zero(self, noisy_data):
        per_image, mean = eval_mse(echo_truth(noisy_data), noisy_data, MASK, (0, 0, 0), batch_size=4)
        assert per_image == [0.0] * 6
        assert mean == 0.0

    def test_identity_on_fixed_point(self, black_data):
        # black images with black fill: masked input already equals the target
        _, mean = eval_mse(lambda m: m, black_data, MASK)
        assert mean == 0.0

    def test_gray_vs_black(self, black_data):
        per_image, mean = eval_mse(gray, black_data, MASK)
        assert mean == pytest.approx(0.25)
        assert per_image == pytest.approx([0.25] * 3)

    def test_non_train_split_needs_means(self, noisy_data):
        with pytest.raises(ConfigError):
            eval_mse(gray, noisy_data, MASK)

    def test_band_only_region(self):
        x = torch.full((1, 3, 16, 16), -1.0)
        gx = x.clone()
        gx[..., 0, 0] = 1.0
        band = MASK.band_mask()
        full, = image_mse(gx, x)
        only_band, = image_mse(gx, x, band)
        assert full == pytest.approx(1 / 256)
        assert only_band == pytest.approx(1 / band.sum())

    @settings(max_examples=10, deadline=None)
    @given(st.permutations(list(range(6))))
    def test_mean_permutation_invariant(self, perm):
        values = [0.1, 0.02, 0.3, 0.04, 0.5, 0.06]
        a = EvalReport([f"i{k}" for k in range(6)], values)
        b = EvalReport([f"i{k}" for k in perm], [values[k] for k in perm])
        assert a.mean_mse == pytest.approx(b.mean_mse, abs=1e-15)


class TestRealism:
    def test_all_ones(self, black_data):
        per_image, mean = eval_realism(gray, lambda img: torch.ones(img.shape[0], 1, 2, 2), black_data, MASK)
        assert mean == 1.0 and per_image == [1.0] * 3

    def test_negative_clamped(self, black_data):
        _, mean = eval_realism(gray, lambda img: torch.full((img.shape[0], 1, 2, 2), -0.5), black_data, MASK)
        assert mean == 0.0

    def test_above_one_clamped(self):
        assert realism_scores(lambda t: torch.full((2, 1, 3, 3), 4.0), torch.zeros(2, 3, 8, 8)) == [1.0, 1.0]

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.0, 0.4), st.floats(0.01, 0.4))
    def test_monotone(self, base, delta):
        grid = torch.rand(1, 1, 4, 4, generator=torch.Generator().manual_seed(0)) * 0.2 + base
        lo, = realism_scores(lambda t: grid, torch.zeros(1, 3, 8, 8))
        hi, = realism_scores(lambda t: grid + delta, torch.zeros(1, 3, 8, 8))
        assert hi > lo


class TestEvaluate:
    def test_report_consistency(self, noisy_data):
        d = lambda img: torch.full((img.shape[0], 1, 2, 2), 0.3)
        report = evaluate(gray, d, noisy_data, MASK, (0, 0, 0), batch_size=4, model_id="stub")
        assert report.image_ids == noisy_data.image_ids
        assert report.mean_mse == pytest.approx(np.mean(report.mse))
        assert report.mean_realism == pytest.approx(0.3)
        assert all(v >= 0 for v in report.mse + report.band_mse)
        assert "model=stub" in report.summary()

    def test_matches_eval_mse(self, noisy_data):
        report = evaluate(gray, None, noisy_data, MASK, (0, 0, 0), batch_size=4)
        per_image, _ = eval_mse(gray, noisy_data, MASK, (0, 0, 0), batch_size=2)
        assert report.mse == pytest.approx(per_image)
        assert report.realism == []

    def test_write_csv(self, tmp_path):
        EvalReport(["a", "b"], [0.5, 0.25], [0.1, 1.0], [0.2, 0.3]).write_csv(tmp_path / "r.csv")
        rows = list(csv.reader(open(tmp_path / "r.csv", encoding="utf-8")))
        assert rows[0] == ["image_id", "mse", "realism", "band_mse"]
        assert rows[1] == ["a", "0.5", "0.1", "0.2"]

    def test_empty_split_rejected(self, tmp_path):
        (tmp_path / "test").mkdir()
        with pytest.raises(ConfigError):
            load_dataset(tmp_path, "test")


class TestSelectExtremes:
    def report(self, mse, realism=None):
        ids = [f"img_{k}" for k in range(len(mse))]
        return EvalReport(ids, list(mse), list(realism or []))

    def test_all(self):
        r = self.report([0.3, 0.1, 0.2])
        assert sorted(select_extremes(r, 3, "low_mse")) == r.image_ids

    def test_low_and_high(self):
        r = self.report([0.1, 0.2, 0.3], [0.9, 0.5, 0.1])
        assert select_extremes(r, 1, "low_mse") == ["img_0"]
        assert select_extremes(r, 1, "high_mse") == ["img_2"]
        assert select_extremes(r, 1, "high_realism") == ["img_0"]

    def test_ties_by_id(self):
        r = EvalReport(["c", "a", "b"], [0.5, 0.5, 0.5])
        assert select_extremes(r, 2, "low_mse") == ["a", "b"]
        assert select_extremes(r, 2, "high_mse") == ["a", "b"]

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=2, max_size=30, unique=True), st.integers(1, 15))
    def test_disjoint(self, values, k):
        k = min(k, len(values) // 2)
        r = self.report(values)
        low, high = select_extremes(r, k, "low_mse"), select_extremes(r, k, "high_mse")
        assert not set(low) & set(high)
        assert len(low) == len(high) == k

    def test_errors(self):
        r = self.report([0.1, 0.2])
        with pytest.raises(ConfigError):
            select_extremes(r, 3, "low_mse")
        with pytest.raises(ConfigError):
            select_extremes(r, 1, "mid_mse")
        with pytest.raises(ConfigError):
            select_extremes(r, 1, "high_realism")


class TestBandEnergy:
    def test_flat_is_zero(self):
        assert band_gradient_energy(torch.zeros(2, 3, 16, 16), MASK) == 0.0

    def test_checkerboard(self):
        img = np.indices((16, 16)).sum(axis=0) % 2 * 2.0 - 1.0
        batch = np.repeat(img[None, :, :, None], 3, axis=3)
        # interior band pixels: horizontal and vertical steps of 1 in each of 3 channels
        assert band_gradient_energy(batch, MASK) > 4.0

    def test_gallery(self, tmp_path):
        write_gallery(tmp_path / "g.png", [[np.zeros((8, 8, 3))] * 3, [np.ones((8, 8, 3))] * 2])
        from PIL import Image

        assert Image.open(tmp_path / "g.png").size == (3 * 10 + 2, 2 * 10 + 2)
