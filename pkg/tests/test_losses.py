import math

import numpy as np
import pytest

from fdakit.losses import (
    EmptyReductionError,
    IGNORE_LABEL,
    LossConfig,
    charbonnier,
    combined_loss,
    cross_entropy,
    pixel_entropy,
    robust_entropy,
    robust_entropy_grad,
    sst_loss,
)

from conftest import make_prediction
from oracles import cross_entropy_loop, entropy_loop, robust_entropy_loop


def one_hot(labels, k):
    labels = np.asarray(labels)
    out = np.zeros(labels.shape + (k,))
    np.put_along_axis(out, labels[:, :, None], 1.0, axis=2)
    return out


class TestCrossEntropy:
    def test_perfect_one_hot_prediction_is_zero(self, rng):
        labels = rng.integers(0, 4, size=(5, 6))
        assert cross_entropy(one_hot(labels, 4), labels) <= 1e-9

    def test_uniform_prediction_is_log_k(self, rng):
        k = 19
        pred = np.full((4, 4, k), 1.0 / k)
        labels = rng.integers(0, k, size=(4, 4))
        assert abs(cross_entropy(pred, labels) - math.log(19)) <= 1e-9

    def test_matches_loop_oracle(self, rng):
        pred = make_prediction(rng, 4, 4, 3)
        labels = rng.integers(0, 3, size=(4, 4))
        labels[0, 0] = IGNORE_LABEL
        assert cross_entropy(pred, labels) == pytest.approx(
            cross_entropy_loop(pred, labels), abs=1e-12)

    def test_sum_reduction(self, rng):
        pred = make_prediction(rng, 3, 3, 4)
        labels = rng.integers(0, 4, size=(3, 3))
        cfg = LossConfig(reduction="sum")
        assert cross_entropy(pred, labels, cfg) == pytest.approx(
            cross_entropy_loop(pred, labels, reduction="sum"), abs=1e-12)

    def test_all_ignored_raises(self, rng):
        pred = make_prediction(rng, 2, 2, 3)
        labels = np.full((2, 2), IGNORE_LABEL)
        with pytest.raises(EmptyReductionError):
            cross_entropy(pred, labels)

    def test_is_non_negative(self, rng):
        for _ in range(10):
            pred = make_prediction(rng, 3, 3, 5)
            labels = rng.integers(0, 5, size=(3, 3))
            assert cross_entropy(pred, labels) >= 0.0

    def test_rejects_out_of_range_label(self, rng):
        pred = make_prediction(rng, 2, 2, 3)
        labels = np.full((2, 2), 7)
        with pytest.raises(ValueError, match="labels"):
            cross_entropy(pred, labels)

    def test_rejects_unnormalized_probabilities(self, rng):
        pred = np.full((2, 2, 3), 0.5)
        with pytest.raises(ValueError, match="sum to 1"):
            cross_entropy(pred, np.zeros((2, 2), dtype=int))


class TestPixelEntropy:
    def test_one_hot_pixel_is_zero(self):
        pred = np.zeros((1, 1, 4))
        pred[0, 0, 2] = 1.0
        assert pixel_entropy(pred)[0, 0] == 0.0

    def test_uniform_two_class_is_log_two(self):
        pred = np.full((1, 1, 2), 0.5)
        assert pixel_entropy(pred)[0, 0] == pytest.approx(math.log(2))

    def test_skewed_pair(self):
        pred = np.array([[[0.9, 0.1]]])
        want = -(0.9 * math.log(0.9) + 0.1 * math.log(0.1))
        assert pixel_entropy(pred)[0, 0] == pytest.approx(want, abs=1e-12)
        assert pixel_entropy(pred)[0, 0] == pytest.approx(0.3251, abs=1e-4)

    def test_bounded_by_log_k(self, rng):
        for k in (2, 3, 7):
            pred = make_prediction(rng, 5, 5, k)
            ent = pixel_entropy(pred)
            assert ent.min() >= 0.0
            assert ent.max() <= math.log(k) + 1e-12

    def test_matches_loop_oracle(self, rng):
        pred = make_prediction(rng, 4, 5, 3)
        np.testing.assert_allclose(pixel_entropy(pred), entropy_loop(pred), atol=1e-12)


class TestCharbonnier:
    def test_zero_point_value(self):
        assert charbonnier(0.0, 2.0) == 1e-12

    def test_unit_value(self):
        assert charbonnier(1.0, 2.0) == pytest.approx((1.0 + 1e-6) ** 2)

    def test_even_and_increasing(self):
        assert charbonnier(0.7, 2.0) == charbonnier(-0.7, 2.0)
        assert charbonnier(0.8, 2.0) > charbonnier(0.2, 2.0)
        xs = np.linspace(0, 3, 50)
        vals = charbonnier(xs, 0.7)
        assert np.all(np.diff(vals) > 0)

    def test_rejects_non_positive_eta(self):
        with pytest.raises(ValueError, match="eta"):
            charbonnier(1.0, 0.0)


class TestRobustEntropy:
    def test_one_hot_map(self, rng):
        labels = rng.integers(0, 3, size=(3, 3))
        assert robust_entropy(one_hot(labels, 3)) == 1e-12

    def test_uniform_two_class_closed_form(self):
        pred = np.full((2, 2, 2), 0.5)
        want = (math.log(2) ** 2 + 1e-6) ** 2
        assert robust_entropy(pred) == pytest.approx(want, abs=1e-12)
        assert robust_entropy(pred) == pytest.approx(0.23083, abs=1e-5)

    def test_matches_loop_oracle(self, rng):
        pred = make_prediction(rng, 4, 4, 3)
        assert robust_entropy(pred) == pytest.approx(robust_entropy_loop(pred), abs=1e-9)

    def test_permutation_invariance(self, rng):
        pred = make_prediction(rng, 4, 4, 3)
        shuffled = pred[rng.permutation(4)][:, rng.permutation(4)]
        relabeled = pred[:, :, rng.permutation(3)]
        assert robust_entropy(shuffled) == pytest.approx(robust_entropy(pred), rel=1e-12)
        assert robust_entropy(relabeled) == pytest.approx(robust_entropy(pred), rel=1e-12)

    def test_deterministic_reduction(self, rng):
        pred = make_prediction(rng, 16, 16, 5)
        assert robust_entropy(pred) == robust_entropy(pred.copy())

    def test_gradient_matches_central_differences(self, rng):
        cfg = LossConfig()
        step = 1e-5
        for _ in range(5):
            pred = make_prediction(rng, 2, 2, 3)
            grad = robust_entropy_grad(pred, cfg)
            for i in range(2):
                for j in range(2):
                    for k in range(3):
                        hi = pred.copy()
                        lo = pred.copy()
                        hi[i, j, k] += step
                        lo[i, j, k] -= step
                        fd = (robust_entropy(hi, cfg, validate=False)
                              - robust_entropy(lo, cfg, validate=False)) / (2 * step)
                        tol = 1e-3 * max(abs(fd), abs(grad[i, j, k]), 1e-8)
                        assert abs(fd - grad[i, j, k]) <= tol


class TestCombined:
    def test_linear_combination(self):
        assert combined_loss(1.0, 2.0) == pytest.approx(1.01)

    def test_zero_lambda_reduces_to_cross_entropy(self):
        cfg = LossConfig(lambda_ent=0.0)
        assert combined_loss(3.7, 123.0, cfg) == 3.7

    def test_zeros(self):
        assert combined_loss(0.0, 0.0, LossConfig(lambda_ent=0.42)) == 0.0

    def test_sst_reduces_to_combined_when_pseudo_term_vanishes(self):
        assert sst_loss(1.0, 2.0, 0.0) == combined_loss(1.0, 2.0)

    def test_sst_arithmetic(self):
        assert sst_loss(1.0, 2.0, 0.5) == pytest.approx(1.51)

    def test_sst_all_ignored_pseudo_labels_surface_the_error(self, rng):
        pred = make_prediction(rng, 2, 2, 3)
        pseudo = np.full((2, 2), IGNORE_LABEL)
        with pytest.raises(EmptyReductionError):
            sst_loss(1.0, 2.0, cross_entropy(pred, pseudo))

    def test_rejects_non_finite_terms(self):
        with pytest.raises(ValueError, match="finite"):
            combined_loss(float("nan"), 1.0)


class TestConfig:
    def test_defaults(self):
        cfg = LossConfig()
        assert cfg.eta == 2.0 and cfg.lambda_ent == 0.005 and cfg.epsilon == 0.001

    @pytest.mark.parametrize("kwargs", [{"eta": 0.0}, {"lambda_ent": -1.0}, {"reduction": "max"}])
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValueError):
            LossConfig(**kwargs)
