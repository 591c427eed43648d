import numpy as np
import pytest

from marginclip.data import Dataset
from marginclip.errors import ConfigError, EmptyDatasetError
from marginclip.mitigation import (
    MarginMaximaSet,
    MmacConfig,
    correctly_classified_subset,
    generate_maxima,
    initial_bounds,
    maximize_margin,
    mmac_objective,
    run_mmac,
    update_lambda,
)
from marginclip.nn import (
    Activation,
    ClipBounds,
    Conv2D,
    Dense,
    Flatten,
    MaxPool2D,
    Network,
    logits_batched,
    margin,
    predict,
)


def small_mmac(**overrides):
    values = {
        "t_max": 4,
        "refresh_period": 2,
        "maxima_per_class": 2,
        "ascent_steps": 3,
        "batch_size": 16,
    }
    values.update(overrides)
    return MmacConfig(**values)


def same_parameters(a, b):
    return all(
        np.array_equal(pa[name], pb[name])
        for pa, pb in zip(a.parameters(), b.parameters(), strict=True)
        for name in pa
    )


class TestMarginAscent:
    """Test projected gradient ascent on class margins."""

    def test_margins_never_decrease(self, conv_net):
        result = maximize_margin(conv_net, None, 1, 4, 20, 0.1, seed=0)
        steps = np.diff(result.trajectory, axis=0)
        assert np.all(steps >= 0)

    def test_points_stay_in_feasible_box(self, conv_net):
        result = maximize_margin(conv_net, None, 0, 4, 10, 5.0, seed=0)
        assert result.points.min() >= 0.0
        assert result.points.max() <= 1.0

    def test_results_sorted_and_match_network(self, conv_net):
        z = ClipBounds.constant(conv_net, 0.5)
        result = maximize_margin(conv_net, z, 2, 5, 5, 0.1, seed=1)
        assert np.all(np.diff(result.margins) <= 0)
        recomputed = margin(logits_batched(conv_net, result.points, z), 2)
        assert np.allclose(recomputed, result.margins, atol=1e-5)

    def test_same_seed_is_reproducible(self, dense_net):
        a = maximize_margin(dense_net, None, 0, 3, 5, 0.1, seed=4)
        b = maximize_margin(dense_net, None, 0, 3, 5, 0.1, seed=4)
        assert np.array_equal(a.points, b.points)

    def test_every_class_gets_maxima(self, dense_net):
        maxima = generate_maxima(dense_net, None, 2, 3, 0.1, seed=0)
        assert maxima.class_count == 3
        assert maxima.total_count == 6
        assert maxima.recorded_with is None

    @pytest.mark.parametrize("c", [0, 1])
    def test_matches_grid_search_on_linear_classifier(self, c):
        """Ascent on a 2-input linear classifier finds the 101x101 grid optimum."""
        weight = np.array([[2.0, 0.0, 0.5], [-1.0, 1.0, 0.0]])
        net = Network((2,), [Dense(2, 3, weight, np.zeros(3))], 3)
        result = maximize_margin(net, None, c, 4, 100, 0.1, seed=0)
        axis = np.linspace(0.0, 1.0, 101)
        grid = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
        best = margin(logits_batched(net, grid), c).max()
        assert result.margins[0] == pytest.approx(best, abs=1e-3)


class TestLambdaSchedule:
    """Test the lambda update rule."""

    def test_accuracy_above_pi_scales_up(self):
        assert update_lambda(0.1, 0.96, 0.95, 1.2) == pytest.approx(0.12)

    def test_accuracy_below_pi_scales_down(self):
        assert update_lambda(0.12, 0.94, 0.95, 1.2) == pytest.approx(0.1)

    def test_accuracy_equal_to_pi_scales_up(self):
        assert update_lambda(1.0, 0.95, 0.95, 2.0) == 2.0

    def test_alpha_must_exceed_one(self):
        with pytest.raises(ConfigError):
            update_lambda(0.1, 0.9, 0.95, 1.0)


class TestMmacConfig:
    """Test bound-learning configuration checks."""

    @pytest.mark.parametrize(
        "overrides",
        [
            {"alpha": 1.0},
            {"pi": 0.0},
            {"delta": 0.0},
            {"t_max": -1},
            {"refresh_period": 5, "t_max": 4},
            {"top_k": 3},
            {"z_init": 0.0},
        ],
    )
    def test_invalid_values_raise(self, overrides):
        with pytest.raises(ConfigError):
            small_mmac(**overrides).validate()


class TestObjective:
    """Test the bound-learning objective and its gradient."""

    def test_gradient_matches_finite_differences(self, conv_net, conv_dataset):
        net = conv_net.astype(np.float64)
        z = ClipBounds.constant(net, 0.3)
        maxima = generate_maxima(net, z, 2, 3, 0.1, seed=0)
        lam = 0.7
        result = mmac_objective(net, z, conv_dataset, maxima, lam)
        eps = 1e-4
        checked = 0
        for layer, upper in enumerate(z.upper):
            for j in range(len(upper)):
                plus, minus = z.copy(), z.copy()
                plus.upper[layer][j] += eps
                minus.upper[layer][j] -= eps
                f_plus = mmac_objective(net, plus, conv_dataset, maxima, lam).value
                f_minus = mmac_objective(net, minus, conv_dataset, maxima, lam).value
                numeric = (f_plus - f_minus) / (2 * eps)
                analytic = result.d_bounds.upper[layer][j]
                # skip coordinates sitting on a clipping kink
                if abs(numeric - analytic) > 1e-4 * max(1.0, abs(numeric)):
                    left = (result.value - f_minus) / eps
                    right = (f_plus - result.value) / eps
                    if not np.isclose(left, right, rtol=1e-3, atol=1e-6):
                        continue
                assert analytic == pytest.approx(numeric, rel=1e-4, abs=1e-6)
                checked += 1
        assert checked > 0

    def test_value_combines_both_terms(self, conv_net, conv_dataset):
        z = ClipBounds.constant(conv_net, 0.5)
        maxima = generate_maxima(conv_net, z, 2, 2, 0.1, seed=0)
        result = mmac_objective(conv_net, z, conv_dataset, maxima, 0.25)
        assert result.value == pytest.approx(result.term1 + 0.25 * result.term2)

    def test_unbounded_network_has_zero_logit_term(self, conv_net, conv_dataset):
        z = ClipBounds.unbounded(conv_net)
        maxima = generate_maxima(conv_net, None, 1, 2, 0.1, seed=0)
        assert mmac_objective(conv_net, z, conv_dataset, maxima, 1.0).term1 == 0.0

    def test_top_k_keeps_best_points(self, conv_net, conv_dataset):
        z = ClipBounds.constant(conv_net, 0.5)
        maxima = generate_maxima(conv_net, z, 3, 2, 0.1, seed=0)
        full = mmac_objective(conv_net, z, conv_dataset, maxima, 1.0)
        best = mmac_objective(conv_net, z, conv_dataset, maxima, 1.0, top_k=1)
        assert best.term2 >= full.term2 - 1e-6

    def test_missing_maxima_raise(self, conv_net, conv_dataset):
        z = ClipBounds.constant(conv_net, 0.5)
        empty = MarginMaximaSet([np.zeros((0, 4, 4, 2))] * 3, [np.zeros(0)] * 3)
        with pytest.raises(ValueError):
            mmac_objective(conv_net, z, conv_dataset, empty, 1.0)


class TestRunMmac:
    """Test the bound-learning loop."""

    def test_zero_iterations_return_initial_bounds(self, conv_net, conv_dataset):
        result = run_mmac(conv_net, conv_dataset, small_mmac(t_max=0))
        assert result.records == []
        assert all(np.all(u == 1.0) for u in result.z_star.upper)

    def test_network_parameters_unchanged(self, conv_net, conv_dataset):
        before = conv_net.copy()
        run_mmac(conv_net, conv_dataset, small_mmac())
        assert same_parameters(before, conv_net)

    def test_lambda_follows_update_rule(self, conv_net, conv_dataset):
        cfg = small_mmac(t_max=5)
        result = run_mmac(conv_net, conv_dataset, cfg)
        assert result.records[0].lambda_ == cfg.lambda0
        for prev, cur in zip(result.records, result.records[1:]):
            expected = update_lambda(prev.lambda_, prev.clean_acc, cfg.pi, cfg.alpha)
            assert cur.lambda_ == pytest.approx(expected)

    def test_bounds_stay_above_floor(self, conv_net, conv_dataset):
        result = run_mmac(conv_net, conv_dataset, small_mmac(delta=50.0))
        assert all(np.all(u > 0) for u in result.z_star.upper)
        assert result.z_star.is_finite()

    def test_reports_progress_per_iteration(self, conv_net, conv_dataset):
        seen = []
        result = run_mmac(conv_net, conv_dataset, small_mmac(), on_iteration=seen.append)
        assert seen == result.records
        assert [r.iteration for r in seen] == [0, 1, 2, 3]
        assert result.subset_size == len(conv_dataset)

    def test_leaky_network_learns_two_sided_bounds(self, rng):
        layers = [
            Conv2D(2, 3, 3, padding=1),
            Activation("leaky_relu", 0.1),
            MaxPool2D(2),
            Flatten(),
            Dense(12, 3),
        ]
        net = Network((4, 4, 2), layers, 3).initialize(2)
        images = rng.random((30, 4, 4, 2)).astype(np.float32)
        clean = Dataset(images, predict(net, images), 3)
        result = run_mmac(net, clean, small_mmac(t_max=2, refresh_period=1))
        assert result.z_star.two_sided
        assert all(np.all(lo < 0) for lo in result.z_star.lower)

    def test_profile_initialization_uses_activation_maxima(self, conv_net, conv_dataset):
        z = initial_bounds(conv_net, conv_dataset, small_mmac(init_from_profile=True))
        assert all(np.all(u > 0) for u in z.upper)
        assert not z.two_sided

    def test_all_misclassified_raises(self, conv_net, conv_dataset):
        wrong = Dataset(conv_dataset.images, (conv_dataset.labels + 1) % 3, 3)
        with pytest.raises(EmptyDatasetError):
            correctly_classified_subset(conv_net, wrong)
        with pytest.raises(EmptyDatasetError):
            run_mmac(conv_net, wrong, small_mmac())


    def test_last_feasible_selection_meets_pi(self, conv_net, conv_dataset):
        cfg = small_mmac(t_max=8, delta=5.0, lambda0=10.0)
        result = run_mmac(conv_net, conv_dataset, cfg)
        feasible = [r for r in result.records if r.clean_acc >= cfg.pi]
        if feasible:
            assert result.selected_iteration == feasible[-1].iteration
            assert result.final_clean_acc == feasible[-1].clean_acc
            assert result.accuracy_constraint_met
        else:
            assert result.selected_iteration == result.records[-1].iteration

    def test_final_selection_returns_last_iterate(self, conv_net, conv_dataset):
        cfg = small_mmac(t_max=5, selection="final")
        result = run_mmac(conv_net, conv_dataset, cfg)
        assert result.selected_iteration == 4
        assert result.final_clean_acc == result.records[-1].clean_acc

    def test_selection_is_validated(self):
        with pytest.raises(ConfigError):
            small_mmac(selection="best").validate()


def difference_net():
    """1x1x2 images -> identity ReLU layer -> logits (h0 - h1, h1 - h0)."""
    eye = np.eye(2)
    mix = np.array([[1.0, -1.0], [-1.0, 1.0]])
    layers = [Flatten(), Dense(2, 2, eye, np.zeros(2)), Activation(), Dense(2, 2, mix, np.zeros(2))]
    return Network((1, 1, 2), layers, 2)


class TestMarginSuppression:
    """Test that learned bounds never raise the attainable class margin."""

    def test_learned_bounds_cap_maximum_margins(self, rng):
        net = difference_net()
        images = rng.random((40, 1, 1, 2))
        clean = Dataset(images, predict(net, images), 2)
        result = run_mmac(net, clean, small_mmac(t_max=6, delta=0.5))
        for c in range(2):
            bounded = maximize_margin(net, result.z_star, c, 4, 50, 0.1, seed=3)
            unbounded = maximize_margin(net, None, c, 4, 50, 0.1, seed=3)
            assert bounded.margins[0] <= unbounded.margins[0] + 1e-6
