import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wadapt import autodiff as ad
from wadapt.errors import ConfigError, InputError
from wadapt.optim import (
    GradientSet,
    OptimizerState,
    clip,
    clip_parameters,
    gradient_of,
    max_abs_trainable,
    rmsprop_step,
)
from wadapt.types import ParameterSet


def simple_params(values: dict, frozen=()):
    ps = ParameterSet()
    for name, v in values.items():
        ps.add(name, np.asarray(v, dtype=np.float64), trainable=name not in frozen)
    return ps


class TestGradientOf:
    def test_sum_of_squares(self):
        ps = simple_params({"w": np.ones((2, 3))})
        grads = gradient_of(lambda b: ad.sum_(b["w"] * b["w"]), ps)
        np.testing.assert_array_equal(grads["w"], 2.0 * np.ones((2, 3)))

    def test_constant_loss_gives_zero_gradient(self):
        ps = simple_params({"w": np.ones(4)})
        grads = gradient_of(lambda b: ad.const(np.array(3.0)) + 0.0 * ad.sum_(b["w"] * 0.0), ps)
        np.testing.assert_array_equal(grads["w"], np.zeros(4))

    def test_only_trainable_keys_present(self):
        ps = simple_params({"w": np.ones(2), "stats": np.ones(2)}, frozen=("stats",))
        grads = gradient_of(lambda b: ad.sum_(b["w"] * b["stats"]), ps)
        assert grads.names() == ["w"]


class TestRMSProp:
    def test_hand_computed_step(self):
        ps = simple_params({"w": [1.0]})
        state = OptimizerState.for_params(ps, decay=0.99, epsilon=1e-8)
        rmsprop_step(ps, GradientSet({"w": np.array([1.0])}), state, lr=0.01)
        np.testing.assert_allclose(state.accumulators["w"], [0.01])
        expected = 1.0 - 0.01 * 1.0 / np.sqrt(0.01 + 1e-8)
        np.testing.assert_allclose(ps["w"].data, [expected])
        assert abs(ps["w"].data[0] - 0.9000) < 1e-4

    def test_zero_gradient_leaves_params(self):
        ps = simple_params({"w": [2.0, -3.0]})
        state = OptimizerState.for_params(ps)
        rmsprop_step(ps, GradientSet({"w": np.zeros(2)}), state, lr=0.5)
        np.testing.assert_array_equal(ps["w"].data, [2.0, -3.0])

    def test_frozen_entry_untouched(self):
        ps = simple_params({"w": [1.0], "frozen": [1.0]}, frozen=("frozen",))
        state = OptimizerState.for_params(ps)
        rmsprop_step(ps, GradientSet({"w": np.array([1.0]), "frozen": np.array([5.0])}),
                     state, lr=0.1)
        assert ps["frozen"].data[0] == 1.0
        assert ps["w"].data[0] != 1.0

    @settings(max_examples=20, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_lr_zero_is_identity(self, seed):
        rng = np.random.default_rng(seed)
        ps = simple_params({"w": rng.normal(size=5)})
        before = ps["w"].data.copy()
        state = OptimizerState.for_params(ps)
        rmsprop_step(ps, GradientSet({"w": rng.normal(size=5)}), state, lr=0.0)
        np.testing.assert_array_equal(ps["w"].data, before)

    def test_shape_mismatch_rejected(self):
        ps = simple_params({"w": np.ones(3)})
        state = OptimizerState.for_params(ps)
        with pytest.raises(ConfigError):
            rmsprop_step(ps, GradientSet({"w": np.ones(2)}), state, lr=0.1)


class TestClip:
    @pytest.mark.parametrize("x,c,expected", [
        (0.5, 0.01, 0.01),
        (-3.0, 1.0, -1.0),
        (0.005, 0.01, 0.005),
    ])
    def test_examples(self, x, c, expected):
        assert clip(x, c) == pytest.approx(expected)

    def test_rejects_nonpositive_bound(self):
        with pytest.raises(InputError):
            clip(1.0, 0.0)
        with pytest.raises(InputError):
            clip_parameters(simple_params({"w": [1.0]}), -0.1)

    def test_clip_parameters_examples(self):
        ps = simple_params({"w": [-5.0, 0.0, 5.0]})
        clip_parameters(ps, 2.0)
        np.testing.assert_array_equal(ps["w"].data, [-2.0, 0.0, 2.0])

        already = simple_params({"w": [0.005, -0.005]})
        clip_parameters(already, 0.01)
        np.testing.assert_array_equal(already["w"].data, [0.005, -0.005])

    def test_frozen_entries_not_clipped(self):
        ps = simple_params({"w": [5.0], "stats": [7.0]}, frozen=("stats",))
        clip_parameters(ps, 0.01)
        assert ps["stats"].data[0] == 7.0
        assert max_abs_trainable(ps) <= 0.01

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(min_value=-100, max_value=100,
                              allow_nan=False), min_size=1, max_size=8),
           st.floats(min_value=1e-4, max_value=10.0))
    def test_clip_postcondition(self, values, c):
        out = clip(np.array(values), c)
        assert np.all(out <= c) and np.all(out >= -c)
        interior = np.abs(np.array(values)) <= c
        np.testing.assert_array_equal(out[interior], np.array(values)[interior])
