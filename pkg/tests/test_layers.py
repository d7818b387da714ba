import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pfm_lab import autograd as ag
from pfm_lab.analysis import representability_check
from pfm_lab.filters import (HORIZONTAL_LINE, VERTICAL_LINE, FilterBank, make_edge_line_bank,
                             make_random_bank, make_translating_bank)
from pfm_lab.layers import (PFM, BasicBlock, BatchNorm2d, Conv2d, Module, Parameter, SmoothedSkip,
                            shape_only, smoothed_skip, switch_eval)

from oracles import naive_conv2d, relu_response_sum

EDGE9 = make_edge_line_bank(9)


def test_translating_pfm_without_relu_equals_conv(rng):
    f = rng.standard_normal((3, 3))
    pfm = PFM(1, 1, make_translating_bank(), use_relu=False, batch_norm=False)
    # filter l sits at (i_l, j_l); its weight is the target entry at that position
    pfm.set_mixing(f.reshape(-1))
    x = rng.standard_normal((2, 1, 7, 6))
    np.testing.assert_allclose(pfm(ag.Tensor(x)).data, naive_conv2d(x, f[None, None], 1, 1),
                               rtol=0, atol=1e-10)


def test_toy_pair_pfm_matches_relu_score_oracle(rng):
    bank = FilterBank.from_array([HORIZONTAL_LINE, VERTICAL_LINE])
    pfm = PFM(1, 1, bank, use_relu=True, batch_norm=False)
    pfm.set_mixing([1.0, -1.0])
    img = (rng.random((12, 12)) < 0.2).astype(float)
    per_pixel = pfm(ag.Tensor(img[None, None])).data
    want = relu_response_sum(img, HORIZONTAL_LINE) - relu_response_sum(img, VERTICAL_LINE)
    assert per_pixel.sum() == pytest.approx(want, abs=1e-12)


def test_zero_input_gives_zero_output():
    pfm = PFM(2, 3, EDGE9, batch_norm=False)
    pfm.set_mixing(np.ones((3, 2, 9)))
    np.testing.assert_array_equal(pfm(ag.Tensor(np.zeros((1, 2, 5, 5)))).data, 0.0)


@pytest.mark.parametrize("n_filters", [2, 9, 18])
def test_pfm_parameter_count(n_filters):
    bank = make_random_bank(n_filters, 1)
    pfm = PFM(4, 6, bank, batch_norm=False)
    assert sum(p.size for p in pfm.trainable_parameters()) == n_filters * 4 * 6


def test_pfm_with_nine_filters_matches_conv_count():
    pfm = PFM(5, 7, EDGE9, batch_norm=False)
    conv = Conv2d(5, 7, 3)
    assert sum(p.size for p in pfm.trainable_parameters()) == conv.weight.size == 9 * 5 * 7


def test_pfm_batch_norm_covers_all_responses():
    pfm = PFM(3, 4, EDGE9)
    assert pfm.bn.weight.shape == (27,)
    names = [n for n, _ in pfm.named_parameters()]
    assert names == ["bn.weight", "bn.bias", "mix.weight"]


def test_fixed_filters_get_no_gradient(rng):
    pfm = PFM(1, 2, EDGE9)
    pfm(ag.Tensor(rng.standard_normal((2, 1, 5, 5)))).sum().backward()
    assert pfm.filters.grad is None
    assert pfm.mix.weight.grad is not None


def test_trainable_filters_start_at_bank_and_get_gradient(rng):
    pfm = PFM(1, 2, EDGE9, filters_trainable=True)
    np.testing.assert_array_equal(pfm.filters.data, EDGE9.values)
    assert pfm.filters.data is not EDGE9.values
    pfm.set_mixing(rng.standard_normal((2, 1, 9)))
    pfm(ag.Tensor(rng.standard_normal((2, 1, 5, 5)))).sum().backward()
    assert pfm.filters.grad.shape == (9, 3, 3) and np.abs(pfm.filters.grad).sum() > 0
    assert sum(p.size for p in pfm.trainable_parameters()) == 9 * 2 + 9 * 2 + 81


@settings(max_examples=30, deadline=None)
@given(c=st.integers(1, 3), out=st.integers(1, 4), h=st.integers(3, 9), w=st.integers(3, 9),
       stride=st.sampled_from([1, 2]), use_relu=st.booleans())
def test_pfm_output_shape_matches_conv(c, out, h, w, stride, use_relu):
    x = np.random.default_rng(h * 31 + w).standard_normal((2, c, h, w))
    pfm = PFM(c, out, EDGE9, stride=stride, use_relu=use_relu)
    got = pfm(ag.Tensor(x)).shape
    assert got == Conv2d(c, out, 3, stride).out_shape(x.shape) == pfm.out_shape(x.shape)


def test_pfm_depthwise_channel_ordering(rng):
    # mixing weight index c * F + l must address filter l on channel c
    pfm = PFM(2, 1, EDGE9, use_relu=False, batch_norm=False)
    w = np.zeros((1, 2, 9))
    w[0, 1, 4] = 1.0
    pfm.set_mixing(w)
    x = rng.standard_normal((1, 2, 6, 6))
    want = naive_conv2d(x[:, 1:2], EDGE9.kernel(5).values[None, None], 1, 1)
    np.testing.assert_allclose(pfm(ag.Tensor(x)).data, want, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_pfm_without_relu_represents_any_kernel(seed):
    r = np.random.default_rng(seed)
    target = r.uniform(-1, 1, (2, 3, 3))
    pfm = PFM(2, 1, EDGE9, use_relu=False, batch_norm=False)
    pfm.set_mixing(np.stack([representability_check(EDGE9, t)[1] for t in target]))
    x = r.standard_normal((1, 2, 6, 6))
    np.testing.assert_allclose(pfm(ag.Tensor(x)).data, naive_conv2d(x, target[None], 1, 1), atol=1e-10)


# --- smoothed skip ----------------------------------------------------------------

def test_blur_of_bright_pixel_has_binomial_footprint():
    x = np.zeros((1, 1, 5, 5))
    x[0, 0, 2, 2] = 1.0
    identity = np.ones((1, 1, 1, 1))
    blurred = ag.depthwise_conv2d(x, SmoothedSkip(1, 1).blur, padding=1).data[0, 0]
    np.testing.assert_array_equal(blurred[1:4, 1:4], np.outer([1, 2, 1], [1, 2, 1]) / 16)
    assert blurred[2, 2] == 4 / 16 and blurred.sum() == 1.0
    # stride 2 then samples rows/cols 0, 2, 4
    np.testing.assert_array_equal(smoothed_skip(x, identity).data[0, 0], blurred[::2, ::2])


def test_blur_keeps_constant_interior():
    out = ag.depthwise_conv2d(np.full((1, 1, 6, 6), 2.5), SmoothedSkip(1, 1).blur, padding=1).data
    np.testing.assert_allclose(out[0, 0, 1:-1, 1:-1], 2.5, rtol=0, atol=1e-15)


def test_smoothed_skip_shape_and_stride_contract(rng):
    skip = SmoothedSkip(3, 5)
    x = rng.standard_normal((2, 3, 7, 8))
    assert skip(ag.Tensor(x)).shape == skip.out_shape(x.shape) == (2, 5, 4, 4)
    with pytest.raises(ValueError):
        SmoothedSkip(3, 5, stride=1)
    with pytest.raises(ValueError):
        smoothed_skip(x, np.ones((5, 3, 1, 1)), stride=1)


def test_basic_block_uses_smoothed_skip_only_when_strided():
    def conv(i, o, s):
        return Conv2d(i, o, 3, s)

    assert isinstance(BasicBlock(4, 8, 2, conv, True).shortcut[0], SmoothedSkip)
    assert isinstance(BasicBlock(4, 8, 1, conv, True).shortcut[0], Conv2d)
    assert BasicBlock(4, 4, 1, conv, True).shortcut is None


# --- switch form ------------------------------------------------------------------

def test_switch_eval_examples():
    w1 = np.zeros((3, 3))
    w1[1, 1] = 1.0
    x = np.array([[5.0, -5.0, 0.0]])
    np.testing.assert_array_equal(switch_eval(w1, -1.0, 3.0, 2.0, x), [[15.0, 10.0, 0.0]])


def test_switch_is_linear_when_q12_is_q11_over_a(rng):
    w1 = rng.standard_normal((3, 3))
    x = rng.standard_normal((4, 4))
    y = naive_conv2d(x[None, None], w1[None, None], 1, 1)[0, 0]
    np.testing.assert_allclose(switch_eval(w1, -1.0, 1.7, -1.7, x), 1.7 * y, atol=1e-12)
    np.testing.assert_allclose(switch_eval(w1, -0.5, 1.7, -3.4, x), 1.7 * y, atol=1e-12)


def test_switch_with_equal_weights_and_a_minus_one_is_absolute_value(rng):
    w1 = rng.standard_normal((3, 3))
    x = rng.standard_normal((4, 4))
    y = naive_conv2d(x[None, None], w1[None, None], 1, 1)[0, 0]
    np.testing.assert_allclose(switch_eval(w1, -1.0, 1.7, 1.7, x), 1.7 * np.abs(y), atol=1e-12)


def test_switch_rejects_nonnegative_a():
    for a in (0.0, 1.0):
        with pytest.raises(ValueError):
            switch_eval(np.ones((3, 3)), a, 1.0, 1.0, np.zeros((3, 3)))


def test_sign_pair_responses_are_complementary(rng):
    w = rng.standard_normal((3, 3))
    pfm = PFM(1, 1, FilterBank.from_array([w, -w]), batch_norm=False)
    r = pfm.responses(ag.Tensor(rng.standard_normal((3, 1, 6, 6)))).data
    assert not np.any((r[:, 0] > 0) & (r[:, 1] > 0))


# --- module registry --------------------------------------------------------------

def test_parameters_registered_once():
    class Twice(Module):
        def __init__(self):
            self.a = Conv2d(1, 2, 3)
            self.blocks = [Conv2d(2, 2, 1), BatchNorm2d(2)]

    m = Twice()
    params = m.parameters()
    assert len(params) == len({id(p) for p in params}) == 4
    assert [n for n, _ in m.named_parameters()] == ["a.weight", "blocks.0.weight", "blocks.1.weight",
                                                    "blocks.1.bias"]


def test_shape_only_allocates_nothing():
    with shape_only():
        conv = Conv2d(512, 512, 3)
    assert conv.weight.data is None and conv.weight.size == 512 * 512 * 9
    assert isinstance(conv.weight, Parameter)


def test_eval_mode_propagates():
    pfm = PFM(1, 1, EDGE9)
    pfm.eval()
    assert not pfm.bn.training
    pfm.train()
    assert pfm.bn.training
