"""Container validation and the convolution engine against a naive oracle."""

import numpy as np
import pytest

from oocs3d.errors import DimensionError, DomainError, InvalidKernelError
from oocs3d.tensor import (
    PAD_SAME,
    PAD_VALID,
    BinaryMask,
    ConvWeights,
    FeatureMap,
    Volume,
    conv3d_backward,
    conv3d_forward,
    conv3d_output_shape,
    pad_zero,
)

from oracles import central_difference, max_rel_err, naive_conv3d


class TestVolume:
    def test_accepts_3d_and_freezes_buffer(self):
        v = Volume(np.ones((2, 3, 4)), spacing=(0.5, 1.0, 2.0))
        assert v.data.shape == (2, 3, 4)
        assert v.spacing == (0.5, 1.0, 2.0)
        with pytest.raises(ValueError):
            v.data[0, 0, 0] = 9.0

    def test_rejects_wrong_rank(self):
        with pytest.raises(DimensionError):
            Volume(np.ones((3, 3)))
        with pytest.raises(DimensionError):
            Volume(np.ones((1, 2, 3, 4)))

    def test_rejects_nonfinite(self):
        bad = np.ones((2, 2, 2))
        bad[0, 0, 0] = np.nan
        with pytest.raises(DomainError):
            Volume(bad)

    def test_rejects_bad_spacing(self):
        with pytest.raises(DomainError):
            Volume(np.ones((2, 2, 2)), spacing=(1.0, 0.0, 1.0))
        with pytest.raises(DomainError):
            Volume(np.ones((2, 2, 2)), spacing=(1.0, -1.0, 1.0))


class TestBinaryMask:
    def test_accepts_bool_and_01_numeric(self):
        m1 = BinaryMask(np.array([[[True, False]]]))
        m2 = BinaryMask(np.array([[[1.0, 0.0]]]))
        assert m1.data.dtype == np.bool_
        assert m2.data.dtype == np.bool_
        assert m1.count == 1

    def test_rejects_other_values(self):
        with pytest.raises(DomainError):
            BinaryMask(np.array([[[0.0, 2.0]]]))
        with pytest.raises(DomainError):
            BinaryMask(np.array([[[0.5]]]))


class TestFeatureMap:
    def test_round_trip_with_volume(self):
        v = Volume(np.arange(8.0).reshape(2, 2, 2), spacing=(2.0, 1.0, 1.0))
        fm = FeatureMap.from_volume(v)
        assert fm.data.shape == (1, 2, 2, 2)
        back = fm.to_volume(v.spacing)
        np.testing.assert_array_equal(back.data, v.data)
        assert back.spacing == v.spacing

    def test_multichannel_to_volume_rejected(self):
        fm = FeatureMap(np.zeros((2, 2, 2, 2)))
        with pytest.raises(DimensionError):
            fm.to_volume((1.0, 1.0, 1.0))


class TestConvWeights:
    def test_shape_and_bias_validation(self):
        w = ConvWeights(np.zeros((2, 3, 3, 3, 3)), bias=np.zeros(2))
        assert w.k == 3
        with pytest.raises(InvalidKernelError):
            ConvWeights(np.zeros((2, 3, 4, 4, 4)))  # even k
        with pytest.raises(InvalidKernelError):
            ConvWeights(np.zeros((2, 3, 3, 3, 5)))  # non-cubic
        with pytest.raises(DimensionError):
            ConvWeights(np.zeros((2, 3, 3, 3, 3)), bias=np.zeros(3))


class TestPadZero:
    def test_margin_zero_is_identity(self):
        fm = FeatureMap(np.random.default_rng(0).normal(size=(2, 3, 3, 3)))
        out = pad_zero(fm, (0, 0, 0))
        np.testing.assert_array_equal(out.data, fm.data)

    def test_single_voxel_margin_one(self):
        fm = FeatureMap(np.full((1, 1, 1, 1), 5.0))
        out = pad_zero(fm, (1, 1, 1))
        assert out.data.shape == (1, 3, 3, 3)
        assert out.data[0, 1, 1, 1] == 5.0
        assert out.data.sum() == 5.0

    def test_anisotropic_margin_and_sum(self):
        rng = np.random.default_rng(3)
        fm = FeatureMap(rng.normal(size=(3, 4, 5, 2)))
        out = pad_zero(fm, (2, 0, 1))
        assert out.data.shape == (3, 8, 5, 4)
        assert out.data.sum() == pytest.approx(fm.data.sum(), rel=1e-12)

    def test_negative_margin_rejected(self):
        with pytest.raises(DomainError):
            pad_zero(FeatureMap(np.zeros((1, 2, 2, 2))), (1, -1, 1))


class TestOutputShape:
    def test_same_and_valid(self):
        assert conv3d_output_shape((5, 6, 7), 3, PAD_SAME) == (5, 6, 7)
        assert conv3d_output_shape((5, 6, 7), 3, PAD_VALID) == (3, 4, 5)

    def test_valid_too_small(self):
        with pytest.raises(DimensionError):
            conv3d_output_shape((2, 6, 7), 3, PAD_VALID)


class TestConvForward:
    def test_identity_kernel(self):
        rng = np.random.default_rng(1)
        x = FeatureMap(rng.normal(size=(1, 4, 5, 6)))
        w = ConvWeights(np.ones((1, 1, 1, 1, 1)))
        out = conv3d_forward(x, w, PAD_SAME)
        np.testing.assert_array_equal(out.data, x.data)

    def test_constant_input_zero_sum_kernel(self):
        # a kernel summing to zero annihilates constants away from borders
        rng = np.random.default_rng(2)
        kern = rng.normal(size=(1, 1, 3, 3, 3))
        kern -= kern.mean()
        x = FeatureMap(np.full((1, 6, 6, 6), 4.25))
        out = conv3d_forward(x, ConvWeights(kern), PAD_VALID)
        assert np.abs(out.data).max() < 1e-12

    def test_matches_oracle_fixed_case(self):
        rng = np.random.default_rng(7)
        x = FeatureMap(rng.normal(size=(2, 5, 6, 7)))
        w = ConvWeights(rng.normal(size=(3, 2, 3, 3, 3)), bias=rng.normal(size=3))
        for padding in (PAD_SAME, PAD_VALID):
            got = conv3d_forward(x, w, padding).data
            want = naive_conv3d(x.data, w.data, w.bias, padding)
            assert np.abs(got - want).max() < 1e-9

    def test_matches_oracle_randomized(self):
        rng = np.random.default_rng(11)
        for _ in range(40):
            k = int(rng.choice([1, 3, 5]))
            spatial = tuple(int(rng.integers(k, 9)) for _ in range(3))
            c_in = int(rng.integers(1, 4))
            c_out = int(rng.integers(1, 4))
            x = FeatureMap(rng.normal(size=(c_in,) + spatial))
            bias = rng.normal(size=c_out) if rng.random() < 0.5 else None
            w = ConvWeights(rng.normal(size=(c_out, c_in, k, k, k)), bias=bias)
            padding = PAD_SAME if rng.random() < 0.5 else PAD_VALID
            got = conv3d_forward(x, w, padding).data
            want = naive_conv3d(x.data, w.data, w.bias, padding)
            assert np.abs(got - want).max() < 1e-9

    def test_linearity_without_bias(self):
        rng = np.random.default_rng(13)
        x1 = rng.normal(size=(2, 5, 5, 5))
        x2 = rng.normal(size=(2, 5, 5, 5))
        w = ConvWeights(rng.normal(size=(2, 2, 3, 3, 3)))
        lhs = conv3d_forward(FeatureMap(2.0 * x1 - 0.5 * x2), w).data
        rhs = (
            2.0 * conv3d_forward(FeatureMap(x1), w).data
            - 0.5 * conv3d_forward(FeatureMap(x2), w).data
        )
        assert np.abs(lhs - rhs).max() < 1e-9

    def test_kernel_negation_is_bit_exact(self):
        rng = np.random.default_rng(17)
        x = FeatureMap(rng.normal(size=(1, 5, 5, 5)))
        kern = rng.normal(size=(2, 1, 3, 3, 3))
        pos = conv3d_forward(x, ConvWeights(kern)).data
        neg = conv3d_forward(x, ConvWeights(-kern)).data
        np.testing.assert_array_equal(neg, -pos)

    def test_channel_mismatch_rejected(self):
        x = FeatureMap(np.zeros((2, 4, 4, 4)))
        w = ConvWeights(np.zeros((1, 3, 3, 3, 3)))
        with pytest.raises(DimensionError):
            conv3d_forward(x, w)

    def test_bad_padding_name_rejected(self):
        x = FeatureMap(np.zeros((1, 4, 4, 4)))
        w = ConvWeights(np.zeros((1, 1, 3, 3, 3)))
        with pytest.raises(DomainError):
            conv3d_forward(x, w, "reflect")


class TestConvBackward:
    @staticmethod
    def _loss_grads(x, w, probe, padding):
        out = conv3d_forward(x, w, padding)
        gx, gw = conv3d_backward(x, w, FeatureMap(probe), padding)
        return out, gx, gw

    def test_zero_upstream_gives_zero_grads(self):
        rng = np.random.default_rng(19)
        x = FeatureMap(rng.normal(size=(2, 4, 4, 4)))
        w = ConvWeights(rng.normal(size=(2, 2, 3, 3, 3)), bias=rng.normal(size=2))
        probe = np.zeros((2, 4, 4, 4))
        _, gx, gw = self._loss_grads(x, w, probe, PAD_SAME)
        assert not gx.data.any()
        assert not gw.data.any()
        assert not gw.bias.any()

    @pytest.mark.parametrize("padding", [PAD_SAME, PAD_VALID])
    @pytest.mark.parametrize("with_bias", [False, True])
    def test_weight_grad_matches_central_difference(self, padding, with_bias):
        # the probe objective is linear in w, so the FD error is pure roundoff
        rng = np.random.default_rng(23)
        x = FeatureMap(rng.normal(size=(2, 4, 4, 5)))
        bias = rng.normal(size=2) if with_bias else None
        w0 = rng.normal(size=(2, 2, 3, 3, 3))
        probe = rng.normal(size=conv3d_output_shape((4, 4, 5), 3, padding))
        probe = np.broadcast_to(probe, (2,) + probe.shape).copy()
        probe *= rng.normal(size=probe.shape)

        def phi_w(wdata):
            return float(
                np.sum(conv3d_forward(x, ConvWeights(wdata, bias=bias), padding).data * probe)
            )

        _, _, gw = self._loss_grads(x, ConvWeights(w0, bias=bias), probe, padding)
        fd = central_difference(phi_w, w0)
        assert max_rel_err(gw.data, fd) < 1e-6
        if with_bias:
            def phi_b(bdata):
                return float(
                    np.sum(conv3d_forward(x, ConvWeights(w0, bias=bdata), padding).data * probe)
                )

            fd_b = central_difference(phi_b, bias)
            assert max_rel_err(gw.bias, fd_b) < 1e-6

    @pytest.mark.parametrize("padding", [PAD_SAME, PAD_VALID])
    def test_input_grad_matches_central_difference(self, padding):
        rng = np.random.default_rng(29)
        x0 = rng.normal(size=(2, 4, 5, 4))
        w = ConvWeights(rng.normal(size=(3, 2, 3, 3, 3)))
        probe = rng.normal(size=(3,) + conv3d_output_shape((4, 5, 4), 3, padding))

        def phi_x(xdata):
            return float(np.sum(conv3d_forward(FeatureMap(xdata), w, padding).data * probe))

        _, gx, _ = self._loss_grads(FeatureMap(x0), w, probe, padding)
        fd = central_difference(phi_x, x0)
        assert max_rel_err(gx.data, fd) < 1e-6

    def test_randomized_backward_against_fd(self):
        rng = np.random.default_rng(31)
        for seed in range(8):
            case = np.random.default_rng(seed)
            k = int(case.choice([1, 3]))
            spatial = tuple(int(case.integers(k, 6)) for _ in range(3))
            c_in = int(case.integers(1, 3))
            c_out = int(case.integers(1, 3))
            x0 = case.normal(size=(c_in,) + spatial)
            w0 = case.normal(size=(c_out, c_in, k, k, k))
            padding = PAD_SAME if case.random() < 0.5 else PAD_VALID
            probe = case.normal(size=(c_out,) + conv3d_output_shape(spatial, k, padding))

            def phi(wdata):
                return float(
                    np.sum(conv3d_forward(FeatureMap(x0), ConvWeights(wdata), padding).data * probe)
                )

            gx, gw = conv3d_backward(
                FeatureMap(x0), ConvWeights(w0), FeatureMap(probe), padding
            )
            assert max_rel_err(gw.data, central_difference(phi, w0)) < 1e-6
            rng.shuffle(np.arange(3))  # keep the outer stream advancing

    def test_grad_out_shape_mismatch_rejected(self):
        x = FeatureMap(np.zeros((1, 4, 4, 4)))
        w = ConvWeights(np.zeros((1, 1, 3, 3, 3)))
        bad = FeatureMap(np.zeros((1, 3, 3, 3)))
        with pytest.raises(DimensionError):
            conv3d_backward(x, w, bad, PAD_SAME)
