import math

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from hazekit import inr
from hazekit.inr import InrConfig, InrDecoder, feature_unfold, make_grid, positional_encode

from oracles import gradcheck_module


class TestGrid:
    def test_single_pixel(self):
        assert torch.equal(make_grid(1, 1), torch.zeros(1, 1, 2))

    def test_two_by_two(self):
        g = make_grid(2, 2)
        # (2i + 1) / N - 1 for i in {0, 1}
        assert torch.equal(g[..., 0], torch.tensor([[-0.5, 0.5], [-0.5, 0.5]]))
        assert torch.equal(g[..., 1], torch.tensor([[-0.5, -0.5], [0.5, 0.5]]))

    @pytest.mark.parametrize("h,w", [(3, 5), (8, 8), (7, 2)])
    def test_rotation_symmetry(self, h, w):
        g = make_grid(h, w, torch.float64)
        assert torch.allclose(torch.flip(g, dims=(0, 1)), -g, atol=1e-15)

    def test_corners(self):
        g = make_grid(4, 8, torch.float64)
        assert torch.allclose(g[0, 0], torch.tensor([-(1 - 1 / 8), -(1 - 1 / 4)], dtype=torch.float64))
        assert torch.allclose(g[-1, -1], torch.tensor([1 - 1 / 8, 1 - 1 / 4], dtype=torch.float64))

    def test_invalid(self):
        with pytest.raises(ValueError):
            make_grid(0, 3)


class TestPositionalEncoding:
    def test_zero(self):
        enc = positional_encode(torch.zeros(2), 4)
        assert enc.shape == (16,)
        assert torch.equal(enc[0::2], torch.zeros(8)) and torch.equal(enc[1::2], torch.ones(8))

    def test_hand_evaluated(self):
        enc = positional_encode(torch.tensor([1.0, 0.0], dtype=torch.float64), 1)
        assert torch.allclose(enc, torch.tensor([0.0, -1.0, 0.0, 1.0], dtype=torch.float64), atol=1e-15)

    def test_frequencies(self):
        x = 0.3
        enc = positional_encode(torch.tensor([x, 0.0], dtype=torch.float64), 3)
        expected = []
        for k in range(3):
            expected += [math.sin(2**k * math.pi * x), math.cos(2**k * math.pi * x)]
        assert np.allclose(enc[:6].numpy(), expected, atol=1e-15)

    @given(st.integers(1, 10), st.integers(1, 5))
    def test_width_law(self, L, d):
        assert positional_encode(torch.zeros(3, d), L).shape == (3, 2 * L * d)

    def test_pythagorean(self):
        x = torch.rand(10_000, 2, generator=torch.Generator().manual_seed(0), dtype=torch.float64) * 2 - 1
        enc = positional_encode(x, 4)
        assert torch.max(torch.abs(enc[:, 0::2] ** 2 + enc[:, 1::2] ** 2 - 1)) < 1e-6

    def test_invalid_L(self):
        with pytest.raises(ValueError):
            positional_encode(torch.zeros(2), 0)


class TestUnfold:
    def test_radius_zero_identity(self):
        e = torch.randn(2, 3, 5, 5)
        assert torch.equal(feature_unfold(e, 0), e)

    def test_constant(self):
        e = torch.tensor([1.0, 2.0])[:, None, None].expand(2, 4, 4)
        out = feature_unfold(e.contiguous(), 1)
        assert out.shape == (18, 4, 4)
        assert torch.equal(out, torch.tensor([1.0, 2.0] * 9)[:, None, None].expand(18, 4, 4))

    def test_centre_neighbourhood_order(self):
        e = torch.arange(9.0).reshape(1, 3, 3)
        assert torch.equal(feature_unfold(e, 1)[:, 1, 1], torch.arange(9.0))

    def test_neighbour_major_blocks(self):
        e = torch.arange(18.0).reshape(2, 3, 3)
        out = feature_unfold(e, 1)[:, 1, 1]
        expected = torch.stack([e[:, i, j] for i in range(3) for j in range(3)]).reshape(-1)
        assert torch.equal(out, expected)

    def test_replicate_border(self):
        e = torch.arange(9.0).reshape(1, 3, 3)
        # top-left pixel: rows/cols clamp to 0
        assert torch.equal(feature_unfold(e, 1)[:, 0, 0], torch.tensor([0.0, 0, 1, 0, 0, 1, 3, 3, 4]))

    def test_negative_radius(self):
        with pytest.raises(ValueError):
            feature_unfold(torch.zeros(1, 3, 3), -1)


class TestDecode:
    def test_constant_from_bias(self):
        dec = InrDecoder(5, L=2, hidden=8, depth=2)
        with torch.no_grad():
            for p in dec.parameters():
                p.zero_()
            dec.mlp[-1].bias.copy_(torch.tensor([0.3, -1.0, 2.0]))
        img = inr.inr_decode(dec, torch.randn(5, 4, 6), positional_encode(make_grid(4, 6), 2))
        assert img.shape == (4, 6, 3)
        assert torch.allclose(img, torch.sigmoid(torch.tensor([0.3, -1.0, 2.0])).expand(4, 6, 3))

    def test_output_range(self):
        dec = InrDecoder(3, L=4)
        img = dec(torch.randn(2, 3, 8, 8) * 10, positional_encode(make_grid(8, 8), 4))
        assert img.shape == (2, 3, 8, 8)
        assert torch.all((img >= 0) & (img <= 1))

    def test_width_mismatch(self):
        dec = InrDecoder(3, L=4)
        with pytest.raises(ValueError, match="expects"):
            dec(torch.randn(1, 4, 8, 8), positional_encode(make_grid(8, 8), 4))

    @given(st.permutations(list(range(12))))
    def test_permutation_equivariance(self, perm):
        torch.manual_seed(0)
        dec = InrDecoder(2, L=1, hidden=8, depth=2).double()
        feats = torch.linspace(-1, 1, 24, dtype=torch.float64).reshape(2, 3, 4)
        enc = positional_encode(make_grid(3, 4, torch.float64), 1)
        idx = list(perm)
        pf = feats.reshape(2, 12)[:, idx].reshape(2, 3, 4)
        pe = enc.reshape(12, 4)[idx].reshape(3, 4, 4)
        out = inr.inr_decode(dec, feats, enc).reshape(12, 3)[idx].reshape(3, 4, 3)
        assert torch.allclose(inr.inr_decode(dec, pf, pe), out, atol=1e-14, rtol=0)

    def test_gradcheck(self):
        dec = InrDecoder(3, L=2, hidden=8, depth=2).double()
        feats = torch.randn(1, 3, 4, 4, dtype=torch.float64)
        enc = positional_encode(make_grid(4, 4, torch.float64), 2)
        errors = gradcheck_module(dec, [feats, enc])
        assert max(errors.values()) < 1e-4, errors


class TestFit:
    def test_constant_image(self):
        target = np.broadcast_to(np.array([0.2, 0.6, 0.9]), (16, 16, 3))
        res = inr.fit_image(target, iterations=200, lr=1e-2)
        mse = np.mean((res.reconstruction - target) ** 2)
        assert 10 * np.log10(1 / mse) >= 40

    def test_windowed_monotone(self):
        from hazekit.toydata import BUNDLED_PHOTO
        from hazekit.dataio import load_image

        target = load_image(BUNDLED_PHOTO)[::4, ::4]
        losses = inr.fit_image(target, iterations=300, lr=1e-3).losses
        assert all(losses[i + 50] <= losses[i] + 1e-6 for i in range(len(losses) - 50))

    def test_seed_determinism(self):
        target = np.random.default_rng(0).uniform(size=(8, 8, 3))
        a = inr.fit_image(target, iterations=1, rng_seed=7).losses[0]
        b = inr.fit_image(target, iterations=1, rng_seed=7).losses[0]
        assert a == b

    def test_invalid_iterations(self):
        with pytest.raises(ValueError):
            inr.fit_image(np.zeros((8, 8, 3)), iterations=0)


def test_idrm_shapes():
    m = inr.Idrm(6, InrConfig(unfold_radius=1))
    assert m.decoder.in_width == 6 * 9 + 16
    assert m(torch.randn(2, 6, 8, 12)).shape == (2, 3, 8, 12)


class TestWindowGrid:
    def test_matches_full_grid(self):
        full = inr.make_grid(10, 12)
        got = inr.window_grid([[2, 3, 10, 12], [0, 0, 10, 12]], (4, 5))
        assert torch.equal(got[0], full[2:6, 3:8]) and torch.equal(got[1], full[:4, :5])

    def test_whole_image_window(self):
        assert torch.equal(inr.window_grid([[0, 0, 6, 6]], (6, 6))[0], inr.make_grid(6, 6))

    def test_out_of_bounds(self):
        with pytest.raises(ValueError, match="exceeds"):
            inr.window_grid([[5, 0, 8, 8]], (4, 4))

    def test_idrm_uses_given_coordinates(self):
        idrm = inr.Idrm(2)
        feats = torch.rand(1, 2, 4, 4)
        default = idrm(feats)
        assert torch.equal(idrm(feats, inr.make_grid(4, 4)), default)
        assert not torch.equal(idrm(feats, inr.window_grid([[0, 0, 8, 8]], (4, 4))), default)
        with pytest.raises(ValueError, match="do not match"):
            idrm(feats, inr.make_grid(5, 4))
