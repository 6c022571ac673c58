"""Network construction, radial mask geometry, forward invariants, checkpoints."""

import numpy as np
import pytest
import torch

from dc2 import dfnet
from dc2.dfnet import (
    ModelConfig,
    NetInput,
    build_model,
    collate,
    radial_mask,
    forward_single,
    save_checkpoint,
    load_checkpoint,
)


def rand_input(rng, h=64, w=64, full=(192, 256), offset=(16, 24)):
    return NetInput(
        w_image=rng.random((h, w, 3)),
        uw_warped=rng.random((h, w, 3)),
        occlusion=(rng.random((h, w)) > 0.9).astype(np.float64),
        ref_defocus=rng.uniform(0, 9, (h, w)),
        tgt_defocus=rng.uniform(0, 9, (h, w)),
        crop_offset=offset,
        full_dims=full,
    )


class TestRadialMask:
    def test_center_of_full_image_is_zero(self):
        m = radial_mask((768, 1024), (0, 0), (768, 1024))
        assert m[384, 512] == 0.0

    def test_origin_corner_is_exactly_one(self):
        m = radial_mask((768, 1024), (0, 0), (768, 1024))
        assert m[0, 0] == pytest.approx(1.0, abs=0)

    def test_crop_at_origin_matches_full_mask_corner(self):
        full = radial_mask((768, 1024), (0, 0), (768, 1024))
        crop = radial_mask((768, 1024), (0, 0), (256, 256))
        np.testing.assert_array_equal(crop, full[:256, :256])
        assert crop[0, 0] == 1.0

    def test_values_in_unit_range(self):
        m = radial_mask((192, 256), (64, 32), (96, 128))
        assert m.min() >= 0 and m.max() <= 1.0

    def test_out_of_bounds_crop_rejected(self):
        with pytest.raises(ValueError):
            radial_mask((192, 256), (200, 0), (96, 128))

    def test_offset_changes_mask_for_same_content(self):
        a = radial_mask((192, 256), (0, 0), (64, 64))
        b = radial_mask((192, 256), (100, 80), (64, 64))
        assert not np.array_equal(a, b)


class TestBuildModel:
    def test_input_channel_counts(self):
        cfg = ModelConfig()
        assert cfg.w_in_channels == 6
        assert cfg.uw_in_channels == 6

    def test_radial_flag_drops_one_channel_each(self):
        cfg = ModelConfig(use_radial_mask=False)
        assert cfg.w_in_channels == 5
        assert cfg.uw_in_channels == 5

    def test_same_seed_same_parameters(self):
        cfg = ModelConfig.tiny()
        a = build_model(cfg, seed=5)
        b = build_model(cfg, seed=5)
        for (na, pa), (nb, pb) in zip(a.state_dict().items(), b.state_dict().items()):
            assert na == nb
            assert torch.equal(pa, pb)

    def test_different_seed_different_parameters(self):
        cfg = ModelConfig.tiny()
        a = build_model(cfg, seed=1)
        b = build_model(cfg, seed=2)
        assert any(not torch.equal(pa, pb)
                   for pa, pb in zip(a.parameters(), b.parameters()))

    def test_parameter_count_deterministic(self):
        cfg = ModelConfig.tiny()
        counts = {sum(p.numel() for p in build_model(cfg, seed=s).parameters())
                  for s in (0, 1, 2)}
        assert len(counts) == 1

    def test_aspp_spec_validation(self):
        with pytest.raises(ValueError):
            ModelConfig(aspp=(
                {"rates": (1, 3), "channels": (16, 3)},  # last must be 2
                {"rates": (1, 3), "channels": (16, 2)},
                {"rates": (1, 3), "channels": (16, 2)},
                {"rates": (1, 3), "channels": (16, 2)},
            ))
        with pytest.raises(ValueError):
            ModelConfig(aspp=({"rates": (1,), "channels": (2,)},) * 3)

    def test_default_aspp_matches_published_table(self):
        cfg = ModelConfig()
        assert [list(e["rates"]) for e in cfg.aspp] == [
            [1, 3, 5], [1, 3, 6, 12], [1, 3, 6, 12, 15], [1, 3, 6, 12, 15, 18]]
        assert [list(e["channels"]) for e in cfg.aspp] == [
            [16, 32, 2], [16, 32, 2], [16, 32, 2], [16, 32, 32, 2]]


class TestForward:
    def setup_method(self):
        self.rng = np.random.default_rng(3)
        self.model = build_model(ModelConfig.tiny(), seed=0)

    def test_multiscale_shapes(self):
        out = forward_single(self.model, rand_input(self.rng, 64, 64))
        for t, f in zip(out.blended, (8, 4, 2, 1)):
            assert t.shape[-2:] == (64 // f, 64 // f)

    def test_mask_channels_sum_to_one(self):
        out = forward_single(self.model, rand_input(self.rng))
        for m in out.masks:
            total = m.sum(dim=1)
            assert torch.max(torch.abs(total - 1.0)).item() < 1e-6
            assert m.min().item() >= 0

    def test_blended_is_exact_convex_combination(self):
        out = forward_single(self.model, rand_input(self.rng))
        for m, rw, ruw, bl in zip(out.masks, out.refined_w, out.refined_uw, out.blended):
            ref = m[:, 0:1] * rw + m[:, 1:2] * ruw
            assert torch.equal(bl, ref)
            lo = torch.minimum(rw, ruw)
            hi = torch.maximum(rw, ruw)
            assert (bl >= lo - 1e-6).all() and (bl <= hi + 1e-6).all()

    def test_outputs_finite_and_clamped(self):
        out = forward_single(self.model, rand_input(self.rng))
        full = out.blended[-1]
        assert torch.isfinite(full).all()
        assert full.min().item() >= 0.0 and full.max().item() <= 1.0

    def test_w_path_blind_to_uw_planes(self):
        inp = rand_input(self.rng)
        out_a = forward_single(self.model, inp)
        inp.uw_warped = np.zeros_like(inp.uw_warped)
        inp.occlusion = np.zeros_like(inp.occlusion)
        out_b = forward_single(self.model, inp)
        for a, b in zip(out_a.refined_w, out_b.refined_w):
            assert torch.equal(a, b)

    def test_untrained_model_roughly_passes_w_through(self):
        inp = rand_input(self.rng)
        inp.w_image = np.clip(inp.w_image, 0.2, 0.8)
        out = forward_single(self.model, inp)
        mask_w_mean = out.masks[-1][0, 0].mean().item()
        assert mask_w_mean > 0.6  # initialization favours the W path

    def test_dims_not_divisible_by_8_rejected(self):
        with pytest.raises(ValueError):
            forward_single(self.model, rand_input(self.rng, 60, 64))

    def test_deterministic_forward(self):
        inp = rand_input(self.rng)
        a = forward_single(self.model, inp)
        b = forward_single(self.model, inp)
        assert torch.equal(a.blended[-1], b.blended[-1])


class TestPathModes:
    def test_w_only_ignores_uw(self):
        model = build_model(ModelConfig.tiny(paths="w-only"), seed=0)
        rng = np.random.default_rng(0)
        inp = rand_input(rng)
        out_a = forward_single(model, inp)
        inp.uw_warped = rng.random(inp.uw_warped.shape)
        out_b = forward_single(model, inp)
        assert torch.equal(out_a.blended[-1], out_b.blended[-1])
        assert torch.all(out_a.masks[-1][:, 0] == 1.0)

    def test_uw_only_ignores_w_planes(self):
        model = build_model(ModelConfig.tiny(paths="uw-only"), seed=0)
        rng = np.random.default_rng(0)
        inp = rand_input(rng)
        out_a = forward_single(model, inp)
        inp.w_image = rng.random(inp.w_image.shape)
        inp.ref_defocus = rng.uniform(0, 9, inp.ref_defocus.shape)
        out_b = forward_single(model, inp)
        assert torch.equal(out_a.blended[-1], out_b.blended[-1])


class TestInspect:
    def test_matches_forward_graph(self, tmp_path):
        model = build_model(ModelConfig.tiny(), seed=0)
        rng = np.random.default_rng(1)
        inp = rand_input(rng)
        out = forward_single(model, inp)
        got = dfnet.inspect(model, inp, panel_path=tmp_path / "panel.png")
        np.testing.assert_array_equal(
            got["refined_w"], out.refined_w[-1][0].permute(1, 2, 0).numpy())
        np.testing.assert_array_equal(
            got["mask_uw"], out.masks[-1][0, 1].numpy())
        assert (tmp_path / "panel.png").exists()
        s = got["mask_w"] + got["mask_uw"]
        assert np.max(np.abs(s - 1.0)) < 1e-6


class TestCheckpoint:
    def test_round_trip_preserves_everything(self, tmp_path):
        model = build_model(ModelConfig.tiny(), seed=7)
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, model, meta={"note": "test", "steps": 3})
        loaded, meta = load_checkpoint(path)
        assert meta == {"note": "test", "steps": 3}
        assert loaded.config == model.config
        for (na, pa), (nb, pb) in zip(model.state_dict().items(),
                                      loaded.state_dict().items()):
            assert na == nb and torch.equal(pa, pb)

    def test_magic_bytes(self, tmp_path):
        model = build_model(ModelConfig.tiny(), seed=0)
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, model)
        assert path.read_bytes()[:8] == b"DC2CKPT1"

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOTACKPT" + b"\0" * 64)
        with pytest.raises(ValueError):
            load_checkpoint(path)

    def test_loaded_model_same_outputs(self, tmp_path):
        model = build_model(ModelConfig.tiny(), seed=3)
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, model)
        loaded, _ = load_checkpoint(path)
        rng = np.random.default_rng(5)
        inp = rand_input(rng)
        a = forward_single(model, inp)
        b = forward_single(loaded, inp)
        assert torch.equal(a.blended[-1], b.blended[-1])
