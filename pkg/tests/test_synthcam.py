"""Scene generation, defocus rendering against convolution oracles, dataset IO."""

import numpy as np
import pytest
from scipy import ndimage

import dc2.synthcam as sc
from dc2 import align, optics
from dc2.optics import CameraIntrinsics, DepthMap, LensState


def flat_scene(h=48, w=64, value_depth=900.0, seed=0):
    """Constant-depth scene with random texture, no layer model."""
    rng = np.random.default_rng(seed)
    img = rng.random((h, w, 3))
    return sc.SceneRGBD(img, DepthMap(np.full((h, w), value_depth)), seed=seed)


def small_cam(aperture, w=64, h=48, f=6.8, pitch=0.0024):
    return CameraIntrinsics(f, aperture, pitch, w, h, (w / 2, h / 2))


class TestGenerateScene:
    def test_deterministic(self):
        cfg = sc.SceneConfig()
        a = sc.generate_scene(42, cfg)
        b = sc.generate_scene(42, cfg)
        np.testing.assert_array_equal(a.aif_image, b.aif_image)
        np.testing.assert_array_equal(a.depth.values_mm, b.depth.values_mm)

    def test_single_layer_constant_depth(self):
        scene = sc.generate_scene(0, sc.SceneConfig(n_layers=1))
        assert np.unique(scene.depth.values_mm).size == 1

    def test_three_layer_depth_histogram_has_three_modes(self):
        cfg = sc.SceneConfig(n_layers=3, depth_range=(500.0, 3000.0))
        scene = sc.generate_scene(9, cfg)
        hist, _ = np.histogram(scene.depth.values_mm, bins=40, range=(500.0, 3000.0))
        modes = 0
        in_mode = False
        for count in hist:
            if count > 0 and not in_mode:
                modes += 1
                in_mode = True
            elif count == 0:
                in_mode = False
        assert modes == 3

    def test_textures_have_high_frequency_content(self):
        scene = sc.generate_scene(3, sc.SceneConfig())
        gray = scene.aif_image.mean(axis=2)
        grad = np.abs(np.diff(gray, axis=1)).mean()
        assert grad > 0.01

    def test_invalid_config_rejected(self):
        with pytest.raises(ValueError):
            sc.SceneConfig(n_layers=0)
        with pytest.raises(ValueError):
            sc.SceneConfig(depth_range=(2000.0, 500.0))
        with pytest.raises(ValueError):
            sc.SceneConfig(texture_kind="plaid")


class TestDiscKernel:
    def test_zero_radius_is_delta(self):
        k = sc.disc_kernel(0.0)
        assert k.shape == (1, 1) and k[0, 0] == 1.0

    def test_normalized_and_symmetric(self):
        for r in (0.3, 1.0, 2.7, 6.0):
            k = sc.disc_kernel(r)
            assert k.sum() == pytest.approx(1.0, rel=1e-12)
            np.testing.assert_allclose(k, k[::-1, :], atol=0)
            np.testing.assert_allclose(k, k.T, atol=0)

    def test_support_matches_radius(self):
        k = sc.disc_kernel(3.0)
        c = k.shape[0] // 2
        ys, xs = np.nonzero(k)
        dist = np.hypot(ys - c, xs - c)
        assert dist.max() <= 3.5 + 1e-9
        assert k[c, c] == k.max()


class TestRenderDefocused:
    def test_pinhole_bit_identical_to_aif(self):
        scene = flat_scene()
        cam = small_cam(aperture=0.0)
        img, dm = sc.render_defocused(scene, cam, LensState(700.0))
        assert np.array_equal(img, scene.aif_image)
        assert np.all(dm.radii_px == 0)

    def test_focused_constant_depth_is_identity(self):
        scene = flat_scene(value_depth=900.0)
        cam = small_cam(aperture=2.0)
        img, _ = sc.render_defocused(scene, cam, LensState(900.0))
        assert np.array_equal(img, scene.aif_image)

    def test_matches_direct_disc_convolution(self):
        scene = flat_scene(value_depth=2000.0, seed=4)
        cam = small_cam(aperture=2.0)
        lens = LensState(800.0)
        img, dm = sc.render_defocused(scene, cam, lens)
        r = dm.radii_px[0, 0]
        assert r > 1.0
        k = sc.disc_kernel(r)
        oracle = np.stack(
            [ndimage.convolve(scene.aif_image[..., c], k, mode="reflect")
             for c in range(3)], axis=2)
        assert np.max(np.abs(img - oracle)) < 1e-6

    def test_energy_conserved_on_constant_depth(self):
        scene = flat_scene(value_depth=2500.0, seed=5)
        cam = small_cam(aperture=2.4)
        img, _ = sc.render_defocused(scene, cam, LensState(600.0))
        assert abs(img.mean() - scene.aif_image.mean()) < 1e-4

    def test_deterministic(self):
        cfg = sc.SceneConfig(n_layers=3)
        scene = sc.generate_scene(1, cfg)
        a, _ = sc.render_defocused(scene, cfg.rig.w_cam, LensState(700.0))
        b, _ = sc.render_defocused(scene, cfg.rig.w_cam, LensState(700.0))
        np.testing.assert_array_equal(a, b)

    def test_returned_map_matches_optics(self):
        cfg = sc.SceneConfig(n_layers=2)
        scene = sc.generate_scene(2, cfg)
        lens = LensState(1000.0)
        _, dm = sc.render_defocused(scene, cfg.rig.w_cam, lens)
        ref = optics.defocus_map(cfg.rig.w_cam, lens, scene.depth)
        np.testing.assert_array_equal(dm.radii_px, ref.radii_px)

    def test_dim_mismatch_rejected(self):
        scene = flat_scene(h=32, w=32)
        with pytest.raises(ValueError):
            sc.render_defocused(scene, small_cam(1.0, w=64, h=48), LensState(700.0))


def coincident_rig(w=64, h=48):
    """Zero baseline, identity color, same intrinsics, pinhole UW."""
    cam_w = small_cam(2.0, w=w, h=h)
    cam_uw = small_cam(0.0, w=w, h=h)
    return sc.CameraRig(
        w_cam=cam_w, uw_cam=cam_uw, uw_lens=LensState(1200.0),
        baseline_mm=(0.0, 0.0),
        color_matrix=np.eye(3), color_offset=np.zeros(3),
    )


class TestDualCapture:
    def test_coincident_cameras_reproduce_aif(self):
        scene = sc.generate_scene(5, sc.SceneConfig(n_layers=2,
                                                    rig=sc.default_rig()))
        rig = coincident_rig(w=256, h=192)
        cap = sc.render_dual_capture(scene, rig, LensState(800.0))
        np.testing.assert_allclose(cap.uw_warped(), scene.aif_image, atol=1e-12)
        assert cap.occlusion_mask.sum() == 0

    def test_baseline_creates_occlusion_at_depth_edges(self):
        cfg = sc.SceneConfig(n_layers=2, depth_range=(500.0, 2000.0))
        scene = sc.generate_scene(6, cfg)
        cap = sc.render_dual_capture(scene, cfg.rig, LensState(700.0))
        assert cap.occlusion_mask.sum() > 0
        # occlusions hug the foreground boundary: everything flagged must be
        # within the max-disparity reach of a depth discontinuity
        d = scene.depth.values_mm
        edges = np.zeros(d.shape, dtype=bool)
        edges[:, :-1] |= np.abs(np.diff(d, axis=1)) > 1
        edges[:-1, :] |= np.abs(np.diff(d, axis=0)) > 1
        grown = ndimage.binary_dilation(edges, iterations=40)
        flagged = cap.occlusion_mask > 0.5
        interior_flagged = flagged & align.WarpField(
            cap.true_warp.flow).in_bounds(cap.uw_frame.shape[:2])
        assert interior_flagged.sum() > 0
        assert (interior_flagged & ~grown).sum() / max(interior_flagged.sum(), 1) < 0.05

    def test_uw_defocus_below_w_defocus_at_shared_focus(self):
        cfg = sc.SceneConfig(n_layers=3)
        rig = cfg.rig
        scene = sc.generate_scene(7, cfg)
        # focusing W at the UW focus distance makes the per-depth CoC ratio
        # constant: K_uw < K_w implies the UW map sits below the W map
        lens = rig.uw_lens
        w_map = optics.defocus_map(rig.w_cam, lens, scene.depth).radii_px
        uw_vals = optics.coc_radius_mm(rig.uw_cam, rig.uw_lens,
                                       scene.depth.values_mm.ravel())
        uw_map = (uw_vals / rig.uw_cam.pixel_pitch_mm_per_px).reshape(scene.shape)
        assert np.all(uw_map <= w_map + 1e-12)

    def test_warp_round_trip_against_zero_baseline_reference(self):
        # Band-limited textures isolate warp-geometry error from the
        # irreducible bilinear reconstruction error at hard texture edges;
        # with 0.1/px gradients a systematic warp error of 0.1 px would
        # already blow the tolerance.
        cfg = sc.SceneConfig(n_layers=2, depth_range=(600.0, 2500.0),
                             texture_kind="smooth")
        scene = sc.generate_scene(8, cfg)
        rig = cfg.rig
        rig0 = sc.CameraRig(
            w_cam=rig.w_cam, uw_cam=rig.uw_cam, uw_lens=rig.uw_lens,
            baseline_mm=(0.0, 0.0), color_matrix=rig.color_matrix,
            color_offset=rig.color_offset,
        )
        cap = sc.render_dual_capture(scene, rig, LensState(800.0))
        cap0 = sc.render_dual_capture(scene, rig0, LensState(800.0))
        # exclude the layer-boundary band, where defocus legitimately mixes
        # foreground and background differently for the two viewpoints
        bad = (cap.occlusion_mask > 0) | (cap0.occlusion_mask > 0)
        bad = ndimage.binary_dilation(bad, iterations=4)
        ok = ~bad
        assert ok.mean() > 0.5
        diff = np.abs(cap.uw_warped() - cap0.uw_warped()).max(axis=2)
        assert diff[ok].max() < 2 / 255


class TestGenerateStack:
    def test_slice_count_and_order(self):
        cfg = sc.SceneConfig(n_layers=2)
        scene = sc.generate_scene(10, cfg)
        stack = sc.generate_stack(scene, cfg.rig, 5)
        assert len(stack) == 5
        d = stack.focus_distances_mm
        assert all(b > a for a, b in zip(d, d[1:]))

    def test_uw_frame_shared_by_all_slices(self):
        cfg = sc.SceneConfig(n_layers=2)
        scene = sc.generate_scene(11, cfg)
        stack = sc.generate_stack(scene, cfg.rig, 4)
        first = stack.slices[0].uw_frame
        for cap in stack.slices[1:]:
            assert cap.uw_frame is first

    def test_slice_focused_on_layer_minimizes_its_defocus(self):
        cfg = sc.SceneConfig(n_layers=3)
        scene = sc.generate_scene(12, cfg)
        depths = sorted({l.depth_mm for l in scene.layers})
        lenses = [LensState(d) for d in depths]
        stack = sc.generate_stack(scene, cfg.rig, len(lenses), lenses=lenses)
        maps = np.stack([cap.defocus_w.radii_px for cap in stack.slices])
        for k, d in enumerate(depths):
            region = scene.depth.values_mm == d
            assert region.any()
            argmin = np.argmin(maps[:, region], axis=0)
            assert np.all(argmin == k)

    def test_slice_defocus_recomputable_from_metadata(self):
        cfg = sc.SceneConfig(n_layers=2)
        scene = sc.generate_scene(13, cfg)
        stack = sc.generate_stack(scene, cfg.rig, 3)
        for cap in stack.slices:
            ref = optics.defocus_map(cfg.rig.w_cam, cap.lens_w, scene.depth)
            np.testing.assert_array_equal(cap.defocus_w.radii_px, ref.radii_px)


class TestFocusStackMerge:
    def test_identical_sharp_slices_pass_through(self):
        cfg = sc.SceneConfig(n_layers=2)
        scene = sc.generate_scene(14, cfg)
        rig = coincident_rig(w=256, h=192)
        cap = sc.render_dual_capture(scene, rig, LensState(800.0))
        cap.w_slice = scene.aif_image.copy()
        stack = sc.FocusStack(slices=[cap, cap], focus_distances_mm=[800.0, 900.0],
                              rig=rig, scene=scene)
        merged = sc.focus_stack_merge(stack)
        np.testing.assert_allclose(merged, scene.aif_image, atol=1e-12)

    def test_two_slice_merge_beats_both_slices(self):
        cfg = sc.SceneConfig(n_layers=2, depth_range=(500.0, 2000.0))
        scene = sc.generate_scene(15, cfg)
        depths = sorted({l.depth_mm for l in scene.layers})
        lenses = [LensState(d) for d in depths]
        stack = sc.generate_stack(scene, cfg.rig, 2, lenses=lenses)
        merged = sc.focus_stack_merge(stack)

        def psnr(a, b):
            return 10 * np.log10(1.0 / np.mean((a - b) ** 2))

        merged_score = psnr(merged, scene.aif_image)
        slice_scores = [psnr(cap.w_slice, scene.aif_image) for cap in stack.slices]
        assert merged_score > max(slice_scores)

    def test_empty_stack_rejected(self):
        cfg = sc.SceneConfig(n_layers=1)
        scene = sc.generate_scene(16, cfg)
        with pytest.raises(ValueError):
            sc.FocusStack(slices=[], focus_distances_mm=[], rig=cfg.rig, scene=scene)


class TestDatasetIO:
    def test_round_trip(self, tmp_path):
        cfg = sc.SceneConfig(n_layers=2)
        folders = sc.build_dataset(tmp_path, n_scenes=1, n_slices=3, seed=123,
                                   scene_config=cfg)
        assert len(folders) == 1
        loaded = sc.load_scene(folders[0])
        assert loaded.n_slices == 3
        assert loaded.aif.shape == (192, 256, 3)
        # 16-bit quantization bounds the reload error
        scene_seed_meta = (folders[0] / "meta.json").read_text()
        assert "focus_distance_mm" in scene_seed_meta
        # defocus maps recomputed from depth + metadata match the optics model
        for lens, dfc in zip(loaded.lenses, loaded.defocus):
            ref = optics.defocus_map(loaded.rig.w_cam, lens, loaded.depth)
            np.testing.assert_array_equal(dfc, ref.radii_px)

    def test_deterministic_build(self, tmp_path):
        cfg = sc.SceneConfig(n_layers=2)
        sc.build_dataset(tmp_path / "a", 1, 2, seed=7, scene_config=cfg)
        sc.build_dataset(tmp_path / "b", 1, 2, seed=7, scene_config=cfg)
        a = sc.load_scene(tmp_path / "a" / "scene_000")
        b = sc.load_scene(tmp_path / "b" / "scene_000")
        np.testing.assert_array_equal(a.aif, b.aif)
        np.testing.assert_array_equal(a.uw, b.uw)
        np.testing.assert_array_equal(a.depth.values_mm, b.depth.values_mm)

    def test_reload_error_bounded_by_quantization(self, tmp_path):
        cfg = sc.SceneConfig(n_layers=2)
        scene = sc.generate_scene(77, cfg)
        stack = sc.generate_stack(scene, cfg.rig, 2)
        sc.write_scene(tmp_path / "s", stack)
        loaded = sc.load_scene(tmp_path / "s")
        assert np.max(np.abs(loaded.aif - scene.aif_image)) < 1.0 / 65535 + 1e-9
        np.testing.assert_allclose(loaded.depth.values_mm, scene.depth.values_mm,
                                   rtol=1e-6)

    def test_existing_folder_rejected(self, tmp_path):
        cfg = sc.SceneConfig(n_layers=1)
        scene = sc.generate_scene(1, cfg)
        stack = sc.generate_stack(scene, cfg.rig, 2)
        sc.write_scene(tmp_path / "dup", stack)
        with pytest.raises(FileExistsError):
            sc.write_scene(tmp_path / "dup", stack)
