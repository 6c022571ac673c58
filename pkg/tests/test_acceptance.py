"""Acceptance suite: the promised behaviours at their stated tolerances.

Fast criteria (optics exactness, renderer oracle, gradient check, forward
invariants, alignment recovery, metric sanity) run in seconds. The
end-to-end items build a fixed 8-scene dataset and train checkpoints, which
takes roughly 45 minutes on two CPU cores for a cold run; set DC2_TEST_CACHE
to a writable directory to reuse dataset and checkpoints across runs.
Each criterion prints one `[ACCEPT] ... PASS/FAIL` line (visible with -s).
"""

import json
import os
import time
from pathlib import Path

import numpy as np
import pytest
import torch
from scipy import ndimage

import dc2.evalbench as eb
import dc2.synthcam as sc
from dc2 import align, fileio, optics
from dc2.dfnet import (
    ModelConfig,
    NetInput,
    build_model,
    collate,
    forward_single,
    load_checkpoint,
)
from dc2.optics import CameraIntrinsics, DepthMap, LensState
from dc2.service import RenderEngine
from dc2.train import TrainConfig, loss_total, make_perceptual, train

torch.set_num_threads(2)

pytestmark = pytest.mark.acceptance

# The end-to-end configuration is pinned here; the cache stamp hashes it.
E2E_DATA = {"n_scenes": 8, "n_slices": 6, "seed": 1234, "n_layers": 3}
E2E_TRAIN = TrainConfig(batch_size=6, crop=128, steps_phase1=2000,
                        steps_phase2=1000, seed=0, log_every=200)
ABLATION_TRAIN = {"batch_size": 6, "crop": 96, "steps_phase1": 900,
                  "steps_phase2": 300, "seed": 0, "log_every": 200}


def _report(name: str, ok: bool, details: str = ""):
    print(f"[ACCEPT] {name}: {'PASS' if ok else 'FAIL'} {details}".rstrip())
    assert ok, f"{name}: {details}"


# ---------------------------------------------------------------- criterion 1

class TestOpticsExactness:
    def test_coc_formula_exact_on_random_tuples(self):
        t0 = time.time()
        rng = np.random.default_rng(99)
        worst = 0.0
        for _ in range(1000):
            A = rng.uniform(0.0, 6.0)
            f = rng.uniform(1.0, 9.0)
            s1 = rng.uniform(f + 1.0, 5000.0)
            s2 = rng.uniform(1.0, 10000.0)
            cam = CameraIntrinsics(f, A, 0.002, 64, 48, (32, 24))
            got = optics.coc_radius_mm(cam, LensState(s1), s2)
            ref = A * abs(s2 - s1) / s2 * f / (s1 - f)
            if ref > 0:
                worst = max(worst, abs(got - ref) / ref)
            else:
                worst = max(worst, abs(got - ref))
        cam = CameraIntrinsics(6.8, 2.0, 0.002, 64, 48, (32, 24))
        exact_zero = optics.coc_radius_mm(cam, LensState(900.0), 900.0) == 0.0
        pinhole = optics.coc_radius_mm(
            CameraIntrinsics(6.8, 0.0, 0.002, 64, 48, (32, 24)),
            LensState(900.0), 123.0) == 0.0
        limit = optics.coc_radius_mm(cam, LensState(900.0), 1e12)
        asymptote = abs(limit - 2.0 * 6.8 / (900.0 - 6.8)) / limit < 1e-3
        elapsed = time.time() - t0
        _report("optics exactness",
                worst < 1e-12 and exact_zero and pinhole and asymptote
                and elapsed < 1.0,
                f"(max rel err {worst:.2e}, {elapsed:.2f}s)")


# ---------------------------------------------------------------- criterion 2

class TestRendererOracle:
    def test_constant_depth_matches_direct_convolution(self):
        t0 = time.time()
        worst = 0.0
        for seed, depth, focus in [(0, 2000.0, 800.0), (1, 600.0, 1800.0),
                                   (2, 1200.0, 700.0)]:
            rng = np.random.default_rng(seed)
            img = rng.random((96, 128, 3))
            scene = sc.SceneRGBD(img, DepthMap(np.full((96, 128), depth)), seed=seed)
            cam = CameraIntrinsics(6.8, 2.0, 0.0024, 128, 96, (64, 48))
            out, dm = sc.render_defocused(scene, cam, LensState(focus))
            r = dm.radii_px[0, 0]
            k = sc.disc_kernel(r)
            oracle = np.stack([ndimage.convolve(img[..., c], k, mode="reflect")
                               for c in range(3)], axis=2)
            worst = max(worst, float(np.abs(out - oracle).max()))
        # pinhole render must be bit-identical to the all-in-focus image
        rng = np.random.default_rng(3)
        img = rng.random((96, 128, 3))
        scene = sc.SceneRGBD(img, DepthMap(np.full((96, 128), 900.0)), seed=3)
        pin = CameraIntrinsics(6.8, 0.0, 0.0024, 128, 96, (64, 48))
        out, _ = sc.render_defocused(scene, pin, LensState(700.0))
        bit_identical = np.array_equal(out, img)
        elapsed = time.time() - t0
        _report("renderer oracle",
                worst < 1e-6 and bit_identical and elapsed < 30.0,
                f"(max abs err {worst:.2e}, pinhole bit-identical: "
                f"{bit_identical}, {elapsed:.1f}s)")


# ---------------------------------------------------------------- criterion 3

class TestGradientCheck:
    def test_analytic_gradients_match_finite_differences(self):
        t0 = time.time()
        import dataclasses
        cfg = dataclasses.replace(ModelConfig.tiny(), base_channels=4)
        model = build_model(cfg, seed=7).double()
        rng = np.random.default_rng(11)
        size = 32
        inp = NetInput(
            w_image=rng.random((size, size, 3)),
            uw_warped=rng.random((size, size, 3)),
            occlusion=(rng.random((size, size)) > 0.9).astype(np.float64),
            ref_defocus=rng.uniform(0, 8, (size, size)),
            tgt_defocus=rng.uniform(0, 8, (size, size)),
            crop_offset=(8, 16), full_dims=(96, 128),
        )
        batch = {k: v.double() for k, v in collate([inp]).items()}
        target = torch.from_numpy(rng.random((1, 3, size, size)))
        perceptual = make_perceptual("random").double()

        def compute_loss():
            return loss_total(model(batch), target, perceptual=perceptual).total

        model.zero_grad()
        compute_loss().backward()
        named = [(n, p) for n, p in model.named_parameters() if p.grad is not None]
        flat = [(n, p, i) for n, p in named for i in range(p.numel())]
        picks = rng.choice(len(flat), size=50, replace=False)

        worst = 0.0
        for idx in picks:
            name, p, i = flat[idx]
            analytic = float(p.grad.view(-1)[i])
            with torch.no_grad():
                orig = float(p.view(-1)[i])
                h = 1e-5 * max(1.0, abs(orig))
                p.view(-1)[i] = orig + h
                up = float(compute_loss())
                p.view(-1)[i] = orig - h
                down = float(compute_loss())
                p.view(-1)[i] = orig
            numeric = (up - down) / (2 * h)
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
            worst = max(worst, rel)
        elapsed = time.time() - t0
        _report("gradient check",
                worst < 1e-3 and elapsed < 120.0,
                f"(worst rel err {worst:.2e} over 50 params, {elapsed:.1f}s)")


# ---------------------------------------------------------------- criterion 4

class TestForwardInvariants:
    def test_masks_and_shapes_on_100_random_forwards(self):
        model = build_model(ModelConfig.tiny(), seed=0)
        rng = np.random.default_rng(5)
        worst_sum = 0.0
        for _ in range(100):
            h = int(rng.choice([32, 40, 48]))
            w = int(rng.choice([32, 48, 64]))
            inp = NetInput(
                w_image=rng.random((h, w, 3)),
                uw_warped=rng.random((h, w, 3)),
                occlusion=(rng.random((h, w)) > 0.9).astype(np.float64),
                ref_defocus=rng.uniform(0, 9, (h, w)),
                tgt_defocus=rng.uniform(0, 9, (h, w)),
            )
            out = forward_single(model, inp)
            for m, bl, rw, ruw, f in zip(out.masks, out.blended, out.refined_w,
                                         out.refined_uw, (8, 4, 2, 1)):
                assert bl.shape[-2:] == (h // f, w // f)
                worst_sum = max(worst_sum, float(
                    torch.abs(m.sum(dim=1) - 1.0).max()))
                assert m.min().item() >= 0.0
                lo = torch.minimum(rw, ruw) - 1e-6
                hi = torch.maximum(rw, ruw) + 1e-6
                assert bool((bl >= lo).all() and (bl <= hi).all())
        _report("mask convexity + multiscale shapes",
                worst_sum < 1e-6, f"(worst |mask sum - 1| = {worst_sum:.2e})")


# ---------------------------------------------------------------- criterion 7

class TestFovRecovery:
    def test_fifty_random_transforms(self):
        import cv2
        rng = np.random.default_rng(21)
        img = np.zeros((128, 160))
        for cell, amp in [(32, 0.3), (12, 0.3), (5, 0.2)]:
            g = rng.random((128 // cell + 2, 160 // cell + 2))
            img += amp * cv2.resize(g, (160, 128), interpolation=cv2.INTER_CUBIC)
        img = 0.1 + 0.8 * (img - img.min()) / (img.max() - img.min())
        img = np.stack([img, 0.8 * img + 0.1, 0.6 * img + 0.2], axis=2)

        grid = eb.SearchGrid()
        scale_step = np.diff(grid.scales())[0]
        trans_step = np.diff(grid.translations())[0]
        failures = []
        for k in range(50):
            s = float(rng.uniform(0.96, 1.04))
            tx = float(rng.uniform(-5, 5))
            ty = float(rng.uniform(-5, 5))
            mat = cv2.getRotationMatrix2D(((160 - 1) / 2, (128 - 1) / 2), 0, s)
            mat[0, 2] += tx
            mat[1, 2] += ty
            moved = cv2.warpAffine(img, mat, (160, 128), flags=cv2.INTER_LINEAR)
            params, _ = eb.fov_align(moved, img)
            # aligning `moved` back to img needs the inverse transform
            inv_s, inv_tx, inv_ty = 1 / s, -tx / s, -ty / s
            ok = (abs(params.scale - inv_s) <= scale_step + 1e-9
                  and abs(params.tx - inv_tx) <= trans_step + 1e-9
                  and abs(params.ty - inv_ty) <= trans_step + 1e-9)
            if not ok:
                failures.append((k, s, tx, ty, params))
        _report("fov_align recovery", not failures,
                f"({50 - len(failures)}/50 within one grid step)")


# ---------------------------------------------------------------- criterion 8

class TestMetricSanity:
    def test_oracle_agreement_and_identity(self):
        from skimage.metrics import structural_similarity as sk_ssim
        rng = np.random.default_rng(31)
        worst_p = worst_s = 0.0
        for _ in range(5):
            a = rng.random((48, 64, 3))
            b = np.clip(a + rng.normal(0, 0.07, a.shape), 0, 1)
            p_ref = 10 * np.log10(1.0 / np.mean((a - b) ** 2))
            worst_p = max(worst_p, abs(eb.psnr(a, b) - p_ref))
            s_ref = sk_ssim(a, b, data_range=1.0, gaussian_weights=True, sigma=1.5,
                            use_sample_covariance=False, channel_axis=2)
            worst_s = max(worst_s, abs(eb.ssim(a, b) - s_ref))
        a = rng.random((32, 32, 3))
        identity_ok = eb.psnr(a, a.copy()) == float("inf") and \
            eb.ssim(a, a.copy()) == pytest.approx(1.0, abs=1e-12)
        _report("metric sanity",
                worst_p < 1e-6 and worst_s < 1e-6 and identity_ok,
                f"(psnr err {worst_p:.2e}, ssim err {worst_s:.2e})")


# ------------------------------------------------- end-to-end fixtures (5, 6, 9)

def _cache_root(tmp_path_factory) -> Path:
    env = os.environ.get("DC2_TEST_CACHE")
    if env:
        root = Path(env)
        root.mkdir(parents=True, exist_ok=True)
        return root
    return tmp_path_factory.mktemp("accept_cache")


def _stamp_ok(path: Path, payload: dict) -> bool:
    return path.exists() and json.loads(path.read_text()) == payload


@pytest.fixture(scope="session")
def e2e(tmp_path_factory):
    """Fixed dataset + the one checkpoint every protocol shares."""
    root = _cache_root(tmp_path_factory)
    data = root / "data"
    ckpt = root / "main.ckpt"
    stamp = root / "stamp.json"
    payload = {"data": E2E_DATA, "train": E2E_TRAIN.to_dict()}

    timings = {}
    if not (_stamp_ok(stamp, payload) and ckpt.exists() and data.exists()):
        import shutil
        shutil.rmtree(data, ignore_errors=True)
        ckpt.unlink(missing_ok=True)
        t0 = time.time()
        cfg = sc.SceneConfig(n_layers=E2E_DATA["n_layers"])
        sc.build_dataset(data, E2E_DATA["n_scenes"], E2E_DATA["n_slices"],
                         E2E_DATA["seed"], scene_config=cfg)
        timings["data_s"] = time.time() - t0
        t0 = time.time()
        train(data, E2E_TRAIN, ckpt)
        timings["train_s"] = time.time() - t0
        stamp.write_text(json.dumps(payload))
    return {"data": data, "ckpt": ckpt, "timings": timings, "root": root}


@pytest.fixture(scope="session")
def ablation_ckpts(e2e):
    """Three checkpoints trained identically except for the input ablation."""
    root = e2e["root"]
    stamp = root / "ablation_stamp.json"
    payload = {"train": ABLATION_TRAIN, "data": E2E_DATA}
    ckpts = {name: root / f"abl_{name}.ckpt"
             for name in ("full", "w-only", "uw-only")}
    if not (_stamp_ok(stamp, payload) and all(p.exists() for p in ckpts.values())):
        for name, path in ckpts.items():
            cfg = TrainConfig(ablation="none" if name == "full" else name,
                              **ABLATION_TRAIN)
            train(e2e["data"], cfg, path)
        stamp.write_text(json.dumps(payload))
    return ckpts


# ---------------------------------------------------------------- criterion 5

class TestEndToEnd:
    def test_proxy_trained_model_beats_baselines(self, e2e):
        t0 = time.time()
        cfg = eb.EvalConfig(seed=2024)
        model = eb.model_runner(e2e["ckpt"])
        copy = eb.copy_input_runner()

        refocus_m = eb.eval_refocus(model, e2e["data"], cfg).mean_psnr
        refocus_b = eb.eval_refocus(copy, e2e["data"], cfg).mean_psnr
        deblur_m = eb.eval_deblur(model, e2e["data"], cfg).mean_psnr
        deblur_b = eb.eval_deblur(copy, e2e["data"], cfg).mean_psnr
        bokeh_m = eb.eval_bokeh(model, e2e["data"], cfg).mean_psnr
        bokeh_b = eb.eval_bokeh(eb.copy_input_runner("copy-aif"),
                                e2e["data"], cfg).mean_psnr

        m_r = refocus_m - refocus_b
        m_d = deblur_m - deblur_b
        m_b = bokeh_m - bokeh_b
        details = (f"(refocus {refocus_m:.2f} vs {refocus_b:.2f} dB: {m_r:+.2f}, "
                   f"need >= 2 | deblur {deblur_m:.2f} vs {deblur_b:.2f}: "
                   f"{m_d:+.2f}, need >= 1 | bokeh {bokeh_m:.2f} vs "
                   f"{bokeh_b:.2f}: {m_b:+.2f}, need >= 1 | eval "
                   f"{time.time() - t0:.0f}s, build {e2e['timings']})")
        _report("end-to-end proxy task", m_r >= 2.0 and m_d >= 1.0 and m_b >= 1.0,
                details)


# ---------------------------------------------------------------- criterion 6

class TestAblationDirection:
    def test_full_input_at_least_matches_single_path_models(self, ablation_ckpts, e2e):
        rows = eb.run_ablations(e2e["data"], ablation_ckpts,
                                eb.EvalConfig(seed=77))
        scores = {r["config"]: r["mean_psnr"] for r in rows}
        order = sorted(scores, key=scores.get, reverse=True)
        ok = (scores["full"] >= scores["w-only"]
              and scores["full"] >= scores["uw-only"])
        _report("ablation direction",
                ok, f"(refocus PSNR: " +
                ", ".join(f"{k}={v:.2f}" for k, v in scores.items()) +
                f"; ordering {' >= '.join(order)})")


# ---------------------------------------------------------------- criterion 9

class TestServiceContract:
    def test_tiling_determinism_and_cli_parity(self, e2e, tmp_path):
        from dc2.synthcam.dataset import load_scene, list_scenes
        scene = load_scene(list_scenes(e2e["data"])[0])
        engine = RenderEngine(e2e["ckpt"], max_tile=512, overlap=32)
        planes = {"w": scene.slices[0], "uw_warped": scene.uw_warped,
                  "occlusion": scene.occlusion,
                  "ref_defocus": scene.defocus[0],
                  "tgt_defocus": scene.defocus[3]}

        # images within max_tile run as one tile: identical to a direct pass
        untiled = engine._forward_plain(planes, (0, 0), planes["w"].shape[:2])
        via_engine = engine.render(planes)
        single_exact = np.array_equal(untiled, via_engine)

        # forced tiling must stay within the feathering tolerance
        tiled = engine.render(planes, force_tile=128)
        tile_diff = float(np.abs(tiled - untiled).max())

        # determinism
        deterministic = np.array_equal(engine.render(planes),
                                       engine.render(planes))

        # CLI and service produce byte-identical PNGs for one shared spec
        parity = self._cli_service_parity(e2e, scene, tmp_path)

        _report("service contract",
                single_exact and tile_diff <= 2 / 255 and deterministic and parity,
                f"(single-tile exact: {single_exact}, forced-tile max diff "
                f"{tile_diff:.5f} <= {2/255:.5f}, deterministic: "
                f"{deterministic}, CLI/service parity: {parity})")

    @staticmethod
    def _cli_service_parity(e2e, scene, tmp_path) -> bool:
        import base64
        from fastapi.testclient import TestClient
        from dc2.cli import main
        from dc2.service import create_app

        d = tmp_path / "planes"
        d.mkdir()
        fileio.save_image(d / "w.png", scene.slices[0])
        fileio.save_image(d / "uw_warped.png", scene.uw_warped)
        fileio.save_mask(d / "occ.png", scene.occlusion)
        fileio.write_raw_map(d / "depth.raw", scene.depth.values_mm)
        (d / "rig.json").write_text(json.dumps(scene.rig.to_dict()))
        focus = scene.lenses[0].focus_distance_mm

        out = tmp_path / "cli.png"
        rc = main(["effect", "tiltshift", "--ckpt", str(e2e["ckpt"]),
                   "--w", str(d / "w.png"),
                   "--uw-warped", str(d / "uw_warped.png"),
                   "--occlusion-png", str(d / "occ.png"),
                   "--depth", str(d / "depth.raw"),
                   "--rig", str(d / "rig.json"),
                   "--ref-focus-mm", str(focus),
                   "--line-x", "128", "--line-y", "96", "--slope", "0.05",
                   "--max-radius", "8", "--out", str(out)])
        if rc != 0:
            return False

        client = TestClient(create_app(store_dir=tmp_path / "store",
                                       ckpt_path=e2e["ckpt"]))
        body = {
            "w_png": base64.b64encode((d / "w.png").read_bytes()).decode(),
            "uw_warped_png": base64.b64encode(
                (d / "uw_warped.png").read_bytes()).decode(),
            "occlusion_png": base64.b64encode(
                (d / "occ.png").read_bytes()).decode(),
            "depth_raw": base64.b64encode((d / "depth.raw").read_bytes()).decode(),
            "rig": json.loads((d / "rig.json").read_text()),
            "focus_distance_mm": focus,
        }
        r = client.post("/sessions", json=body)
        if r.status_code != 201:
            return False
        sid = r.json()["id"]
        spec = {"variant": "tiltshift", "line_x": 128, "line_y": 96,
                "angle_deg": 0.0, "slope_px_per_px": 0.05, "max_radius_px": 8}
        rr = client.post(f"/sessions/{sid}/render", json={"spec": spec})
        if rr.status_code != 200:
            return False
        return out.read_bytes() == base64.b64decode(rr.json()["image_png"])
