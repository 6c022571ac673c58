"""Command-line entry point.

Subcommands: gen-data, train, eval, refocus, effect, serve, inspect.
Exit codes: 0 success, 1 usage error, 2 runtime failure. Option values
resolve as flags > environment (DC2_<UPPER_NAME>) > --config JSON > default.
Every run prints a reproducibility header (seed, resolved-config hash,
checkpoint id when applicable).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="dc2", description=__doc__,
                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--config", help="JSON config file (lowest precedence)")
    p.add_argument("--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic dual-camera dataset")
    g.add_argument("--scenes", type=int, default=None)
    g.add_argument("--slices", type=int, default=None)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", default=None)
    g.add_argument("--baseline-mm", type=float, default=None)
    g.add_argument("--color-jitter", type=float, default=None)
    g.add_argument("--layers", type=int, default=None)
    g.add_argument("--texture", default=None,
                   choices=["mixed", "checker", "noise", "gradient", "smooth"])
    g.add_argument("--occlusion", default=None, choices=["estimated", "exact"])

    t = sub.add_parser("train", help="train the detail fusion network")
    t.add_argument("--data", default=None)
    t.add_argument("--out", default=None)
    t.add_argument("--steps1", type=int, default=None)
    t.add_argument("--steps2", type=int, default=None)
    t.add_argument("--lr1", type=float, default=None)
    t.add_argument("--lr2", type=float, default=None)
    t.add_argument("--batch", type=int, default=None)
    t.add_argument("--crop", type=int, default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--preset", default=None, choices=["tiny", "full"])
    t.add_argument("--ablation", default=None,
                   choices=["none", "w-only", "uw-only", "no-occlusion"])
    t.add_argument("--perceptual", default=None, choices=["random", "none"])
    t.add_argument("--log", default=None, help="metrics CSV path")

    e = sub.add_parser("eval", help="run evaluation protocols")
    e.add_argument("--task", default=None,
                   choices=["deblur", "bokeh", "refocus", "all"])
    e.add_argument("--ckpt", default=None)
    e.add_argument("--data", default=None)
    e.add_argument("--seed", type=int, default=None)
    e.add_argument("--out", default=None, help="report CSV path")
    e.add_argument("--pairs", type=int, default=None)
    e.add_argument("--merged-aif", action="store_true",
                   help="score deblur against the focus-stack merge")
    e.add_argument("--no-align", action="store_true")

    r = sub.add_parser("refocus", help="one-shot physical refocus of a capture")
    _session_input_args(r)
    r.add_argument("--focus-mm", type=float, default=None)
    r.add_argument("--aperture-mm", type=float, default=None)
    r.add_argument("--out", default=None)

    f = sub.add_parser("effect", help="render a defocus effect preset")
    f.add_argument("kind", choices=["zeros", "tiltshift", "masked", "physical",
                                    "explicit"])
    _session_input_args(f)
    f.add_argument("--out", default=None)
    f.add_argument("--focus-mm", type=float, default=None)
    f.add_argument("--aperture-mm", type=float, default=None)
    f.add_argument("--line-x", type=float, default=None)
    f.add_argument("--line-y", type=float, default=None)
    f.add_argument("--angle-deg", type=float, default=0.0)
    f.add_argument("--slope", type=float, default=None)
    f.add_argument("--max-radius", type=float, default=8.0)
    f.add_argument("--mask", default=None, help="binary mask PNG")
    f.add_argument("--fg-radius", type=float, default=0.0)
    f.add_argument("--bg-radius", type=float, default=6.0)
    f.add_argument("--map", default=None, help="explicit raw float map")

    s = sub.add_parser("serve", help="run the HTTP service")
    s.add_argument("--ckpt", default=None)
    s.add_argument("--store", default=None)
    s.add_argument("--port", type=int, default=None)
    s.add_argument("--tile", type=int, default=None)
    s.add_argument("--overlap", type=int, default=None)

    i = sub.add_parser("inspect", help="dump network intermediates for one pair")
    i.add_argument("--ckpt", default=None)
    i.add_argument("--scene", default=None, help="scene folder")
    i.add_argument("--ref", type=int, default=0)
    i.add_argument("--tgt", type=int, default=None)
    i.add_argument("--out", default=None)
    return p


def _session_input_args(p):
    p.add_argument("--ckpt", default=None)
    p.add_argument("--w", default=None, help="wide image PNG")
    p.add_argument("--uw", default=None, help="raw ultra-wide PNG (estimated alignment)")
    p.add_argument("--uw-warped", default=None, help="pre-aligned ultra-wide PNG")
    p.add_argument("--occlusion-png", default=None)
    p.add_argument("--depth", default=None, help="raw float depth map")
    p.add_argument("--rig", default=None, help="rig JSON (meta.json 'rig' object)")
    p.add_argument("--ref-focus-mm", type=float, default=None)
    p.add_argument("--tile", type=int, default=None)
    p.add_argument("--overlap", type=int, default=None)


class _Resolver:
    """flags > DC2_* env > config file > default."""

    def __init__(self, args, config_path):
        self.args = vars(args)
        self.file = {}
        if config_path:
            self.file = json.loads(Path(config_path).read_text())
        self.resolved = {}

    def get(self, name, default=None, cast=None):
        val = self.args.get(name.replace("-", "_"))
        if val is None:
            env = os.environ.get("DC2_" + name.replace("-", "_").upper())
            if env is not None:
                val = env
            elif name in self.file:
                val = self.file[name]
            else:
                val = default
        if val is not None and cast is not None:
            val = cast(val)
        self.resolved[name] = val
        return val

    def require(self, name, cast=None):
        val = self.get(name, cast=cast)
        if val is None:
            raise _UsageError(f"missing required option --{name}")
        return val

    def header_hash(self) -> str:
        blob = json.dumps(self.resolved, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _print_header(command, seed, res, ckpt=None):
    from .dfnet import checkpoint_id
    ck = f" ckpt={checkpoint_id(ckpt)}" if ckpt else ""
    print(f"[dc2 {command}] seed={seed} config={res.header_hash()}{ck}")


def _cmd_gen_data(res) -> int:
    from . import synthcam
    scenes = res.require("scenes", int)
    slices = res.require("slices", int)
    seed = res.get("seed", 0, int)
    out = res.require("out")
    baseline = res.get("baseline-mm", 10.0, float)
    jitter = res.get("color-jitter", 1.0, float)
    layers = res.get("layers", 3, int)
    texture = res.get("texture", "mixed")
    occ_mode = res.get("occlusion", "estimated")
    _print_header("gen-data", seed, res)
    rig = synthcam.default_rig(baseline_mm=(baseline, 0.0), color_jitter=jitter)
    cfg = synthcam.SceneConfig(n_layers=layers, texture_kind=texture, rig=rig)
    folders = synthcam.build_dataset(
        out, scenes, slices, seed, rig=rig, scene_config=cfg,
        occlusion_mode=occ_mode,
        progress=lambda i, n: print(f"  scene {i}/{n}", flush=True))
    print(f"wrote {len(folders)} scenes under {out}")
    return 0


def _cmd_train(res) -> int:
    from .train import TrainConfig, train
    data = res.require("data")
    out = res.require("out")
    seed = res.get("seed", 0, int)
    cfg = TrainConfig(
        batch_size=res.get("batch", 8, int),
        crop=res.get("crop", 256, int),
        lr_phase1=res.get("lr1", 1e-4, float),
        lr_phase2=res.get("lr2", 1e-5, float),
        steps_phase1=res.get("steps1", 2000, int),
        steps_phase2=res.get("steps2", 1000, int),
        seed=seed,
        perceptual=res.get("perceptual", "random"),
        model_preset=res.get("preset", "tiny"),
        ablation=res.get("ablation", "none"),
    )
    _print_header("train", seed, res)
    result = train(data, cfg, out, log_csv=res.get("log"),
                   progress=lambda r: print(
                       "  step %(step)d lr %(lr).1e total %(total).4f" % r,
                       flush=True))
    print(f"checkpoint: {result.checkpoint} "
          f"(loss {result.initial_total:.4f} -> {result.final_total:.4f})")
    return 0


def _cmd_eval(res) -> int:
    from . import evalbench as eb
    task = res.get("task", "all")
    ckpt = res.require("ckpt")
    data = res.require("data")
    seed = res.get("seed", 0, int)
    out = res.get("out")
    cfg = eb.EvalConfig(seed=seed,
                        align_deblur=not res.get("no-align", False),
                        use_merged_aif=res.get("merged-aif", False),
                        pairs_per_scene=res.get("pairs", 6, int))
    _print_header("eval", seed, res, ckpt=ckpt)
    runner = eb.model_runner(ckpt)
    baseline = eb.copy_input_runner()
    tasks = ["deblur", "bokeh", "refocus"] if task == "all" else [task]
    all_rows = []
    for name in tasks:
        fn = {"deblur": eb.eval_deblur, "bokeh": eb.eval_bokeh,
              "refocus": eb.eval_refocus}[name]
        rep = fn(runner, data, cfg)
        base = fn(baseline, data, cfg)
        print(f"  {name}: model {rep.mean_psnr:.2f} dB / {rep.mean_ssim:.4f} ssim"
              f" | baseline {base.mean_psnr:.2f} dB"
              f" | margin {rep.mean_psnr - base.mean_psnr:+.2f} dB")
        for r in rep.rows:
            all_rows.append({"task": name, "model": rep.model_id, **r})
        for r in base.rows:
            all_rows.append({"task": name, "model": base.model_id, **r})
    if out and all_rows:
        import csv
        keys = sorted({k for row in all_rows for k in row})
        with open(out, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=keys)
            writer.writeheader()
            writer.writerows(all_rows)
        print(f"report: {out}")
    return 0


def _load_planes(res):
    """Shared session-plane assembly for refocus/effect."""
    from . import align, fileio
    from .optics import DepthMap
    from .synthcam.rig import CameraRig, default_rig

    w = fileio.load_image(res.require("w"))
    h, wd = w.shape[:2]
    uw_warped_path = res.get("uw-warped")
    uw_path = res.get("uw")
    occlusion = None
    if res.get("occlusion-png"):
        occlusion = fileio.load_mask(res.get("occlusion-png"))
    if uw_warped_path:
        uw_warped = fileio.load_image(uw_warped_path)
    elif uw_path:
        uw = fileio.load_image(uw_path)
        fwd = align.estimate_warp(uw, w)
        bwd = align.estimate_warp(w, uw)
        uw_warped = align.warp(uw, fwd)
        if occlusion is None:
            occlusion = align.estimate_occlusion(fwd, bwd)
    else:
        raise _UsageError("need --uw or --uw-warped")
    if occlusion is None:
        occlusion = np.zeros((h, wd))

    depth = None
    if res.get("depth"):
        depth = DepthMap(fileio.read_raw_map(res.get("depth")))
    if res.get("rig"):
        rig = CameraRig.from_dict(json.loads(Path(res.get("rig")).read_text()))
    else:
        rig = default_rig(width_px=wd, height_px=h)

    ref_focus = res.get("ref-focus-mm", None, float)
    if depth is not None and ref_focus is not None:
        from . import optics
        from .optics import LensState
        ref_defocus = optics.defocus_map(rig.w_cam, LensState(ref_focus),
                                         depth).radii_px
    else:
        ref_defocus = np.zeros((h, wd))
    planes = {"w": w, "uw_warped": uw_warped, "occlusion": occlusion,
              "ref_defocus": ref_defocus}
    return planes, depth, rig


def _render_with_spec(res, spec, out_path, command, seed):
    from . import fileio
    from .service.engine import RenderEngine
    from .service.specs import build_defocus_map

    ckpt = res.require("ckpt")
    _print_header(command, seed, res, ckpt=ckpt)
    planes, depth, rig = _load_planes(res)
    h, w = planes["w"].shape[:2]
    tgt = build_defocus_map(spec, (h, w), depth=depth, cam=rig.w_cam)
    engine = RenderEngine(ckpt, max_tile=res.get("tile", 512, int),
                          overlap=res.get("overlap", 32, int))
    import time
    t0 = time.time()
    img = engine.render({**planes, "tgt_defocus": tgt})
    latency_ms = (time.time() - t0) * 1000
    Path(out_path).write_bytes(fileio.encode_png_bytes(img))
    sidecar = {
        "checkpoint": engine.checkpoint_id,
        "spec": spec.to_dict(),
        "latency_ms": latency_ms,
        "seed": seed,
        "config": res.header_hash(),
    }
    Path(str(out_path) + ".json").write_text(json.dumps(sidecar, indent=2))
    print(f"wrote {out_path} (+ provenance sidecar)")
    return 0


def _cmd_refocus(res) -> int:
    from .service.specs import DefocusSpec
    seed = res.get("seed", 0, int)
    spec = DefocusSpec("physical", {
        "aperture_mm": res.require("aperture-mm", float),
        "focus_distance_mm": res.require("focus-mm", float),
    })
    return _render_with_spec(res, spec, res.require("out"), "refocus", seed)


def _cmd_effect(res, kind) -> int:
    from . import fileio
    from .service.specs import DefocusSpec
    seed = res.get("seed", 0, int)
    if kind == "zeros":
        spec = DefocusSpec("zeros")
    elif kind == "physical":
        spec = DefocusSpec("physical", {
            "aperture_mm": res.require("aperture-mm", float),
            "focus_distance_mm": res.require("focus-mm", float)})
    elif kind == "tiltshift":
        spec = DefocusSpec("tiltshift", {
            "line_x": res.require("line-x", float),
            "line_y": res.require("line-y", float),
            "angle_deg": res.get("angle-deg", 0.0, float),
            "slope_px_per_px": res.require("slope", float),
            "max_radius_px": res.get("max-radius", 8.0, float)})
    elif kind == "masked":
        mask = fileio.load_mask(res.require("mask"))
        spec = DefocusSpec("masked", {
            "mask": mask > 0.5,
            "fg_radius_px": res.get("fg-radius", 0.0, float),
            "bg_radius_px": res.get("bg-radius", 6.0, float)})
    else:
        spec = DefocusSpec("explicit", {"map": fileio.read_raw_map(res.require("map"))})
    return _render_with_spec(res, spec, res.require("out"), f"effect {kind}", seed)


def _cmd_serve(res) -> int:
    import uvicorn
    from .service.app import create_app
    seed = res.get("seed", 0, int)
    ckpt = res.get("ckpt") or os.environ.get("DC2_CKPT")
    _print_header("serve", seed, res, ckpt=ckpt)
    app = create_app(store_dir=res.get("store"),
                     ckpt_path=ckpt,
                     max_tile=res.get("tile", 512, int),
                     overlap=res.get("overlap", 32, int))
    uvicorn.run(app, host="127.0.0.1", port=res.get("port", 8787, int))
    return 0


def _cmd_inspect(res) -> int:
    from .dfnet import NetInput, load_checkpoint, inspect
    from .synthcam.dataset import load_scene
    ckpt = res.require("ckpt")
    scene_dir = res.require("scene")
    seed = res.get("seed", 0, int)
    _print_header("inspect", seed, res, ckpt=ckpt)
    scene = load_scene(scene_dir)
    ref = res.get("ref", 0, int)
    tgt = res.get("tgt", None)
    tgt = int(tgt) if tgt is not None else (scene.n_slices - 1 if ref == 0 else 0)
    model, _ = load_checkpoint(ckpt)
    inp = NetInput(w_image=scene.slices[ref], uw_warped=scene.uw_warped,
                   occlusion=scene.occlusion, ref_defocus=scene.defocus[ref],
                   tgt_defocus=scene.defocus[tgt])
    out_path = res.require("out")
    result = inspect(model, inp, panel_path=out_path)
    print(f"wrote {out_path}; mask_uw mean {result['mask_uw'].mean():.3f}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        res = _Resolver(args, args.config)
        if args.command == "gen-data":
            return _cmd_gen_data(res)
        if args.command == "train":
            return _cmd_train(res)
        if args.command == "eval":
            return _cmd_eval(res)
        if args.command == "refocus":
            res.get("seed", 0, int)
            return _cmd_refocus(res)
        if args.command == "effect":
            return _cmd_effect(res, args.kind)
        if args.command == "serve":
            return _cmd_serve(res)
        if args.command == "inspect":
            return _cmd_inspect(res)
        raise _UsageError(f"unknown command {args.command}")
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 2
    except Exception as exc:  # runtime failure contract: exit 2
        print(f"error: {exc}", file=sys.stderr)
        if "--verbose" in (argv or sys.argv):
            import traceback
            traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
