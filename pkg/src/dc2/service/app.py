"""HTTP JSON API for interactive defocus control.

Image payloads ride as base64 PNG inside JSON; depth and explicit defocus
maps use the raw float format, base64-encoded. Model inference is serialized
through a small worker semaphore (default 1).
"""

from __future__ import annotations

import base64
import os
import threading
import time

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .. import fileio
from ..optics import DepthMap
from ..synthcam.rig import CameraRig
from .engine import RenderEngine
from .specs import DefocusSpec, build_defocus_map, DEFAULT_MAX_RADIUS
from .store import SessionStore

__all__ = ["create_app"]


class CreateSessionBody(BaseModel):
    w_png: str
    uw_png: str | None = None
    uw_warped_png: str | None = None
    occlusion_png: str | None = None
    depth_raw: str | None = None
    rig: dict | None = None
    focus_distance_mm: float | None = None


class SpecBody(BaseModel):
    spec: dict


def _png(b64: str) -> np.ndarray:
    try:
        return fileio.decode_png_bytes(base64.b64decode(b64))
    except Exception as exc:
        raise HTTPException(400, f"undecodable PNG payload: {exc}")


def _raw_map(b64: str) -> np.ndarray:
    import struct
    blob = base64.b64decode(b64)
    if len(blob) < 8:
        raise HTTPException(400, "truncated raw map")
    h, w = struct.unpack("<ii", blob[:8])
    data = np.frombuffer(blob, dtype="<f4", offset=8)
    if data.size != h * w:
        raise HTTPException(400, "raw map size mismatch")
    return data.reshape(h, w).astype(np.float64)


def create_app(store_dir=None, ckpt_path=None, max_tile: int = 512,
               overlap: int = 32, workers: int = 1,
               max_radius: float = DEFAULT_MAX_RADIUS) -> FastAPI:
    store_dir = store_dir or os.environ.get("DC2_STORE", "./dc2-sessions")
    ckpt_path = ckpt_path or os.environ.get("DC2_CKPT")

    store = SessionStore(store_dir)
    engine = RenderEngine(ckpt_path, max_tile=max_tile, overlap=overlap) \
        if ckpt_path else None
    infer_slots = threading.Semaphore(workers)

    app = FastAPI(title="dc2 defocus control service")
    from fastapi.middleware.cors import CORSMiddleware
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])

    def get_session(session_id: str):
        try:
            return store.load(session_id)
        except KeyError:
            raise HTTPException(404, f"unknown session {session_id}")

    def spec_from(body: SpecBody) -> DefocusSpec:
        try:
            return DefocusSpec.from_dict(body.spec)
        except (ValueError, TypeError) as exc:
            raise HTTPException(400, f"bad defocus spec: {exc}")

    def target_map(spec: DefocusSpec, session) -> np.ndarray:
        cam = session.rig.w_cam if session.rig is not None else None
        try:
            return build_defocus_map(spec, session.shape, depth=session.depth,
                                     cam=cam, max_radius=max_radius)
        except ValueError as exc:
            raise HTTPException(400, f"cannot build defocus map: {exc}")

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "model_loaded": engine is not None,
                "checkpoint": engine.checkpoint_id if engine else None}

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        w = _png(body.w_png)
        kwargs = {}
        if body.uw_png is not None:
            kwargs["uw"] = _png(body.uw_png)
        if body.uw_warped_png is not None:
            kwargs["uw_warped"] = _png(body.uw_warped_png)
        if body.occlusion_png is not None:
            occ = _png(body.occlusion_png)
            kwargs["occlusion"] = occ if occ.ndim == 2 else occ[..., 0]
        if body.depth_raw is not None:
            kwargs["depth"] = DepthMap(_raw_map(body.depth_raw))
        if body.rig is not None:
            try:
                kwargs["rig"] = CameraRig.from_dict(body.rig)
            except (KeyError, ValueError) as exc:
                raise HTTPException(400, f"bad rig metadata: {exc}")
        try:
            session = store.create(w, focus_distance_mm=body.focus_distance_mm,
                                   **kwargs)
        except ValueError as exc:
            raise HTTPException(400, str(exc))
        return {"id": session.id, "created": session.created,
                "dims": list(session.shape)}

    @app.get("/sessions")
    def list_sessions():
        return {"sessions": store.list()}

    @app.get("/sessions/{session_id}")
    def get_session_detail(session_id: str):
        s = get_session(session_id)
        return {
            "id": s.id, "created": s.created, "dims": list(s.shape),
            "has_depth": s.depth is not None,
            "focus_distance_mm": s.focus_distance_mm,
            "w_png": base64.b64encode(fileio.encode_png_bytes(s.w)).decode(),
        }

    @app.delete("/sessions/{session_id}")
    def delete_session(session_id: str):
        try:
            store.delete(session_id)
        except KeyError:
            raise HTTPException(404, f"unknown session {session_id}")
        return {"deleted": session_id}

    @app.post("/sessions/{session_id}/defocus-map")
    def defocus_map_preview(session_id: str, body: SpecBody):
        s = get_session(session_id)
        spec = spec_from(body)
        tgt = target_map(spec, s)
        preview = tgt / max_radius
        return {
            "map_png": base64.b64encode(
                fileio.encode_png_bytes(preview, bitdepth=16)).decode(),
            "min_radius_px": float(tgt.min()),
            "max_radius_px": float(tgt.max()),
            "normalizer": max_radius,
        }

    @app.post("/sessions/{session_id}/render")
    def render(session_id: str, body: SpecBody):
        if engine is None:
            raise HTTPException(503, "model not loaded (set DC2_CKPT)")
        s = get_session(session_id)
        spec = spec_from(body)
        tgt = target_map(spec, s)
        t0 = time.time()
        with infer_slots:
            img = engine.render(s.planes(tgt))
        latency_ms = (time.time() - t0) * 1000.0
        return {
            "image_png": base64.b64encode(fileio.encode_png_bytes(img)).decode(),
            "provenance": {
                "checkpoint": engine.checkpoint_id,
                "session": s.id,
                "spec": spec.to_dict(),
                "latency_ms": latency_ms,
            },
        }

    app.state.store = store
    app.state.engine = engine
    return app


def main():
    """Entry used by `dc2 serve`."""
    import uvicorn
    port = int(os.environ.get("DC2_PORT", "8787"))
    uvicorn.run(create_app(), host="127.0.0.1", port=port)
