"""Disk-backed session store: one directory per session, reusing the dataset
file formats plus a session.json descriptor."""

from __future__ import annotations

import json
import shutil
import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import align, fileio, optics
from ..optics import DepthMap, LensState
from ..synthcam.rig import CameraRig

__all__ = ["Session", "SessionStore"]


@dataclass
class Session:
    id: str
    created: float
    w: np.ndarray
    uw_warped: np.ndarray
    occlusion: np.ndarray
    depth: DepthMap | None = None
    rig: CameraRig | None = None
    focus_distance_mm: float | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.w.shape[:2]

    def ref_defocus(self) -> np.ndarray:
        """Reference defocus from stored optics; zeros when the session has
        no depth/lens metadata (input treated as already all-in-focus)."""
        if self.depth is None or self.rig is None or self.focus_distance_mm is None:
            return np.zeros(self.shape)
        lens = LensState(self.focus_distance_mm)
        return optics.defocus_map(self.rig.w_cam, lens, self.depth).radii_px

    def planes(self, tgt_defocus: np.ndarray) -> dict:
        return {"w": self.w, "uw_warped": self.uw_warped,
                "occlusion": self.occlusion,
                "ref_defocus": self.ref_defocus(), "tgt_defocus": tgt_defocus}


class SessionStore:
    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(session_id, threading.Lock())

    def create(self, w: np.ndarray, uw: np.ndarray | None = None,
               uw_warped: np.ndarray | None = None,
               occlusion: np.ndarray | None = None,
               depth: DepthMap | None = None, rig: CameraRig | None = None,
               focus_distance_mm: float | None = None) -> Session:
        """Register a capture. Raw ``uw`` is aligned here (estimated warp +
        forward-backward occlusion); alternatively pass pre-warped planes."""
        if w.ndim != 3 or w.shape[2] != 3:
            raise ValueError("w must be an RGB image")
        h, wd = w.shape[:2]
        if uw_warped is None:
            if uw is None:
                raise ValueError("need either uw or uw_warped")
            if uw.shape[:2] != (h, wd):
                raise ValueError("uw dims must match w for estimated alignment")
            fwd = align.estimate_warp(uw, w)
            bwd = align.estimate_warp(w, uw)
            uw_warped = align.warp(uw, fwd)
            if occlusion is None:
                occlusion = align.estimate_occlusion(fwd, bwd)
        if uw_warped.shape[:2] != (h, wd):
            raise ValueError("uw_warped dims mismatch")
        if occlusion is None:
            occlusion = np.zeros((h, wd))
        if occlusion.shape[:2] != (h, wd):
            raise ValueError("occlusion dims mismatch")
        if depth is not None and depth.shape != (h, wd):
            raise ValueError("depth dims mismatch")

        session = Session(
            id=uuid.uuid4().hex[:12], created=time.time(),
            w=np.asarray(w, dtype=np.float64),
            uw_warped=np.asarray(uw_warped, dtype=np.float64),
            occlusion=np.asarray(occlusion, dtype=np.float64),
            depth=depth, rig=rig, focus_distance_mm=focus_distance_mm,
        )
        self._persist(session)
        return session

    def _persist(self, s: Session) -> None:
        folder = self.root / s.id
        folder.mkdir(parents=True, exist_ok=False)
        fileio.save_image(folder / "w.png", s.w)
        fileio.save_image(folder / "uw_warped.png", s.uw_warped)
        fileio.save_mask(folder / "occlusion.png", s.occlusion)
        if s.depth is not None:
            fileio.write_raw_map(folder / "depth.raw", s.depth.values_mm)
        meta = {
            "id": s.id, "created": s.created,
            "focus_distance_mm": s.focus_distance_mm,
            "rig": s.rig.to_dict() if s.rig is not None else None,
            "dims": list(s.shape),
        }
        (folder / "session.json").write_text(json.dumps(meta, indent=2))

    def load(self, session_id: str) -> Session:
        folder = self.root / session_id
        if not (folder / "session.json").exists():
            raise KeyError(session_id)
        with self._lock(session_id):
            meta = json.loads((folder / "session.json").read_text())
            depth = None
            if (folder / "depth.raw").exists():
                depth = DepthMap(fileio.read_raw_map(folder / "depth.raw"))
            rig = CameraRig.from_dict(meta["rig"]) if meta.get("rig") else None
            return Session(
                id=meta["id"], created=meta["created"],
                w=fileio.load_image(folder / "w.png"),
                uw_warped=fileio.load_image(folder / "uw_warped.png"),
                occlusion=fileio.load_mask(folder / "occlusion.png"),
                depth=depth, rig=rig,
                focus_distance_mm=meta.get("focus_distance_mm"),
            )

    def list(self) -> list[dict]:
        out = []
        for folder in sorted(self.root.iterdir()):
            meta_path = folder / "session.json"
            if meta_path.exists():
                meta = json.loads(meta_path.read_text())
                out.append({"id": meta["id"], "created": meta["created"],
                            "dims": meta.get("dims"),
                            "has_depth": (folder / "depth.raw").exists()})
        return out

    def delete(self, session_id: str) -> None:
        folder = self.root / session_id
        if not folder.exists():
            raise KeyError(session_id)
        with self._lock(session_id):
            shutil.rmtree(folder)

    def __contains__(self, session_id: str) -> bool:
        return (self.root / session_id / "session.json").exists()
