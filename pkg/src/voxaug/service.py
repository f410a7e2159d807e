"""HTTP preview service backing the browser playground.

Endpoints:

* ``GET  /transforms``            transform schemas (names, params, ranges)
* ``POST /volumes``               NIfTI bytes in the body -> volume_id
* ``POST /preview``               apply a pipeline, return one slice as PNG
* ``GET  /history/{preview_id}``  resolved history of a preview, as a
                                  pipeline JSON replayable by the CLI

Volumes live in an in-memory LRU store (default capacity 4); the service is
localhost-oriented and single-tenant. Identical preview requests return
byte-identical PNGs (deterministic engine + deterministic PNG encoder).
"""

from __future__ import annotations

import json
import threading
import uuid
from collections import OrderedDict
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import nifti
from .errors import VoxaugError
from .image import Image, Subject
from .pipeline import apply, history_as_pipeline, parse_pipeline, pipeline_to_json, schema
from .png import default_window, render_slice
from .rng import Rng


class LruStore:
    """Thread-safe bounded id -> value map, evicting least recently used."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._items: OrderedDict = OrderedDict()
        self._lock = threading.Lock()

    def put(self, key, value) -> None:
        with self._lock:
            self._items[key] = value
            self._items.move_to_end(key)
            while len(self._items) > self.capacity:
                self._items.popitem(last=False)

    def get(self, key):
        with self._lock:
            if key not in self._items:
                return None
            self._items.move_to_end(key)
            return self._items[key]


class VolumeInfo(BaseModel):
    volume_id: str
    shape: list[int] = Field(description="channels-first (C, X, Y, Z)")
    spacing: list[float]


class PreviewRequest(BaseModel):
    volume_id: str
    pipeline: dict
    seed: int = 0
    axis: int = 2
    index: int = 0
    window: Optional[tuple[float, float]] = None


def create_app(max_volumes: int = 4, ui_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="voxaug preview service")
    volumes = LruStore(max_volumes)
    histories = LruStore(64)

    @app.get("/transforms")
    def get_transforms() -> list[dict]:
        return schema()

    @app.post("/volumes", response_model=VolumeInfo)
    async def post_volume(request: Request) -> VolumeInfo:
        raw = await request.body()
        try:
            image = nifti.read_image_bytes(raw)
        except VoxaugError as e:
            raise HTTPException(status_code=400, detail=str(e)) from e
        volume_id = uuid.uuid4().hex[:12]
        volumes.put(volume_id, image)
        return VolumeInfo(
            volume_id=volume_id,
            shape=[int(v) for v in image.shape],
            spacing=[float(v) for v in image.spacing],
        )

    @app.post("/preview")
    def post_preview(req: PreviewRequest) -> Response:
        image = volumes.get(req.volume_id)
        if image is None:
            raise HTTPException(status_code=404, detail=f"unknown volume {req.volume_id}")
        try:
            spec = parse_pipeline(req.pipeline)
        except VoxaugError as e:
            raise HTTPException(status_code=400, detail=str(e)) from e
        subject = Subject({"image": image})
        try:
            out = apply(spec, subject, Rng(req.seed))
        except VoxaugError as e:
            raise HTTPException(status_code=400, detail=str(e)) from e
        result: Image = out["image"]
        window = tuple(req.window) if req.window is not None else None
        try:
            png = render_slice(result, req.axis, req.index, window)
        except IndexError as e:
            raise HTTPException(status_code=422, detail=str(e)) from e
        preview_id = uuid.uuid4().hex[:12]
        histories.put(preview_id, pipeline_to_json(history_as_pipeline(out)))
        used_window = window if window is not None else default_window(result.data[0])
        headers = {
            "X-Preview-Id": preview_id,
            "X-Window-Low": repr(float(used_window[0])),
            "X-Window-High": repr(float(used_window[1])),
        }
        return Response(content=png, media_type="image/png", headers=headers)

    @app.get("/history/{preview_id}")
    def get_history(preview_id: str) -> Response:
        history = histories.get(preview_id)
        if history is None:
            raise HTTPException(status_code=404, detail=f"unknown preview {preview_id}")
        return Response(content=json.dumps(history), media_type="application/json")

    if ui_dir is None:
        candidate = Path.cwd() / "frontend" / "dist"
        ui_dir = str(candidate) if candidate.is_dir() else None
    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="playground")

    return app
