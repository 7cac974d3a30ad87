"""HTTP inference service: /predict, /refine, /health.

The loaded model snapshot is immutable; requests are stateless and
deterministic for a fixed (checkpoint, request, seed). Images and prompts
travel either as base64 PPM/PGM or as nested arrays (capped at 128x128).
"""

import base64
import hashlib
import os
import time
import uuid

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import netpbm
from .autograd import AutogradError
from .checkpoint import checkpoint_hash, load_checkpoint
from .config import DEFAULTS, dump_config
from .cotrain import predict
from .prompt import AttentionPrompt, PromptError

ARRAY_DIM_CAP = 128


class BadRequest(Exception):
    pass


class PredictOptions(BaseModel):
    return_saliency: bool = False
    seed: int = 0
    n_masks: int | None = None


class PredictRequest(BaseModel):
    image: str | list
    prompt: str | list | None = None
    options: PredictOptions = PredictOptions()


def _decode_image(payload):
    if isinstance(payload, str):
        try:
            raw = base64.b64decode(payload, validate=True)
        except Exception:
            raise BadRequest("image is not valid base64")
        arr, maxval = netpbm.parse_pnm(raw)
        return netpbm.image_to_unit(arr, maxval)
    arr = np.asarray(payload, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise BadRequest(f"image array must be 2-D or 3-D, got {arr.ndim}-D")
    if max(arr.shape[1:]) > ARRAY_DIM_CAP:
        raise BadRequest(f"array images are capped at {ARRAY_DIM_CAP}x{ARRAY_DIM_CAP}")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise BadRequest("image values must lie in [0, 1]")
    return arr


def _decode_prompt(payload):
    if payload is None:
        return None
    if isinstance(payload, str):
        try:
            raw = base64.b64decode(payload, validate=True)
        except Exception:
            raise BadRequest("prompt is not valid base64")
        arr, _ = netpbm.parse_pnm(raw)
        if arr.ndim != 2:
            raise BadRequest("prompt must be a single-channel PGM")
        values = np.zeros(arr.shape, dtype=np.int8)
        lut = {0: 0, 128: -1, 255: 1}
        bad = [int(v) for v in np.unique(arr) if int(v) not in lut]
        if bad:
            raise BadRequest(f"invalid prompt pixel values {bad} (allowed: 0, 128, 255)")
        for code, v in lut.items():
            values[arr == code] = v
        return AttentionPrompt(values)
    arr = np.asarray(payload)
    if arr.ndim != 2 or max(arr.shape) > ARRAY_DIM_CAP:
        raise BadRequest("prompt array must be 2-D, capped at 128x128")
    try:
        return AttentionPrompt(arr)
    except PromptError as e:
        raise BadRequest(str(e))


def _saliency_payload(a):
    pgm = netpbm.encode_pnm(np.rint(np.clip(a, 0.0, 1.0) * 65535).astype(np.uint16),
                            maxval=65535)
    return {"array": a.tolist(), "pgm_base64": base64.b64encode(pgm).decode()}


def build_app(cfg=None, checkpoint_path=None, state=None):
    cfg = dict(cfg or DEFAULTS)
    app = FastAPI(title="vapl inference service")
    snapshot = {"state": state, "checkpoint_id": None}
    if checkpoint_path is not None:
        snapshot["state"] = load_checkpoint(checkpoint_path)
        snapshot["checkpoint_id"] = checkpoint_hash(checkpoint_path)
    config_hash = hashlib.sha256(dump_config(cfg).encode()).hexdigest()

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(BadRequest)
    async def on_bad_request(request: Request, exc):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    def _require_state():
        if snapshot["state"] is None:
            return None
        return snapshot["state"]

    def _run(req: PredictRequest, refine_only: bool):
        st = _require_state()
        if st is None:
            return JSONResponse(status_code=409, content={"error": "no model loaded"})
        t0 = time.perf_counter()
        try:
            image = _decode_image(req.image)
            prompt = _decode_prompt(req.prompt)
            if prompt is not None and prompt.shape != image.shape[-2:]:
                raise BadRequest(f"prompt shape {prompt.shape} does not match "
                                 f"image {image.shape}")
            if refine_only and prompt is None:
                raise BadRequest("refine requires a prompt")
            n_masks = req.options.n_masks or cfg["serve.n_masks"]
            if n_masks > cfg["serve.max_n_masks"]:
                raise BadRequest(f"n_masks exceeds the configured maximum "
                                 f"{cfg['serve.max_n_masks']}")
            want_saliency = refine_only or (req.options.return_saliency and prompt is not None)
            t1 = time.perf_counter()
            out = predict(st, image, prompt, seed=req.options.seed,
                          n_masks=n_masks, return_saliency=want_saliency)
            t2 = time.perf_counter()
        except BadRequest:
            raise
        except PromptError as e:
            raise BadRequest(str(e))
        except (AutogradError, FloatingPointError) as e:
            diag = uuid.uuid4().hex[:12]
            return JSONResponse(status_code=500,
                                content={"error": f"numeric failure: {e}",
                                         "diagnostic_id": diag})
        body = {"path_used": out["path_used"],
                "timing_ms": {"decode": (t1 - t0) * 1e3,
                              "inference": (t2 - t1) * 1e3,
                              "total": (time.perf_counter() - t0) * 1e3}}
        if not refine_only:
            body["class_index"] = out["class_index"]
            body["probabilities"] = out["probabilities"].tolist()
        if want_saliency and out["saliency"] is not None:
            body["saliency"] = _saliency_payload(out["saliency"])
        return JSONResponse(body)

    @app.post("/predict")
    async def predict_endpoint(req: PredictRequest):
        return _run(req, refine_only=False)

    @app.post("/refine")
    async def refine_endpoint(req: PredictRequest):
        return _run(req, refine_only=True)

    @app.get("/health")
    async def health():
        return {"status": "ok", "checkpoint_id": snapshot["checkpoint_id"],
                "config_hash": config_hash}

    if cfg.get("serve.expose_dataset"):
        data_dir = cfg["data.dir"]

        @app.get("/dataset")
        async def dataset_listing():
            listing = {}
            for split in ("train", "val", "test"):
                d = os.path.join(data_dir, split)
                if os.path.isdir(d):
                    idx = sorted(int(p.split(".")[0]) for p in os.listdir(d)
                                 if p.endswith(".img.ppm"))
                    listing[split] = idx
            return listing

        @app.get("/dataset/{split}/{index}")
        async def dataset_image(split: str, index: int):
            path = os.path.join(data_dir, split, f"{index}.img.ppm")
            if split not in ("train", "val", "test") or not os.path.exists(path):
                return JSONResponse(status_code=404, content={"error": "no such sample"})
            with open(path, "rb") as f:
                return {"image_base64": base64.b64encode(f.read()).decode()}

    return app
