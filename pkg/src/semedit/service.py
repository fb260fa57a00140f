"""HTTP service exposing encode / edit / deform to the companion UI.

Endpoints:
  GET  /health                 liveness + loaded classes
  GET  /templates              template metadata for slider construction
  POST /session                mesh upload -> session id + encoded parameters
  POST /session/{id}/deform    edit list -> deformed mesh (original frame)
  POST /session/{id}/template  edit list -> synthetic template overlay mesh
  DELETE /session/{id}

Meshes travel as JSON with flat vertex/face arrays. Sessions hold the
uploaded mesh and its encoded parameters; every deform recomputes from the
original upload, so edits are absolute and never accumulate.
"""

import base64
import logging
import tempfile
import threading
import time
import uuid
from pathlib import Path
from typing import Dict, List, Literal, Optional

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from . import meshio
from .deform import EditSession, WeightConfig
from .encoder import EncoderWeights
from .mesh import Mesh
from .templates import SyntheticMesh, TemplateSpec, spec_to_config

logger = logging.getLogger("semedit.service")


class EditBody(BaseModel):
    name: str
    component: int = 0
    op: Literal["set", "delta"] = "set"
    value: float


class SessionRequest(BaseModel):
    class_id: str
    format: Literal["obj", "ply"] = "obj"
    encoding: Literal["text", "base64"] = "text"
    data: str
    sample_count: int = Field(default=512, ge=8, le=100_000)
    seed: int = 0


class DeformRequest(BaseModel):
    edits: List[EditBody] = Field(default_factory=list)
    mode: Optional[Literal["rigid", "nonrigid"]] = None
    k: Optional[int] = Field(default=None, ge=1, le=64)


class _Session:
    def __init__(self, session: EditSession, class_id: str):
        self.session = session
        self.class_id = class_id
        self.lock = threading.Lock()


def _template_info(spec: TemplateSpec) -> dict:
    return {
        "class_id": spec.class_id,
        "d": spec.d,
        "vertex_count": spec.vertex_count,
        "part_names": list(spec.part_names),
        "params": [
            {
                "name": p.name,
                "kind": p.kind,
                "arity": p.arity,
                "bounds": [list(b) for b in p.bounds],
                "default": list(p.default),
            }
            for p in spec.params
        ],
    }


def _mesh_payload(mesh: Mesh) -> dict:
    return {
        "vertices": [float(x) for x in mesh.vertices.reshape(-1)],
        "faces": [int(x) for x in mesh.faces.reshape(-1)],
        "vertex_count": mesh.vertex_count,
        "face_count": mesh.face_count,
    }


def _synthetic_payload(sm: SyntheticMesh) -> dict:
    out = _mesh_payload(sm.mesh)
    out["part_labels"] = [int(x) for x in sm.part_labels]
    out["part_names"] = list(sm.part_names)
    return out


def create_app(checkpoints: Dict[str, EncoderWeights], ui_dir=None) -> FastAPI:
    """Build the service around a set of per-class encoder weights."""
    app = FastAPI(title="semedit", version="0.1.0")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    sessions: Dict[str, _Session] = {}
    sessions_lock = threading.Lock()

    @app.get("/health")
    def health():
        return {"status": "ok", "classes": sorted(checkpoints)}

    @app.get("/templates")
    def templates_route():
        return {"templates": [_template_info(w.spec) for w in checkpoints.values()]}

    @app.post("/session")
    def create_session(body: SessionRequest):
        weights = checkpoints.get(body.class_id)
        if weights is None:
            raise HTTPException(422, f"no checkpoint loaded for class {body.class_id!r}; "
                                     f"available: {sorted(checkpoints)}")
        try:
            raw = base64.b64decode(body.data) if body.encoding == "base64" else body.data.encode()
        except Exception:
            raise HTTPException(400, "invalid base64 payload")
        with tempfile.NamedTemporaryFile(suffix=f".{body.format}", delete=False) as fh:
            fh.write(raw)
            tmp = Path(fh.name)
        try:
            mesh = meshio.load_mesh(tmp)
        except meshio.MeshParseError as e:
            raise HTTPException(400, f"mesh parse error: {e}")
        finally:
            tmp.unlink(missing_ok=True)
        t0 = time.perf_counter()
        try:
            session = EditSession(weights, mesh, sample_count=body.sample_count, seed=body.seed)
        except ValueError as e:
            raise HTTPException(400, f"cannot encode mesh: {e}")
        encode_ms = (time.perf_counter() - t0) * 1e3
        logger.info("encoded %s mesh (%d vertices) in %.1f ms",
                    body.class_id, mesh.vertex_count, encode_ms)
        sid = uuid.uuid4().hex
        with sessions_lock:
            sessions[sid] = _Session(session, body.class_id)
        return {
            "session_id": sid,
            "class_id": body.class_id,
            "params": [float(v) for v in session.params.values],
            "named": session.params.named(),
            "template": _template_info(weights.spec),
            "vertex_count": mesh.vertex_count,
            "face_count": mesh.face_count,
            "encode_ms": round(encode_ms, 3),
        }

    def _get(sid: str) -> _Session:
        with sessions_lock:
            rec = sessions.get(sid)
        if rec is None:
            raise HTTPException(404, f"unknown session {sid!r}")
        return rec

    def _run_edits(rec: _Session, body: DeformRequest, fn):
        edits = [e.model_dump() for e in body.edits]
        with rec.lock:
            session = rec.session
            if body.mode is not None or body.k is not None:
                base = session.config
                session = _with_config(session, WeightConfig(
                    k=body.k or base.k, mode=body.mode or base.mode,
                    k_n=base.k_n, sigma=base.sigma,
                ))
            try:
                return fn(session, edits)
            except KeyError as e:
                raise HTTPException(422, str(e.args[0]) if e.args else str(e))
            except ValueError as e:
                raise HTTPException(422, str(e))

    @app.post("/session/{sid}/deform")
    def deform(sid: str, body: DeformRequest):
        rec = _get(sid)
        t0 = time.perf_counter()
        mesh = _run_edits(rec, body, lambda s, edits: s.deform(edits))
        logger.info("deform session %s: %d edits in %.1f ms",
                    sid[:8], len(body.edits), (time.perf_counter() - t0) * 1e3)
        return _mesh_payload(mesh)

    @app.post("/session/{sid}/template")
    def template_overlay(sid: str, body: DeformRequest):
        rec = _get(sid)
        sm = _run_edits(rec, body, lambda s, edits: s.decode_template(edits))
        return _synthetic_payload(sm)

    @app.delete("/session/{sid}")
    def close_session(sid: str):
        with sessions_lock:
            sessions.pop(sid, None)
        return {"status": "ok"}

    @app.exception_handler(Exception)
    async def internal_error(request, exc):
        from fastapi.responses import JSONResponse

        error_id = uuid.uuid4().hex[:12]
        logger.exception("internal error %s on %s", error_id, request.url.path)
        return JSONResponse(status_code=500, content={"detail": "internal error", "error_id": error_id})

    if ui_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app


def _with_config(session: EditSession, config: WeightConfig) -> EditSession:
    clone = object.__new__(EditSession)
    clone.__dict__.update(session.__dict__)
    clone.config = config
    return clone
