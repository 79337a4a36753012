"""HTTP task-management API: the server side of the web panel.

A thin facade over the TaskManager registry; every state change it performs
is observable afterwards through the CLI on the same task home. Output
streaming is a cursor-based long poll over tuner.log: GET .../output?since=N
returns lines[N:] as soon as any exist (or after a 25 s timeout), plus the
next cursor, so concatenating chunks reproduces the log prefix exactly.
Binds to loopback by default and carries no authentication.
"""

from __future__ import annotations

import time
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Request, UploadFile
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles

from .errors import OptTuneError, TaskError, UnknownTaskError, ValidationError
from .taskman import TaskManager

LONG_POLL_SECONDS = 25.0
POLL_INTERVAL = 0.2
MAX_UPLOAD_BYTES = 64 * 1024 * 1024


def _http_error(exc: OptTuneError) -> HTTPException:
    if isinstance(exc, UnknownTaskError):
        return HTTPException(status_code=404, detail=str(exc))
    if isinstance(exc, ValidationError):
        message = str(exc)
        key = message.split(":", 1)[0] if ":" in message else "config"
        return HTTPException(status_code=400, detail={"errors": {key: message}})
    if isinstance(exc, TaskError):
        return HTTPException(status_code=409, detail=str(exc))
    return HTTPException(status_code=500, detail=str(exc))


def create_app(manager: Optional[TaskManager] = None,
               webui_dir: Optional[Path] = None) -> FastAPI:
    manager = manager or TaskManager()
    app = FastAPI(title="opttune task API", version="1")
    app.state.manager = manager

    @app.exception_handler(OptTuneError)
    def _domain_error(_request: Request, exc: OptTuneError):
        http = _http_error(exc)
        return JSONResponse(status_code=http.status_code, content={"detail": http.detail})

    @app.post("/api/v1/tasks", status_code=201)
    def create_task(body: dict):
        config = dict(body.get("config") or {})
        for key in ("solver", "problems", "name"):
            if key in body and key not in config:
                config[key] = body[key]
        config.setdefault("problems", [])
        task_id = manager.create_task(config)
        return {"task-id": task_id}

    @app.post("/api/v1/tasks/{task_id}/problems", status_code=201)
    def upload_problem(task_id: str, file: UploadFile):
        payload = file.file.read(MAX_UPLOAD_BYTES + 1)
        if len(payload) > MAX_UPLOAD_BYTES:
            raise HTTPException(status_code=413, detail="upload exceeds the size cap")
        stored = manager.add_problem(task_id, file.filename or "problem.dat", payload)
        return {"stored-path": stored}

    @app.post("/api/v1/tasks/{task_id}/run", status_code=202)
    def run_task(task_id: str):
        state = manager.run_task(task_id, block=False)
        return {"state": state.status}

    @app.post("/api/v1/tasks/{task_id}/stop", status_code=202)
    def stop_task(task_id: str):
        state = manager.stop_task(task_id)
        return {"state": state.status, "termination-reason": state.termination_reason}

    @app.delete("/api/v1/tasks/{task_id}", status_code=204)
    def delete_task(task_id: str):
        manager.delete_task(task_id)

    @app.get("/api/v1/tasks")
    def list_tasks(state: str = "active"):
        if state not in ("active", "deleted"):
            raise HTTPException(status_code=400, detail="state must be active or deleted")
        return {"tasks": manager.list_tasks(state)}

    @app.get("/api/v1/tasks/{task_id}")
    def task_status(task_id: str):
        doc = manager.task_status(task_id)
        return {
            "task-id": task_id,
            "state": doc["state"],
            "progress": doc["progress"],
            "termination-reason": doc["termination_reason"],
            "error": doc["error"],
        }

    @app.get("/api/v1/tasks/{task_id}/output")
    def task_output(task_id: str, since: int = 0):
        deadline = time.monotonic() + LONG_POLL_SECONDS
        while True:
            lines, nxt = manager.output_lines(task_id, since)
            if lines:
                return {"lines": lines, "next": nxt}
            status = manager.task_status(task_id)["state"]
            if status != "running" or time.monotonic() >= deadline:
                return {"lines": [], "next": since}
            time.sleep(POLL_INTERVAL)

    @app.get("/api/v1/tasks/{task_id}/report")
    def task_report(task_id: str):
        return manager.report(task_id).to_dict()

    @app.get("/api/v1/tasks/{task_id}/files/{kind}")
    def task_file(task_id: str, kind: str):
        manager.task_status(task_id)  # 404 on unknown id
        try:
            path = manager.task_file(task_id, kind)
        except TaskError as e:
            raise HTTPException(status_code=404, detail=str(e)) from e
        return FileResponse(path, filename=path.name)

    if webui_dir and Path(webui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(webui_dir), html=True), name="webui")

    return app
