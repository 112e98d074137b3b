"""HTTP face of a wiki node.

Authentication is delegated upstream: requests carry the authenticated
username in the trusted X-User header, and an absent header means the
anonymous user.  Long-running work never blocks a request; edit and push
endpoints enqueue a job and answer 202 with its id, and clients poll
/jobs/{id}.  Repo names may contain slashes, so the browsing routes take
the whole tail of the URL and split it on the /article/ or /item/ marker
(last occurrence wins).
"""

from __future__ import annotations

import json
from contextlib import asynccontextmanager
from typing import Optional

from fastapi import FastAPI, Header, Query, Request, Response
from fastapi.responses import HTMLResponse, JSONResponse

from .depgraph import NotVerifiable, UnknownItem
from .minilib import Mode, ModelError, ParseError
from .node import (
    ANONYMOUS,
    BadUsername,
    NodeError,
    PolicyDenied,
    RepoExists,
    UnknownArticle,
    UnknownItemName,
    UserExists,
    WikiNode,
)
from .orchestrator import NotOwner, RepoNotAttached, UnknownJob
from .vcstore import CorruptObject, RepoNotFound, VcError


class ApiError(Exception):
    """One (HTTP status, machine code) per module error."""

    def __init__(self, status: int, code: str, message: str) -> None:
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message

    def response(self) -> JSONResponse:
        return JSONResponse(
            {"error": self.code, "message": self.message}, status_code=self.status
        )


_ERROR_MAP: tuple[tuple[type, int, str], ...] = (
    (PolicyDenied, 403, "PolicyDenied"),
    (NotOwner, 403, "NotOwner"),
    (UnknownJob, 404, "UnknownJob"),
    (UnknownArticle, 404, "UnknownArticle"),
    (UnknownItemName, 404, "UnknownItem"),
    (UnknownItem, 404, "UnknownItem"),
    (RepoNotFound, 404, "RepoNotFound"),
    (RepoNotAttached, 404, "RepoNotFound"),
    (UserExists, 409, "UserExists"),
    (RepoExists, 409, "RepoExists"),
    (BadUsername, 400, "BadUsername"),
    (ParseError, 400, "ParseError"),
    (ModelError, 400, "BadRequest"),
    (CorruptObject, 400, "CorruptObject"),
    (NotVerifiable, 409, "NotVerifiable"),
    (NodeError, 400, "BadRequest"),
    (VcError, 400, "BadRequest"),
)


def _to_api_error(exc: Exception) -> ApiError:
    for etype, status, code in _ERROR_MAP:
        if isinstance(exc, etype):
            return ApiError(status, code, str(exc))
    return ApiError(500, "Internal", str(exc))


def _mode_of(name: Optional[str]) -> Optional[Mode]:
    if name is None:
        return None
    try:
        return Mode[name.upper()]
    except KeyError:
        raise ApiError(400, "BadMode", f"unknown mode {name!r}")


def _split_wiki_path(tail: str, markers: tuple[str, ...]) -> tuple[str, str, str]:
    """Split '<repo>/<marker>/<rest>' on the last marker occurrence."""
    for marker in markers:
        token = f"/{marker}/"
        if token in tail:
            repo, _, rest = tail.rpartition(token)
            if repo and rest:
                return repo, marker, rest
    raise ApiError(404, "BadPath", f"no {' or '.join(markers)} segment in {tail!r}")


def create_app(node: WikiNode, manage_lifecycle: bool = True) -> FastAPI:
    @asynccontextmanager
    async def lifespan(_: FastAPI):
        if manage_lifecycle:
            node.start()
        try:
            yield
        finally:
            if manage_lifecycle:
                node.stop()

    app = FastAPI(title="formalwiki", lifespan=lifespan)
    app.state.node = node

    @app.exception_handler(ApiError)
    async def on_api_error(_: Request, exc: ApiError) -> JSONResponse:
        return exc.response()

    @app.exception_handler(Exception)
    async def on_error(_: Request, exc: Exception) -> JSONResponse:
        return _to_api_error(exc).response()

    def current_user(x_user: Optional[str]) -> str:
        return x_user if x_user else ANONYMOUS

    # --- browsing --------------------------------------------------------

    @app.get("/wiki/{tail:path}")
    def wiki(tail: str, x_user: Optional[str] = Header(default=None)):
        user = current_user(x_user)
        repo, marker, rest = _split_wiki_path(tail, ("article", "item"))
        try:
            if marker == "article":
                page = node.article_page(user, repo, rest.replace("/", "."))
                return HTMLResponse(page.html)
            article, _, item = rest.rpartition("/")
            if not article:
                raise ApiError(404, "BadPath", f"item route needs article and item: {rest!r}")
            return node.item_info(user, repo, article.replace("/", "."), item)
        except ApiError:
            raise
        except Exception as exc:
            raise _to_api_error(exc)

    @app.get("/stats/{repo:path}")
    def stats(
        repo: str,
        granularity: str = Query(default="item"),
        x_user: Optional[str] = Header(default=None),
    ):
        try:
            report = node.stats(current_user(x_user), repo, granularity)
        except Exception as exc:
            raise _to_api_error(exc)
        return json.loads(report.to_json())

    # --- editing and jobs -----------------------------------------------------

    @app.post("/edit")
    async def edit(
        request: Request,
        dry_run: bool = Query(default=False),
        x_user: Optional[str] = Header(default=None),
    ):
        user = current_user(x_user)
        body = await request.json()
        try:
            repo = body["repo"]
            article = body["article"]
            item = body["item"]
            new_text = body["new_text"]
        except KeyError as exc:
            raise ApiError(400, "BadRequest", f"missing field {exc}")
        mode = _mode_of(body.get("mode"))
        try:
            if dry_run:
                return node.predict_edit(user, repo, article, item, new_text)
            job = node.submit_edit(user, repo, article, item, new_text, mode)
        except Exception as exc:
            raise _to_api_error(exc)
        return JSONResponse({"job_id": job.id}, status_code=202)

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str):
        try:
            return node.orch.job(job_id).to_json()
        except Exception as exc:
            raise _to_api_error(exc)

    @app.get("/queue")
    def queue(x_user: Optional[str] = Header(default=None)):
        user = current_user(x_user)
        return [job.to_json() for job in node.orch.list_queue(user)]

    @app.delete("/jobs/{job_id}")
    def cancel(job_id: str, x_user: Optional[str] = Header(default=None)):
        try:
            return node.cancel_job(current_user(x_user), job_id).to_json()
        except Exception as exc:
            raise _to_api_error(exc)

    # --- accounts and repositories ---------------------------------------------

    @app.post("/register")
    async def register(request: Request):
        body = await request.json()
        try:
            record = node.register(body["username"], body.get("public_key", ""))
        except KeyError as exc:
            raise ApiError(400, "BadRequest", f"missing field {exc}")
        except Exception as exc:
            raise _to_api_error(exc)
        return JSONResponse(record.to_json(), status_code=201)

    @app.post("/repos")
    async def create_repo(request: Request, x_user: Optional[str] = Header(default=None)):
        user = current_user(x_user)
        body = await request.json()
        try:
            info = node.create_repo(body["name"], user)
        except KeyError as exc:
            raise ApiError(400, "BadRequest", f"missing field {exc}")
        except Exception as exc:
            raise _to_api_error(exc)
        return JSONResponse(info, status_code=201)

    # --- wire endpoints -----------------------------------------------------

    @app.post("/push")
    async def push(request: Request, x_user: Optional[str] = Header(default=None)):
        payload = await request.body()
        try:
            job = node.receive_push(payload, as_user=x_user)
        except Exception as exc:
            raise _to_api_error(exc)
        return JSONResponse({"job_id": job.id}, status_code=202)

    @app.post("/mirror/push")
    async def mirror_push(request: Request):
        if node.mirror is None:
            raise ApiError(404, "NoMirror", "this node has no peers configured")
        payload = await request.body()
        return node.mirror.receive(payload).to_json()

    # --- admin ------------------------------------------------------------

    @app.post("/admin/clone-bench")
    async def clone_bench(request: Request, x_user: Optional[str] = Header(default=None)):
        user = current_user(x_user)
        body = await request.json()
        try:
            report = node.clone_bench(
                user, int(body["n"]), repo=body.get("repo", "main")
            )
        except KeyError as exc:
            raise ApiError(400, "BadRequest", f"missing field {exc}")
        except Exception as exc:
            raise _to_api_error(exc)
        return json.loads(report.to_json())

    return app
