from __future__ import annotations

import asyncio
import contextlib
import time
from contextlib import asynccontextmanager

import uvicorn
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from starlette.middleware.base import BaseHTTPMiddleware

from api.models.base import create_all
from api.routers.v1 import mount_all
from api.routers.v1.health import API_NAME, API_VERSION
from core.config import get_settings
from core.errors import BmgError
from core.logs import get_logger, log_event

logger = get_logger("api")


class RequestLogMiddleware(BaseHTTPMiddleware):
    """One structured record per request."""

    async def dispatch(self, request: Request, call_next):
        start = time.perf_counter()
        response = await call_next(request)
        log_event(
            logger,
            "http_request",
            method=request.method,
            path=request.url.path,
            status=response.status_code,
            latency_ms=round((time.perf_counter() - start) * 1000.0, 3),
        )
        return response


@asynccontextmanager
async def lifespan(app: FastAPI):
    create_all()
    task = None
    if get_settings().run_worker:
        from core.worker import worker_loop

        task = asyncio.create_task(worker_loop())
    try:
        yield
    finally:
        if task is not None:
            task.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await task


def create_app() -> FastAPI:
    app = FastAPI(title=API_NAME, version=API_VERSION, lifespan=lifespan)
    app.add_middleware(RequestLogMiddleware)

    @app.exception_handler(BmgError)
    async def _bmg_error(request: Request, exc: BmgError):
        return JSONResponse(status_code=exc.status_code, content={"detail": exc.detail, "code": exc.code})

    mount_all(app)
    return app


app = create_app()


def serve(host: str = "127.0.0.1", port: int = 8000) -> None:
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    serve()
