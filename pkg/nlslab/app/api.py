"""Application factory wiring the classify + ground-state routers together."""

from fastapi import FastAPI

from nlslab import __version__
from nlslab.app.classify_api import router as classify_router
from nlslab.app.ground_state_api import router as ground_state_router


def create_app() -> FastAPI:
    app = FastAPI(title="nlslab API", version=__version__)
    app.include_router(classify_router)
    app.include_router(ground_state_router)
    return app


app = create_app()


__all__ = ["app", "create_app"]
