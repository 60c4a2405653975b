"""FastAPI service exposing channel synthesis and gain-matrix path extraction"""

from contextlib import asynccontextmanager

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import RedirectResponse

from app import __version__
from app.config import get_settings
from app.core.errors import InvalidInputError, ToolkitError
from app.core.ppgc import GainMatrix, get_dictionary, synthesize_channel, synthesize_from_gains
from app.models.schemas import (
    ArrayConfig,
    ChannelPayload,
    DictionaryConfig,
    ExtractResponse,
    GainMatrixRequest,
    StatusResponse,
    SynthesizeRequest,
)
from app.services.genmodel import extract_params
from app.utils.logger import configure_logging, get_logger

logger = get_logger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Application lifespan manager"""
    settings = get_settings()
    configure_logging(settings.log_level)
    logger.info("Starting channel toolkit API server...")
    yield
    logger.info("Shutting down...")


app = FastAPI(
    title="Channel Toolkit API",
    description="Geometric mmWave MIMO channel synthesis and gain-matrix path extraction",
    version=__version__,
    lifespan=lifespan,
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


def to_payload(h: np.ndarray) -> ChannelPayload:
    return ChannelPayload(real=h.real.tolist(), imag=h.imag.tolist())


def _gain_matrix(request: GainMatrixRequest) -> GainMatrix:
    weights = np.asarray(request.weights, dtype=np.float64)
    if request.imag_weights is not None:
        imag = np.asarray(request.imag_weights, dtype=np.float64)
        if imag.shape != weights.shape:
            raise InvalidInputError(f"imag_weights shape {imag.shape} does not match weights {weights.shape}")
        weights = weights + 1j * imag
    return GainMatrix(weights)


def _http_error(action: str, e: Exception) -> HTTPException:
    logger.error(f"{action} failed: {e}")
    status_code = 422 if isinstance(e, InvalidInputError) else 500
    return HTTPException(status_code=status_code, detail=str(e))


@app.get("/")
async def root():
    """Redirect to API documentation"""
    return RedirectResponse(url="/docs")


@app.get("/status", response_model=StatusResponse)
async def status() -> StatusResponse:
    """Service version and default model configuration"""
    return StatusResponse(
        status="healthy",
        version=__version__,
        default_array=ArrayConfig(),
        default_dictionary=DictionaryConfig(),
    )


@app.post("/channels/synthesize", response_model=ChannelPayload)
def synthesize(request: SynthesizeRequest) -> ChannelPayload:
    """Channel matrix of a list of propagation paths"""
    try:
        return to_payload(synthesize_channel(request.paths, request.array))
    except ToolkitError as e:
        raise _http_error("Synthesis", e)


@app.post("/gains/synthesize", response_model=ChannelPayload)
def synthesize_gains(request: GainMatrixRequest) -> ChannelPayload:
    """Channel matrix of a gain matrix over the angle dictionary"""
    try:
        w = _gain_matrix(request)
        return to_payload(synthesize_from_gains(w, get_dictionary(request.dictionary)))
    except ToolkitError as e:
        raise _http_error("Gain synthesis", e)


@app.post("/gains/extract", response_model=ExtractResponse)
def extract(request: GainMatrixRequest) -> ExtractResponse:
    """Paths encoded by the significant entries of a gain matrix"""
    try:
        paths = extract_params(_gain_matrix(request), request.dictionary, request.threshold)
        return ExtractResponse(paths=paths)
    except ToolkitError as e:
        raise _http_error("Extraction", e)


if __name__ == "__main__":
    import uvicorn

    settings = get_settings()
    uvicorn.run(
        "app.main:app",
        host=settings.api_host,
        port=settings.api_port,
        reload=True,
    )
