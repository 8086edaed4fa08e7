"""
A FastAPI application exposing mechanism classification, merger rates and
streamed simulations.
"""

from http import HTTPStatus
import logging
import sys
from collections.abc import AsyncIterator, Iterable
import asyncio
import asyncstdlib as a
from fastapi import FastAPI, Request
from fastapi.responses import StreamingResponse, JSONResponse
from pydantic import BaseModel
import uvicorn
from src.genealogy_flow import build_flow, rate_lambda
from src.mechanism import Classification, classify
from src.models import (
    BuildFlowRequest,
    ClassifyRequest,
    RateRow,
    RatesRequest,
    SimulateRequest,
    TrajectoryRow,
    resolve_mechanism,
)

if sys.platform == "win32":
    asyncio.set_event_loop_policy(asyncio.WindowsSelectorEventLoopPolicy())

logger = logging.getLogger(__name__)

app = FastAPI()


async def rows(source: Iterable[BaseModel]) -> AsyncIterator[str]:
    """
    An async generator that yields the models of source as a JSON array.
    """

    async def items() -> AsyncIterator[BaseModel]:
        for item in source:
            yield item
            await asyncio.sleep(0)

    yield "[\n"
    async for [index, row] in a.enumerate(items()):
        if index > 0:
            yield ",\n"
        yield row.model_dump_json()
    yield "\n]"


@app.exception_handler(ValueError)
async def value_error(request: Request, error: ValueError) -> JSONResponse:
    """
    Domain and configuration errors become 422 responses.
    """

    logger.warning("Rejected %s: %s", request.url.path, error)
    return JSONResponse(
        status_code=HTTPStatus.UNPROCESSABLE_ENTITY,
        content={"detail": str(error), "type": type(error).__name__},
    )


@app.exception_handler(ArithmeticError)
async def arithmetic_error(request: Request, error: ArithmeticError) -> JSONResponse:
    """
    Numerical failures become 500 responses that name the failure.
    """

    logger.error("Failed %s: %s", request.url.path, error)
    return JSONResponse(
        status_code=HTTPStatus.INTERNAL_SERVER_ERROR,
        content={"detail": str(error), "type": type(error).__name__},
    )


@app.get("/health", status_code=HTTPStatus.NO_CONTENT)
def health_check() -> None:
    """
    A health check endpoint.
    """
    return None


@app.post("/classify")
def classify_mechanism(request: ClassifyRequest) -> Classification:
    """
    Classify a branching mechanism.
    """

    return classify(resolve_mechanism(request.mechanism))


@app.post("/rates")
def merger_rates(request: RatesRequest) -> list[RateRow]:
    """
    lambda_{n,k}(z, Psi) for k = 2..n at each z.
    """

    m = resolve_mechanism(request.mechanism)
    return [
        RateRow(n=request.n, k=k, z=z, rate=rate_lambda(request.n, k, z, m))
        for z in request.z
        for k in range(2, request.n + 1)
    ]


@app.post("/simulate-csbp")
async def simulate_csbp(request: SimulateRequest) -> StreamingResponse:
    """
    Simulate one CSBP path and stream its trajectory.
    """

    p = request.simulate(request.seed)
    trajectory = (
        TrajectoryRow(time=float(t), Z=float(z)) for t, z in zip(p.times, p.values)
    )
    return StreamingResponse(rows(trajectory), media_type=JSONResponse.media_type)


@app.post("/build-flow")
async def build_partition_flow(request: BuildFlowRequest) -> StreamingResponse:
    """
    Simulate one CSBP path, build its flow of partitions and stream the events.
    """

    p = request.simulate(request.seed)
    f = build_flow(p, request.n, request.seed)
    events = (f.event(i).record() for i in range(f.event_count))
    return StreamingResponse(rows(events), media_type=JSONResponse.media_type)


if __name__ == "__main__":
    uvicorn.run("src.fast_api:app", host="0.0.0.0", port=8000, reload=True)
