"""Read-only HTTP window on a finished run: per-query judgments and the monitoring view."""

from pathlib import Path

from dotenv import load_dotenv
from fastapi import FastAPI, HTTPException, Request, status
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from loguru import logger
from pydantic import ValidationError

load_dotenv()

from expertbounds.__version__ import __version__  # noqa: E402
from expertbounds.datatypes.api_types import QueryRequest, QueryResponse  # noqa: E402
from expertbounds.datatypes.metrics_types import ExpertMonitoring, GlobalMonitoring  # noqa: E402
from expertbounds.detection.responses import render_response_note  # noqa: E402
from expertbounds.errors import DimensionError, EmissionError, ExpertBoundsError, NumericDomainError  # noqa: E402
from expertbounds.harness.layout import missing_stages  # noqa: E402
from expertbounds.harness.pipeline import RunArtifact, load_run  # noqa: E402
from expertbounds.settings import settings  # noqa: E402


def _register_handlers(app: FastAPI) -> None:
    @app.exception_handler(RequestValidationError)
    async def validation_exception_handler(request: Request, exc: RequestValidationError) -> JSONResponse:
        """Handle request validation errors."""
        logger.error(f"Validation error: {exc}")
        return JSONResponse(
            status_code=status.HTTP_422_UNPROCESSABLE_CONTENT,
            content={
                "error": "Validation error",
                "detail": exc.errors(),
                "message": "Invalid request data. Please check your input.",
            },
        )

    @app.exception_handler(DimensionError)
    @app.exception_handler(NumericDomainError)
    async def query_exception_handler(request: Request, exc: ExpertBoundsError) -> JSONResponse:
        """Handle queries the system cannot take."""
        logger.error(f"Rejected query: {exc}")
        return JSONResponse(
            status_code=status.HTTP_422_UNPROCESSABLE_CONTENT,
            content={"error": "Invalid query", "message": str(exc)},
        )

    @app.exception_handler(ValidationError)
    async def pydantic_exception_handler(request: Request, exc: ValidationError) -> JSONResponse:
        """Handle Pydantic validation errors."""
        logger.error(f"Pydantic validation error: {exc}")
        return JSONResponse(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            content={
                "error": "Configuration error",
                "message": "Server configuration error. Please contact support.",
            },
        )

    @app.exception_handler(Exception)
    async def general_exception_handler(request: Request, exc: Exception) -> JSONResponse:
        """Handle all other uncaught exceptions."""
        logger.exception(f"Unexpected error: {exc}")
        return JSONResponse(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            content={
                "error": "Internal server error",
                "message": "An unexpected error occurred. Please try again later.",
            },
        )


def create_app(artifact: RunArtifact) -> FastAPI:
    """Build the service over a loaded run.

    Raises:
        EmissionError: If the run did not finish every stage.
    """
    system, log = artifact.system, artifact.log
    if artifact.manifest.incomplete or system is None or log is None:
        raise EmissionError(missing_stages(artifact.manifest) or ["evaluate"])

    app = FastAPI(title=settings.APP_NAME, version=__version__)
    _register_handlers(app)
    logger.info(f"Serving run {artifact.run_dir} ({len(log)} logged decisions)")

    @app.get("/health")
    async def health_check() -> dict[str, str]:
        """Health check endpoint."""
        return {"status": "healthy"}

    @app.post("/api/v1/query", response_model=QueryResponse)
    async def query(request: QueryRequest) -> QueryResponse:
        """
        Route one query through the served system.

        Args:
            request: Query features

        Returns:
            Prediction, coverage verdict, response action and the rendered note
        """
        outcome = system.process(request.features)
        return QueryResponse(
            prediction=outcome.prediction,
            confidence=outcome.confidence,
            selected_experts=[system.domain_ids[i] for i in outcome.decision.selected],
            verdict=outcome.verdict.kind,
            action=outcome.response.action,
            template_id=outcome.response.template_id,
            note=render_response_note(outcome.response, outcome.verdict, outcome.prediction),
            min_ood=float(outcome.ood.min()),
            mean_pairwise_jsd=outcome.report.mean_pairwise_jsd,
            meta_reliability=outcome.meta_reliability,
        )

    @app.get("/api/v1/metrics/global", response_model=GlobalMonitoring)
    async def get_global_metrics() -> GlobalMonitoring:
        """Monitoring aggregates over the run's decision log."""
        logger.info("Retrieving global metrics")
        return log.monitoring_summary()

    @app.get("/api/v1/metrics/expert/{domain_id}", response_model=ExpertMonitoring)
    async def get_expert_metrics(domain_id: str) -> ExpertMonitoring:
        """
        Monitoring aggregates for queries routed to one expert.

        Raises:
            HTTPException: If the run has no expert with this domain id
        """
        if domain_id not in system.domain_ids:
            raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail=f"Unknown expert '{domain_id}'")
        logger.info(f"Retrieving metrics for expert {domain_id}")
        return log.expert_monitoring(domain_id)

    return app


def create_app_from_dir(run_dir: Path) -> FastAPI:
    """Load a run directory and build the service over it."""
    return create_app(load_run(run_dir))
