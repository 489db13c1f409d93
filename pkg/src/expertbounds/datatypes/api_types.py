from pydantic import BaseModel, Field

from expertbounds.datatypes.detection_types import CoverageKind, ResponseAction


class QueryRequest(BaseModel):
    """One query for a served run."""

    features: list[float] = Field(min_length=1)


class QueryResponse(BaseModel):
    """How the served system handled one query."""

    prediction: int
    confidence: float
    selected_experts: list[str]
    verdict: CoverageKind
    action: ResponseAction
    template_id: str
    note: str
    min_ood: float
    mean_pairwise_jsd: float | None
    meta_reliability: float | None
