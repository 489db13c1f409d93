"""System responses to verdicts and the user-facing notes that accompany them."""

from collections.abc import Mapping
from functools import lru_cache

from jinja2 import Environment, FileSystemLoader, Template

from expertbounds.datatypes.detection_types import (
    CoverageKind,
    CoverageVerdict,
    ResponseAction,
    ResponseDecision,
    ResponsePolicy,
)
from expertbounds.errors import ConfigError
from expertbounds.paths import RESPONSE_TEMPLATES_PATH

TEMPLATE_IDS = {
    ResponseAction.ANSWER: "answer",
    ResponseAction.CAVEAT: "caveat_uncertainty",
    ResponseAction.ABSTAIN: "abstain_uncertainty",
    ResponseAction.FALLBACK: "fallback_generalist",
    ResponseAction.REQUEST_CONTEXT: "request_context",
}


def system_response(
    kind: CoverageKind, policy: ResponsePolicy | Mapping[CoverageKind, ResponseAction]
) -> ResponseDecision:
    """Action the policy assigns to ``kind`` and its note template id.

    Raises:
        ConfigError: If the policy does not map ``kind``.
    """
    table = policy.as_mapping() if isinstance(policy, ResponsePolicy) else policy
    if kind not in table:
        raise ConfigError(f"response policy has no action for verdict '{kind}'")
    action = ResponseAction(table[kind])
    return ResponseDecision(action=action, template_id=TEMPLATE_IDS[action])


@lru_cache(maxsize=len(TEMPLATE_IDS))
def _template(template_id: str) -> Template:
    environment = Environment(loader=FileSystemLoader(searchpath=str(RESPONSE_TEMPLATES_PATH)), autoescape=True)
    return environment.get_template(f"{template_id}.j2")


def render_response_note(decision: ResponseDecision, verdict: CoverageVerdict, prediction: int | None = None) -> str:
    """Fill the decision's note template from the verdict evidence."""
    note = _template(decision.template_id).render(
        kind=verdict.kind.value, evidence=verdict.evidence.model_dump(), prediction=prediction
    )
    return " ".join(line.strip() for line in note.split("\n") if line.strip())
