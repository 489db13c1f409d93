from expertbounds.detection.disagreement import activate_experts, disagreement_report
from expertbounds.detection.meta_expert import meta_predict, train_meta_expert
from expertbounds.detection.responses import render_response_note, system_response
from expertbounds.detection.verdict import coverage_verdict

__all__ = [
    "activate_experts",
    "coverage_verdict",
    "disagreement_report",
    "meta_predict",
    "render_response_note",
    "system_response",
    "train_meta_expert",
]
