"""Numeric invariant suite run by ``expertbounds selftest``.

Gradient checks cover every network the pipeline trains, at the shapes a config implies;
the distribution and Sinkhorn checks run on seeded random inputs.
"""

import math
import time
from collections.abc import Callable

import numpy as np
from loguru import logger
from pydantic import BaseModel

from expertbounds.calibration.finetune import finetune_objective
from expertbounds.datatypes.benchmark_types import CaseTag, ContrastivePair, LabeledExample, PairRelation
from expertbounds.datatypes.config_types import ExperimentConfig
from expertbounds.detection.meta_expert import meta_input_rows
from expertbounds.experts.embedding import contrastive_grad
from expertbounds.mhc.residual import conservation_drift, mixed_residual_step
from expertbounds.mhc.sinkhorn import SinkhornConfig, is_doubly_stochastic, random_stream_mix, sinkhorn_project
from expertbounds.numerics.core import (
    entropy_rows,
    jensen_shannon,
    kl_divergence,
    softmax_cross_entropy,
    softmax_rows,
)
from expertbounds.numerics.mlp import GradCheckReport, MlpParams, grad_check, init_mlp, mlp_backward, mlp_forward
from expertbounds.numerics.rng import make_rng
from expertbounds.router.gating import init_router, kernel_affinities, routing_margins
from expertbounds.router.training import router_objective

GRAD_TOLERANCE = 1e-4
GRAD_EPSILON = 1e-5
SIMPLEX_TOL = 1e-12
SINKHORN_TOL = 1e-9
MAX_SINKHORN_SIZE = 16
BATCH = 8


class CheckResult(BaseModel):
    """Outcome of one invariant check."""

    name: str
    passed: bool
    detail: str
    seconds: float


def _ce_objective(features: np.ndarray, labels: np.ndarray) -> Callable[[MlpParams], tuple[float, MlpParams]]:
    def loss_fn(params: MlpParams) -> tuple[float, MlpParams]:
        logits, cache = mlp_forward(params, features)
        loss, d_logits = softmax_cross_entropy(logits, labels)
        return loss, mlp_backward(params, cache, d_logits)

    return loss_fn


def _pairs(features: np.ndarray, rng: np.random.Generator) -> list[ContrastivePair]:
    def example(i: int) -> LabeledExample:
        return LabeledExample(
            features=features[i], class_label=0, owner_domain="A", cluster_id=0, case_tag=CaseTag.IN_DOMAIN
        )

    relations = tuple(PairRelation)
    half = features.shape[0] // 2
    return [
        ContrastivePair(
            anchor=example(i),
            other=example(half + i),
            relation=relations[int(rng.integers(len(relations)))],
            anchor_index=i,
            other_index=half + i,
        )
        for i in range(half)
    ]


def gradient_checks(config: ExperimentConfig, seed: int = 0) -> dict[str, GradCheckReport]:
    """Central-difference checks of every network shape the pipeline trains."""
    rng = make_rng(seed, "selftest", "gradients")
    features = rng.normal(size=(BATCH, config.benchmark.feature_dim))
    classes = config.benchmark.classes
    labels = rng.integers(classes, size=BATCH)
    experts = config.benchmark.num_domains
    sizes = (config.benchmark.feature_dim, config.experts.hidden, classes)

    classifier = init_mlp(sizes, rng)
    mix = random_stream_mix(config.experts.streams, rng)
    mixed_classifier = init_mlp(sizes, rng, stream_mix=mix)
    embedding = init_mlp((config.benchmark.feature_dim, config.embedding.hidden, config.embedding.dim), rng)
    router = init_router(config.embedding.dim, experts, config.router, seed)

    embeddings = rng.normal(size=(BATCH, config.embedding.dim))
    distances = rng.uniform(0.1, 3.0, size=(BATCH, experts))
    targets = np.where(rng.uniform(size=BATCH) < 0.5, rng.integers(experts, size=BATCH), -1)
    affinities = kernel_affinities(distances, router.kernel_sigma)
    margins = routing_margins(distances)

    outputs = softmax_rows(rng.normal(size=(BATCH * experts, classes))).reshape(BATCH, experts, classes)
    meta_inputs = meta_input_rows(
        config.meta.input_mode, embeddings, outputs, affinities, rng.uniform(0.0, 0.5, size=BATCH), margins
    )
    meta = init_mlp((meta_inputs.shape[1], config.meta.hidden, 3), rng)
    pairs = _pairs(features, rng)
    flatten_inputs = rng.normal(size=(BATCH, config.benchmark.feature_dim))

    def router_loss(gate_net: MlpParams) -> tuple[float, MlpParams]:
        terms, grads = router_objective(router, gate_net, embeddings, targets, affinities, margins)
        return terms.total, grads

    objectives: dict[str, tuple[MlpParams, Callable[[MlpParams], tuple[float, MlpParams]]]] = {
        "expert_classifier": (classifier, _ce_objective(features, labels)),
        "expert_classifier_stream_mix": (mixed_classifier, _ce_objective(features, labels)),
        "boundary_finetune": (
            classifier,
            lambda p: finetune_objective(p, features, labels, flatten_inputs, config.calibration.lambda_flat),
        ),
        "contrastive_embedding": (embedding, lambda p: contrastive_grad(p, pairs, config.embedding.margin)),
        "router_gate": (router.gate_net, router_loss),
        "meta_expert": (meta, _ce_objective(meta_inputs, rng.integers(3, size=BATCH))),
    }
    return {
        name: grad_check(params, loss_fn, GRAD_TOLERANCE, GRAD_EPSILON, seed=seed)
        for name, (params, loss_fn) in objectives.items()
    }


def distribution_violations(samples: int = 10_000, seed: int = 0) -> list[str]:
    """Check softmax, entropy, KL and Jensen-Shannon invariants on seeded random inputs."""
    rng = make_rng(seed, "selftest", "distributions")
    classes = rng.integers(2, 9, size=samples)
    problems: list[str] = []
    for i, c in enumerate(classes):
        z = rng.normal(scale=3.0, size=(1, int(c)))
        p = softmax_rows(z)[0]
        q = softmax_rows(rng.normal(scale=3.0, size=(1, int(c))))[0]
        shifted = softmax_rows(z + rng.normal(scale=10.0))[0]
        h = float(entropy_rows(p[np.newaxis, :])[0])
        checks = {
            "softmax sums to one": abs(p.sum() - 1.0) <= SIMPLEX_TOL,
            "softmax is shift invariant": np.allclose(p, shifted, rtol=0.0, atol=1e-12),
            "entropy within [0, ln C]": -SIMPLEX_TOL <= h <= math.log(int(c)) + SIMPLEX_TOL,
            "KL(p, p) is zero": abs(kl_divergence(p, p)) <= SIMPLEX_TOL,
            "KL is nonnegative": kl_divergence(p, q) >= -SIMPLEX_TOL,
            "JSD is symmetric": abs(jensen_shannon(p, q) - jensen_shannon(q, p)) <= SIMPLEX_TOL,
            "JSD is bounded by ln 2": jensen_shannon(p, q) <= math.log(2.0) + SIMPLEX_TOL,
        }
        problems.extend(f"sample {i}: {name}" for name, ok in checks.items() if not ok)
    return problems


def sinkhorn_violations(seed: int = 0) -> list[str]:
    """Projection, idempotence, product closure and conservation for sizes 1 to 16."""
    config = SinkhornConfig(max_iters=1000, tolerance=SINKHORN_TOL)
    problems: list[str] = []
    for n in range(1, MAX_SINKHORN_SIZE + 1):
        rng = make_rng(seed, "selftest", "sinkhorn", str(n))
        first = sinkhorn_project(rng.uniform(0.01, 10.0, size=(n, n)), config)
        second = random_stream_mix(n, rng, config)
        if not is_doubly_stochastic(first, SINKHORN_TOL):
            problems.append(f"{n}x{n}: projection is not doubly stochastic")
        if not np.allclose(sinkhorn_project(first, config), first, rtol=0.0, atol=SINKHORN_TOL * 10):
            problems.append(f"{n}x{n}: projection is not idempotent")
        if not is_doubly_stochastic(first @ second, SINKHORN_TOL * 10):
            problems.append(f"{n}x{n}: product leaves the doubly stochastic set")
        features = rng.normal(size=(n, 5))
        drift, growth = conservation_drift(features, mixed_residual_step(features, first))
        if drift > SINKHORN_TOL or growth > SINKHORN_TOL:
            problems.append(f"{n}x{n}: mixing drifts means by {drift:.2e} or grows norms by {growth:.2e}")
    return problems


def _timed(name: str, check: Callable[[], tuple[bool, str]]) -> CheckResult:
    started = time.perf_counter()
    passed, detail = check()
    result = CheckResult(name=name, passed=passed, detail=detail, seconds=time.perf_counter() - started)
    log = logger.info if passed else logger.error
    log(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail} ({result.seconds:.2f}s)")
    return result


def run_selftest(config: ExperimentConfig | None = None, samples: int = 10_000, seed: int = 0) -> list[CheckResult]:
    """Run every invariant check and return one result per check."""
    cfg = config or ExperimentConfig()

    def gradients() -> tuple[bool, str]:
        reports = gradient_checks(cfg, seed)
        failed = [f"{n} ({r.max_relative_error:.2e})" for n, r in reports.items() if not r.passed]
        worst = max(r.max_relative_error for r in reports.values())
        return not failed, f"failed: {', '.join(failed)}" if failed else f"{len(reports)} networks, worst {worst:.2e}"

    def distributions() -> tuple[bool, str]:
        problems = distribution_violations(samples, seed)
        return not problems, f"{len(problems)} violations, first: {problems[0]}" if problems else f"{samples} inputs"

    def sinkhorn() -> tuple[bool, str]:
        problems = sinkhorn_violations(seed)
        return not problems, "; ".join(problems[:3]) if problems else f"sizes 1..{MAX_SINKHORN_SIZE}"

    return [
        _timed("gradients", gradients),
        _timed("distributions", distributions),
        _timed("sinkhorn", sinkhorn),
    ]
