"""End-to-end run: synth -> experts -> stats -> contrastive -> router -> calibration -> meta -> evaluate.

Every stage persists its output under the run directory and records itself in
``manifest.json``; a failing stage leaves the manifest marked incomplete.
"""

import time
from collections.abc import Iterator
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from loguru import logger
from pydantic import BaseModel

from expertbounds.calibration.adversarial import confidently_wrong_search
from expertbounds.calibration.finetune import boundary_aware_finetune, counterpart_boundary, feature_box_noise
from expertbounds.calibration.temperature import Calibrator, fit_adaptive_temperature, fit_temperature
from expertbounds.datatypes.benchmark_types import GAP_OWNER, Benchmark, CaseTag, PairRelation, Split, SplitName
from expertbounds.datatypes.config_types import CalibrationMode, ExperimentConfig
from expertbounds.datatypes.detection_types import MetaInputMode
from expertbounds.datatypes.metrics_types import DecisionRecord, MetricsReport, RunManifest, RunMetadata
from expertbounds.datatypes.model_types import ExpertModel, ExpertStats, MetaExpertModel, RouterParams, TrainReport
from expertbounds.detection.meta_expert import meta_accuracy, train_meta_expert
from expertbounds.errors import StageError
from expertbounds.experts.checkpoint import (
    expert_from_arrays,
    expert_to_arrays,
    mlp_from_arrays,
    mlp_to_arrays,
    read_checkpoint,
    router_from_arrays,
    router_to_arrays,
    write_checkpoint,
)
from expertbounds.experts.embedding import contrastive_embed_train, init_embedding, mean_pair_distance
from expertbounds.experts.stats import fit_expert_stats
from expertbounds.experts.training import domain_dataset, expert_logits, train_expert
from expertbounds.harness.config import config_hash, load_experiment_config, write_experiment_config
from expertbounds.harness.layout import (
    BENCHMARK_FILE,
    CHECKPOINT_DIR,
    CONFIG_FILE,
    DECISIONS_FILE,
    METRICS_FILE,
    STAGES,
    SYSTEM_FILE,
    read_manifest,
    write_manifest,
)
from expertbounds.harness.metrics import LABEL_SOURCE, compute_metrics
from expertbounds.harness.report import write_json_report
from expertbounds.inference.system import ExpertSystem, QueryOutcome
from expertbounds.memory.decision_log import DecisionLog, read_decision_log, write_decision_log
from expertbounds.mhc.residual import conservation_drift, mixed_residual_step
from expertbounds.mhc.sinkhorn import random_stream_mix
from expertbounds.numerics.rng import make_rng
from expertbounds.router.gating import init_router
from expertbounds.router.training import owner_targets, top1_routing_accuracy, train_router
from expertbounds.settings import settings
from expertbounds.synth.benchmark import build_benchmark
from expertbounds.synth.storage import benchmark_hash, read_benchmark, write_benchmark


class SystemSnapshot(BaseModel):
    """Fitted detection parameters that are not network weights."""

    domain_ids: list[str]
    theta_ood: float
    calibrators: list[Calibrator]
    meta_input_mode: MetaInputMode | None


@dataclass
class RunArtifact:
    """In-memory view of a run directory."""

    run_dir: Path
    config: ExperimentConfig
    manifest: RunManifest
    benchmark: Benchmark | None = None
    system: ExpertSystem | None = None
    log: DecisionLog | None = None
    report: MetricsReport | None = None
    train_reports: dict[str, TrainReport] = field(default_factory=dict)


def _conservation_check(expert: ExpertModel, features: np.ndarray) -> tuple[float, float]:
    """Worst mean drift and norm growth of the stream mix on the first hidden layer."""
    mix = expert.params.stream_mix
    assert mix is not None
    hidden = np.tanh(features @ expert.params.weights[0].T + expert.params.biases[0])
    streams = hidden.reshape(hidden.shape[0], mix.shape[0], -1)
    drifts = [conservation_drift(s, mixed_residual_step(s, mix)) for s in streams]
    return max(d[0] for d in drifts), max(d[1] for d in drifts)


def build_decision_record(
    query_id: int, split: Split, outcome: QueryOutcome, system: ExpertSystem, benchmark: Benchmark
) -> DecisionRecord:
    """Flatten one outcome plus its oracle annotations into a log row."""
    example = split.example(query_id)
    label = example.class_label
    owner_conf = owner_correct = None
    if example.owner_domain != GAP_OWNER:
        owner_probs = outcome.raw_outputs[system.expert_index(example.owner_domain)]
        owner_conf, owner_correct = float(owner_probs.max()), int(np.argmax(owner_probs)) == label
    counterpart = benchmark.counterpart(example.cluster_id, example.owner_domain)
    counterpart_conf = counterpart_correct = None
    if counterpart is not None:
        probs = outcome.raw_outputs[system.expert_index(counterpart)]
        counterpart_conf, counterpart_correct = float(probs.max()), int(np.argmax(probs)) == label
    decision = outcome.decision
    return DecisionRecord(
        query_id=query_id,
        case_tag=example.case_tag,
        owner_domain=example.owner_domain,
        cluster_id=example.cluster_id,
        class_label=label,
        prediction=outcome.prediction,
        correct=outcome.prediction == label,
        confidence=outcome.confidence,
        raw_confidence=outcome.raw_confidence,
        prediction_entropy=outcome.prediction_entropy,
        reference_entropy=outcome.reference_entropy,
        routed_expert=system.domain_ids[decision.selected[0]],
        selected=[system.domain_ids[i] for i in decision.selected],
        selected_weights=[float(w) for w in decision.selected_weights],
        routing_entropy=decision.routing_entropy,
        margin=decision.margin,
        min_ood=float(outcome.ood.min()),
        max_affinity=float(decision.raw_affinities.max()),
        mean_jsd=outcome.report.mean_pairwise_jsd,
        predictive_variance=outcome.report.predictive_variance,
        vote_disagreement=outcome.vote_disagreement,
        comparable_confidence=outcome.report.comparable_confidence,
        meta_reliability=outcome.meta_reliability,
        verdict=outcome.verdict.kind,
        action=outcome.response.action,
        owner_expert_confidence=owner_conf,
        owner_expert_correct=owner_correct,
        counterpart_expert=counterpart,
        counterpart_confidence=counterpart_conf,
        counterpart_correct=counterpart_correct,
    )


def run_metadata(config: ExperimentConfig, bench_hash: str, queries: int) -> RunMetadata:
    """Report metadata of a run."""
    return RunMetadata(
        config_hash=config_hash(config),
        benchmark_hash=bench_hash,
        seed=config.seed,
        queries=queries,
        coverage_target=config.detection.coverage_target,
        label_source=LABEL_SOURCE,
        switches={k: str(getattr(v, "value", v)).lower() for k, v in config.switches.model_dump().items()},
    )


class Pipeline:
    """One run of the full experiment in a run directory."""

    def __init__(self, config: ExperimentConfig, run_dir: Path) -> None:
        self.config = config
        self.run_dir = run_dir
        self.manifest = RunManifest(config_hash=config_hash(config))
        self.seed = config.seed
        self.benchmark: Benchmark
        self.experts: list[ExpertModel] = []
        self.reference_experts: list[ExpertModel] | None = None
        self.stats: list[ExpertStats] = []
        self.router: RouterParams
        self.calibrators: list[Calibrator] = []
        self.meta: MetaExpertModel | None = None
        self.system: ExpertSystem
        self.log = DecisionLog()
        self.report: MetricsReport
        self.train_reports: dict[str, TrainReport] = {}

    @property
    def domain_ids(self) -> tuple[str, ...]:
        return self.benchmark.domain_ids

    def _train(self, split: SplitName = SplitName.TRAIN) -> Split:
        return self.benchmark.splits[split]

    def _write_manifest(self) -> None:
        write_manifest(self.manifest, self.run_dir)

    @contextmanager
    def _stage(self, name: str) -> Iterator[None]:
        logger.info(f"Stage '{name}' started")
        started = time.perf_counter()
        try:
            yield
        except Exception as e:
            self.manifest.failed_stage = name
            self.manifest.error = str(e)
            self._write_manifest()
            logger.error(f"Stage '{name}' failed: {e}")
            raise StageError(name, e) from e
        elapsed = time.perf_counter() - started
        self.manifest.stages_completed.append(name)
        self.manifest.timings_s[name] = elapsed
        self._write_manifest()
        logger.info(f"Stage '{name}' finished in {elapsed:.2f}s")

    def _save_experts(self) -> None:
        for expert in self.experts:
            write_checkpoint(expert_to_arrays(expert), self.run_dir / CHECKPOINT_DIR / f"expert_{expert.domain_id}.ckpt")

    def stage_synth(self) -> None:
        """Generate and persist the benchmark plus the config snapshot."""
        write_experiment_config(self.config, self.run_dir / CONFIG_FILE)
        self.benchmark = build_benchmark(self.config.benchmark)
        write_benchmark(self.benchmark, self.run_dir / BENCHMARK_FILE)
        self.manifest.benchmark_hash = benchmark_hash(self.benchmark)

    def stage_experts(self) -> None:
        """Train one specialist per domain on the samples it owns."""
        cfg = self.config
        train, val = self._train(), self._train(SplitName.VAL)
        embed_params = init_embedding(cfg.benchmark.feature_dim, cfg.embedding, self.seed)
        for domain in self.domain_ids:
            mix = None
            if cfg.switches.mhc_on:
                mix = random_stream_mix(cfg.experts.streams, make_rng(self.seed, "mhc", domain))
            private_val = val.subset(val.mask(owner=domain, tag=CaseTag.IN_DOMAIN))
            expert, report = train_expert(
                domain,
                domain_dataset(train, domain),
                private_val,
                cfg.benchmark.classes,
                embed_params,
                cfg.experts,
                self.seed,
                stream_mix=mix,
            )
            if mix is not None:
                drift, growth = _conservation_check(expert, domain_dataset(train, domain).features)
                logger.info(f"Stream mix of expert {domain}: mean drift {drift:.2e}, max-norm growth {growth:.2e}")
            self.experts.append(expert)
            self.train_reports[domain] = report
        self._save_experts()

    def _fit_stats(self) -> None:
        train = self._train()
        self.stats = [fit_expert_stats(e, domain_dataset(train, e.domain_id)) for e in self.experts]

    def stage_stats(self) -> None:
        """Fit each expert's embedding-space statistics on its own training samples."""
        self._fit_stats()

    def stage_contrastive(self) -> None:
        """Train the shared embedding on contrastive pairs, then refit statistics."""
        if not self.config.switches.contrastive_on:
            logger.info("Contrastive embedding switched off")
            return
        pairs = list(self.benchmark.contrastive_pairs)
        before = mean_pair_distance(self.experts[0].embed_params, pairs, PairRelation.FALSE_FRIEND)
        embed_params, _ = contrastive_embed_train(self.experts[0].embed_params, pairs, self.config.embedding, self.seed)
        after = mean_pair_distance(embed_params, pairs, PairRelation.FALSE_FRIEND)
        logger.info(f"Mean false-friend embedding distance {before:.4f} -> {after:.4f}")
        self.experts = [replace(e, embed_params=embed_params) for e in self.experts]
        self._fit_stats()
        self._save_experts()

    def stage_router(self) -> None:
        """Train the gate on the mixed training split."""
        cfg = self.config
        router = init_router(self.experts[0].embedding_dim, len(self.experts), cfg.router, self.seed)
        if not cfg.switches.boundary_losses_on:
            router = replace(router, lambda_boundary=0.0, lambda_coverage=0.0)
        self.router, _ = train_router(router, self.experts, self.stats, self._train(), cfg.router, self.seed)
        write_checkpoint(router_to_arrays(self.router), self.run_dir / CHECKPOINT_DIR / "router.ckpt")

    def _fit_calibrator(self, expert: ExpertModel, mode: CalibrationMode, val: Split) -> Calibrator:
        logits, labels = expert_logits(expert, val.features), val.class_labels
        if mode == CalibrationMode.ADAPTIVE:
            return Calibrator(mode=mode, adaptive=fit_adaptive_temperature(logits, labels))
        return Calibrator(mode=mode, temperature=fit_temperature(logits, labels))

    def stage_calibration(self) -> None:
        """Fit temperatures and, in boundary-aware mode, fine-tune experts toward flat boundary outputs."""
        cfg = self.config
        mode = cfg.switches.calibration_mode
        if mode == CalibrationMode.OFF:
            self.calibrators = [Calibrator() for _ in self.experts]
            logger.info("Calibration switched off")
            return
        train, val = self._train(), self._train(SplitName.VAL)
        if mode != CalibrationMode.BOUNDARY_AWARE:
            self.calibrators = [self._fit_calibrator(e, mode, domain_dataset(val, e.domain_id)) for e in self.experts]
            return

        noise = None
        if cfg.calibration.noise_samples:
            noise = feature_box_noise(
                train.features, cfg.calibration.noise_samples, make_rng(self.seed, "calibration", "noise")
            )
        self.reference_experts = list(self.experts)
        tuned, calibrators = [], []
        for expert in self.experts:
            own_val = domain_dataset(val, expert.domain_id)
            early = None
            if not cfg.calibration.finetune_before_temperature:
                early = self._fit_calibrator(expert, CalibrationMode.TEMPERATURE, own_val)
            boundary = counterpart_boundary(train, self.benchmark.clusters, expert.domain_id)
            if len(boundary) == 0:
                logger.warning(f"Expert {expert.domain_id} shares no clusters; skipping boundary-aware finetune")
                finetuned = expert
            else:
                adversarial = None
                if cfg.switches.adversarial_boundary_on:
                    adversarial = confidently_wrong_search(
                        expert,
                        boundary,
                        self.benchmark.domains,
                        self.benchmark.gap_fn,
                        (train.features.min(axis=0), train.features.max(axis=0)),
                        cfg.calibration,
                        make_rng(self.seed, "calibration", "adversarial", expert.domain_id),
                    )
                finetuned, _ = boundary_aware_finetune(
                    expert,
                    domain_dataset(train, expert.domain_id),
                    boundary,
                    cfg.calibration,
                    self.seed,
                    noise,
                    adversarial,
                )
            calibrator = early or self._fit_calibrator(finetuned, CalibrationMode.TEMPERATURE, own_val)
            tuned.append(finetuned)
            calibrators.append(calibrator.model_copy(update={"mode": CalibrationMode.BOUNDARY_AWARE}))
        self.experts, self.calibrators = tuned, calibrators
        self._save_experts()

    def _system(self, theta_ood: float, meta: MetaExpertModel | None) -> ExpertSystem:
        cfg = self.config
        return ExpertSystem(
            domain_ids=self.domain_ids,
            experts=tuple(self.experts),
            stats=tuple(self.stats),
            router=self.router,
            calibrators=tuple(self.calibrators),
            meta=meta,
            theta_ood=theta_ood,
            theta_jsd=cfg.detection.theta_jsd,
            gamma=cfg.detection.gamma,
            policy=cfg.policy,
            switches=cfg.switches,
            reference_experts=tuple(self.reference_experts) if self.reference_experts is not None else None,
        )

    def _theta_ood(self) -> float:
        detection = self.config.detection
        if detection.theta_ood is not None:
            return detection.theta_ood
        val = self._train(SplitName.VAL)
        in_domain = val.subset(val.mask(tag=CaseTag.IN_DOMAIN))
        signals = self._system(1.0, None).signals_rows(in_domain.features)
        theta = float(np.quantile(signals.distances.min(axis=1), detection.theta_ood_quantile))
        logger.info(f"theta_ood set to the {detection.theta_ood_quantile} quantile of in-domain distance: {theta:.4f}")
        return max(theta, float(np.finfo(np.float64).tiny))

    def stage_meta(self) -> None:
        """Train the meta-expert on system signals of the training split."""
        cfg = self.config
        if not cfg.switches.meta_expert_on:
            logger.info("Meta-expert switched off")
            return
        train = self._train()
        mode = cfg.meta.input_mode
        inputs = self._system(1.0, None).signals_rows(train.features).meta_inputs(mode)
        self.meta = train_meta_expert(inputs, train.case_tags, mode, cfg.meta, self.seed)
        val = self._train(SplitName.VAL)
        val_inputs = self._system(1.0, None).signals_rows(val.features).meta_inputs(mode)
        logger.info(f"Meta-expert held-out accuracy: {meta_accuracy(self.meta, val_inputs, val.case_tags):.3f}")
        write_checkpoint(mlp_to_arrays("meta", self.meta.params), self.run_dir / CHECKPOINT_DIR / "meta.ckpt")

    def stage_evaluate(self) -> None:
        """Answer every test query, persist the decision log and compute the report."""
        theta_ood = self._theta_ood()
        self.system = self._system(theta_ood, self.meta)
        snapshot = SystemSnapshot(
            domain_ids=list(self.domain_ids),
            theta_ood=theta_ood,
            calibrators=list(self.calibrators),
            meta_input_mode=self.meta.input_mode if self.meta is not None else None,
        )
        (self.run_dir / SYSTEM_FILE).write_text(snapshot.model_dump_json(indent=2) + "\n", encoding="utf-8")

        test = self._train(SplitName.TEST)
        with ThreadPoolExecutor(max_workers=settings.EVAL_WORKERS) as pool:
            outcomes = list(pool.map(self.system.process, test.features))
        for query_id, outcome in enumerate(outcomes):
            self.log.add(build_decision_record(query_id, test, outcome, self.system, self.benchmark))
        write_decision_log(self.log, self.run_dir / DECISIONS_FILE)

        routing_acc = top1_routing_accuracy(
            self.router,
            self.system.signals_rows(test.features).embeddings,
            owner_targets(test, self.domain_ids),
        )
        logger.info(f"Top-1 routing accuracy on in-domain test queries: {routing_acc:.3f}")
        metadata = run_metadata(self.config, self.manifest.benchmark_hash or "", len(self.log))
        self.report = compute_metrics(
            self.log.records(), self.config.benchmark.false_friend_pairs, metadata, self.config.calibration.ece_bins
        )
        write_json_report(self.report, self.run_dir / METRICS_FILE)

    def execute(self) -> RunArtifact:
        """Run every stage in order."""
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self._write_manifest()
        for name in STAGES:
            with self._stage(name):
                getattr(self, f"stage_{name}")()
        self.manifest.incomplete = False
        self._write_manifest()
        return RunArtifact(
            run_dir=self.run_dir,
            config=self.config,
            manifest=self.manifest,
            benchmark=self.benchmark,
            system=self.system,
            log=self.log,
            report=self.report,
            train_reports=self.train_reports,
        )


def run_pipeline(config: ExperimentConfig, run_dir: Path) -> RunArtifact:
    """Run the full experiment into ``run_dir``.

    Raises:
        StageError: Naming the failed stage and its cause; the manifest stays marked incomplete.
    """
    logger.info(f"Running pipeline into {run_dir} (seed {config.seed})")
    return Pipeline(config, run_dir).execute()


def load_system(run_dir: Path, config: ExperimentConfig) -> ExpertSystem:
    """Rebuild the evaluated system from a finished run's checkpoints."""
    snapshot = SystemSnapshot.model_validate_json((run_dir / SYSTEM_FILE).read_text(encoding="utf-8"))
    checkpoints = run_dir / CHECKPOINT_DIR
    experts = tuple(
        expert_from_arrays(d, read_checkpoint(checkpoints / f"expert_{d}.ckpt")) for d in snapshot.domain_ids
    )
    train = read_benchmark(run_dir / BENCHMARK_FILE).splits[SplitName.TRAIN]
    stats = tuple(fit_expert_stats(e, domain_dataset(train, e.domain_id)) for e in experts)
    meta = None
    if snapshot.meta_input_mode is not None:
        meta = MetaExpertModel(
            params=mlp_from_arrays("meta", read_checkpoint(checkpoints / "meta.ckpt")),
            input_mode=snapshot.meta_input_mode,
        )
    return ExpertSystem(
        domain_ids=tuple(snapshot.domain_ids),
        experts=experts,
        stats=stats,
        router=router_from_arrays(read_checkpoint(checkpoints / "router.ckpt")),
        calibrators=tuple(snapshot.calibrators),
        meta=meta,
        theta_ood=snapshot.theta_ood,
        theta_jsd=config.detection.theta_jsd,
        gamma=config.detection.gamma,
        policy=config.policy,
        switches=config.switches,
    )


def load_run(run_dir: Path) -> RunArtifact:
    """Load a finished run: config, manifest, system and decision log."""
    config = load_experiment_config(run_dir / CONFIG_FILE)
    manifest = read_manifest(run_dir)
    artifact = RunArtifact(run_dir=run_dir, config=config, manifest=manifest)
    if manifest.incomplete:
        return artifact
    artifact.system = load_system(run_dir, config)
    artifact.log = read_decision_log(run_dir / DECISIONS_FILE)
    return artifact


def reevaluate_run(run_dir: Path) -> MetricsReport:
    """Recompute ``metrics.json`` from the persisted decision log alone."""
    config = load_experiment_config(run_dir / CONFIG_FILE)
    manifest = read_manifest(run_dir)
    log = read_decision_log(run_dir / DECISIONS_FILE)
    metadata = run_metadata(config, manifest.benchmark_hash or "", len(log))
    report = compute_metrics(log.records(), config.benchmark.false_friend_pairs, metadata, config.calibration.ece_bins)
    write_json_report(report, run_dir / METRICS_FILE)
    return report
