"""Config-driven orchestration of the full workflow: optional distillation
pretraining, source probing, per-target active-adaptation rounds over a
method grid, multi-seed aggregation, and result emission.

Output files are byte-reproducible: orderings are fixed, floats are written
with repr, and nothing time- or host-dependent is recorded.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng as rng_mod
from .adapt import (
    SOURCE_DOMAIN_INDEX,
    DannModel,
    ProbeModel,
    linear_probe,
    make_domain_head,
    run_adaptation,
    train_domain_head,
)
from .config import ExperimentConfig, GridCell
from .data import DomainPool, gen_family, load_csv, split
from .dino import pretrain_ssl
from .labelers import OracleLabeler
from .metrics import SeedAggregate, aggregate, auprc, delta_table
from .nn import _softmax
from .samplers import AcquisitionInput, QuerySet, select_aada, select_badge, select_clue, select_uniform

BASELINE_COLUMN = "baseline"


class WorkflowError(RuntimeError):
    """A grid cell failed; carries the (seed, domain, method) coordinates."""

    def __init__(self, seed, domain: str, method: str, cause: BaseException):
        super().__init__(f"seed {seed}, domain {domain!r}, method {method!r}: {cause}")
        self.seed = seed
        self.domain = domain
        self.method = method


@dataclass
class AdaRoundState:
    """Mutable per-(seed, target, method) loop state. Labels exist only for
    queried ids and the labeled-target set grows monotonically."""

    domain: str
    model: ProbeModel
    round_index: int = 0
    queried_ids: list[str] = field(default_factory=list)
    labels: dict[str, int] = field(default_factory=dict)
    auprc_history: list[float] = field(default_factory=list)
    dann_model: DannModel | None = None

    def committed(self) -> tuple[list[str], list[int]]:
        ids = list(self.queried_ids)
        return ids, [self.labels[i] for i in ids]


@dataclass
class ExperimentReport:
    source: str
    targets: list[str]
    methods: list[str]
    seeds: list[int]
    baseline: dict[str, list[float]]
    cells: dict[str, dict[str, list[float]]]
    curves: dict[str, dict[str, list[list[float]]]]

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "targets": self.targets,
            "methods": self.methods,
            "seeds": self.seeds,
            "baseline": self.baseline,
            "cells": self.cells,
            "curves": self.curves,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentReport":
        return cls(**doc)

    def baseline_aggregates(self) -> dict[str, SeedAggregate]:
        return {t: _agg(self.baseline[t]) for t in self.targets}

    def method_aggregates(self, method: str) -> dict[str, SeedAggregate]:
        return {t: _agg(self.cells[method][t]) for t in self.targets}


def _agg(values: list[float]) -> SeedAggregate:
    if len(values) == 1:
        return SeedAggregate(values[0], 0.0, 1)
    return aggregate(values)


def load_pools(cfg: ExperimentConfig) -> dict[str, DomainPool]:
    if cfg.dataset_dir is None:
        return gen_family(cfg.family)
    pools = {}
    for spec in cfg.family.domains:
        path = os.path.join(cfg.dataset_dir, f"{spec.name}.csv")
        pools[spec.name] = load_csv(path, name=spec.name)
    return pools


def prepare_splits(cfg: ExperimentConfig, pools: dict[str, DomainPool]
                   ) -> dict[str, tuple[DomainPool, DomainPool]]:
    """Fixed per-target (query, eval) split, shared by every seed and method
    so evaluation ids can never enter a query set."""
    fractions = (1.0 - cfg.eval_fraction, cfg.eval_fraction)
    return {name: split(pools[name], fractions, seed=cfg.family.seed)
            for name in cfg.family.target_names}


def build_backbone(cfg: ExperimentConfig, pooled: np.ndarray, seed: int):
    """Workflow steps one and two: optional warm start on a generic corpus,
    then optional distillation on the pooled in-domain data."""
    init_cfg = replace(cfg.ssl, stage1_epochs=0, stage2_epochs=0)
    backbone, diags, _ = pretrain_ssl(pooled, init_cfg, seed)
    if cfg.ssl_pretrain:
        rng = rng_mod.stream(seed, "pretrain-corpus")
        corpus = rng.normal(0.0, 1.5, size=(min(4000, pooled.shape[0]), pooled.shape[1]))
        backbone, diags, _ = pretrain_ssl(corpus, cfg.ssl, seed, init_backbone=backbone)
    if cfg.ssl_retrain:
        backbone, diags, _ = pretrain_ssl(pooled, cfg.ssl, seed, init_backbone=backbone)
    return backbone, diags


def acquisition_snapshot(state: AdaRoundState, pool: DomainPool,
                         src_pool: DomainPool, cfg: ExperimentConfig,
                         cell: GridCell, seed: int) -> AcquisitionInput:
    """Model view of the still-unqueried target pool. Domain probabilities
    come from the aligned model's domain head when one exists, otherwise from
    a freshly trained source-vs-target discriminator."""
    queried = set(state.queried_ids)
    keep = [i for i, sid in enumerate(pool.ids) if sid not in queried]
    sub = pool.subset(keep)
    feats = state.model.features_np(sub.x)
    probs = state.model.class_probs(sub.x)
    domain_prob = None
    if cell.strategy == "aada":
        if state.dann_model is not None:
            domain_prob = state.dann_model.domain_prob_source(sub.x)
        else:
            head = train_domain_head(state.model, src_pool.x, sub.x, cfg.adapt,
                                     (seed, state.domain, cell.name, state.round_index))
            logits = head.forward_np(feats)
            domain_prob = _softmax(logits)[:, SOURCE_DOMAIN_INDEX]
    return AcquisitionInput(ids=sub.ids, features=feats, class_probs=probs,
                            domain_prob_source=domain_prob)


def select_queries(inputs: AcquisitionInput, cell: GridCell, budget: int,
                   seed: int, domain: str, round_index: int) -> QuerySet:
    rng = rng_mod.stream(seed, "select", domain, cell.name, round_index)
    budget = min(budget, len(inputs))
    if budget == 0:
        return QuerySet((), cell.strategy, round_index)
    if cell.strategy == "uniform":
        return select_uniform(inputs, budget, rng, round_index)
    if cell.strategy == "aada":
        return select_aada(inputs, budget, round_index=round_index)
    if cell.strategy == "clue":
        return select_clue(inputs, budget, seed=rng_mod.seed_words(seed, "clue", domain,
                                                                   cell.name, round_index)[0],
                           round_index=round_index)
    if cell.strategy == "badge":
        return select_badge(inputs, budget, rng, round_index)
    raise ValueError(f"unknown strategy {cell.strategy!r}")


def run_ada_round(state: AdaRoundState, cell: GridCell, cfg: ExperimentConfig,
                  src_pool: DomainPool, query_pool: DomainPool, eval_pool: DomainPool,
                  labeler, seed: int) -> AdaRoundState:
    """One active round: select, label (may block on a human), adapt, evaluate.

    A labeler failure propagates before any state is committed, so an aborted
    round leaves the state exactly as it was.
    """
    inputs = acquisition_snapshot(state, query_pool, src_pool, cfg, cell, seed)
    queries = select_queries(inputs, cell, cfg.budget, seed, state.domain, state.round_index)

    eval_ids = set(eval_pool.ids)
    leaked = [i for i in queries.ids if i in eval_ids]
    if leaked:
        raise AssertionError(f"evaluation ids leaked into a query set: {leaked}")

    records = []
    for sid in queries.ids:
        idx = query_pool.index_of(sid)
        records.append({
            "sample_id": sid,
            "domain": state.domain,
            "round": state.round_index,
            "features": [float(v) for v in query_pool.x[idx]],
        })
    new_labels = labeler.request_labels(state.domain, state.round_index, records) if records else {}

    # labels are committed only after the labeler returned them all
    missing = [sid for sid in queries.ids if sid not in new_labels]
    if missing:
        raise RuntimeError(f"labeler returned no label for {missing}")
    state.queried_ids.extend(queries.ids)
    state.labels.update({sid: int(new_labels[sid]) for sid in queries.ids})

    labeled_ids, labeled_y = state.committed()
    labeled_idx = [query_pool.index_of(sid) for sid in labeled_ids]
    labeled_x = query_pool.x[labeled_idx] if labeled_idx else np.zeros((0, query_pool.x.shape[1]))
    labeled_y = np.asarray(labeled_y, dtype=np.int64)

    queried = set(state.queried_ids)
    unl_idx = [i for i, sid in enumerate(query_pool.ids) if sid not in queried]
    unlabeled_x = query_pool.x[unl_idx]

    adapt_cfg = replace(cfg.adapt, method=cell.adaptation)
    skip = adapt_cfg.method == "finetune" and labeled_x.shape[0] == 0
    if not skip:
        if adapt_cfg.method == "dann" and state.dann_model is None:
            state.dann_model = DannModel(
                state.model, make_domain_head(state.model.backbone, adapt_cfg,
                                              (seed, state.domain, cell.name)))
        run_adaptation(state.model, adapt_cfg, src_pool.x, src_pool.y,
                       labeled_x, labeled_y, unlabeled_x,
                       seed=(seed, state.domain, cell.name, state.round_index),
                       dann_model=state.dann_model)

    state.auprc_history.append(auprc(state.model.scores(eval_pool.x), eval_pool.y))
    state.round_index += 1
    return state


def _run_seed(cfg: ExperimentConfig, seed: int, pools, src_pool, splits,
              pooled: np.ndarray, labeler, progress):
    """Everything one seed contributes: baseline values plus one grid pass.
    Self-contained (own models, own key-derived streams) so seeds can run
    sequentially or on a thread pool with identical results."""
    targets = cfg.family.target_names
    baseline = {}
    cells = {cell.name: {} for cell in cfg.grid}
    curves = {cell.name: {} for cell in cfg.grid}

    if progress:
        progress(f"seed {seed}: training backbone")
    backbone, _ = build_backbone(cfg, pooled, seed)
    probe = linear_probe(backbone, src_pool.x, src_pool.y, cfg.probe, seed)
    for t in targets:
        _, eval_pool = splits[t]
        baseline[t] = auprc(probe.scores(eval_pool.x), eval_pool.y)

    for t in targets:
        query_pool, eval_pool = splits[t]
        aligned = None
        aligned_head = None
        if cfg.uda_dann:
            aligned = probe.clone()
            uda_cfg = replace(cfg.adapt, method="dann", steps=cfg.uda_steps)
            dann = DannModel(aligned, make_domain_head(aligned.backbone, uda_cfg,
                                                       (seed, t, "uda")))
            run_adaptation(aligned, uda_cfg, src_pool.x, src_pool.y,
                           np.zeros((0, src_pool.x.shape[1])),
                           np.zeros(0, dtype=np.int64),
                           query_pool.x, seed=(seed, t, "uda"), dann_model=dann)
            aligned_head = dann.domain_head

        for cell in cfg.grid:
            if progress:
                progress(f"seed {seed}: {cell.name} on {t}")
            start = (aligned if aligned is not None else probe).clone()
            state = AdaRoundState(domain=t, model=start)
            if aligned_head is not None:
                state.dann_model = DannModel(start, aligned_head.clone())
            try:
                for _ in range(cfg.rounds):
                    state = run_ada_round(state, cell, cfg, src_pool, query_pool,
                                          eval_pool, labeler, seed)
            except Exception as exc:
                raise WorkflowError(seed, t, cell.name, exc) from exc
            cells[cell.name][t] = state.auprc_history[-1]
            curves[cell.name][t] = list(state.auprc_history)
    return baseline, cells, curves


def run_workflow(cfg: ExperimentConfig, labeler=None, progress=None) -> ExperimentReport:
    pools = load_pools(cfg)
    src_pool = pools[cfg.family.source_name]
    splits = prepare_splits(cfg, pools)
    pooled = np.concatenate([pools[spec.name].x for spec in cfg.family.domains])
    service_mode = labeler is not None
    if labeler is None:
        if cfg.labeler != "oracle":
            raise ValueError("service mode needs an explicit labeler")
        labeler = OracleLabeler(pools)

    def one_seed(seed):
        return _run_seed(cfg, seed, pools, src_pool, splits, pooled, labeler, progress)

    # a blocking labeler owns one round at a time, so it forces sequential seeds
    if cfg.workers > 1 and not service_mode:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            per_seed = list(pool.map(one_seed, cfg.seeds))
    else:
        per_seed = [one_seed(seed) for seed in cfg.seeds]

    targets = cfg.family.target_names
    methods = [cell.name for cell in cfg.grid]
    baseline = {t: [b[t] for b, _, _ in per_seed] for t in targets}
    cells = {m: {t: [c[m][t] for _, c, _ in per_seed] for t in targets} for m in methods}
    curves = {m: {t: [k[m][t] for _, _, k in per_seed] for t in targets} for m in methods}
    return ExperimentReport(source=cfg.family.source_name, targets=targets,
                            methods=methods, seeds=list(cfg.seeds),
                            baseline=baseline, cells=cells, curves=curves)


# ---------------------------------------------------------------------------
# result emission


def _fmt_cell(agg: SeedAggregate) -> str:
    if agg.n == 1:
        return f"{agg.mean:.3f}"
    return agg.fmt(3)


def emit_results(report: ExperimentReport, out_dir) -> list[str]:
    """Write the four result files; returns the paths written."""
    os.makedirs(out_dir, exist_ok=True)
    written = []

    grid_path = os.path.join(out_dir, "results_grid.json")
    with open(grid_path, "w") as fh:
        json.dump(report.to_dict(), fh, sort_keys=True, indent=1)
        fh.write("\n")
    written.append(grid_path)

    base_agg = report.baseline_aggregates()
    columns = [BASELINE_COLUMN] + report.methods
    table_path = os.path.join(out_dir, "results_table.txt")
    with open(table_path, "w") as fh:
        fh.write("domain\t" + "\t".join(columns) + "\n")
        for t in report.targets:
            row = [_fmt_cell(base_agg[t])]
            row += [_fmt_cell(report.method_aggregates(m)[t]) for m in report.methods]
            fh.write(t + "\t" + "\t".join(row) + "\n")
    written.append(table_path)

    delta_path = os.path.join(out_dir, "deltas.csv")
    with open(delta_path, "w") as fh:
        fh.write("method,domain,baseline_mean,method_mean,delta\n")
        for m in report.methods:
            table = delta_table(report.method_aggregates(m), base_agg)
            for t in report.targets:
                row = table[t]
                fh.write(f"{m},{t},{row['baseline_mean']!r},{row['method_mean']!r},"
                         f"{row['delta']!r}\n")
    written.append(delta_path)

    curves_path = os.path.join(out_dir, "curves.csv")
    with open(curves_path, "w") as fh:
        fh.write("method,domain,seed,round,auprc\n")
        for m in report.methods:
            for t in report.targets:
                for si, seed in enumerate(report.seeds):
                    for r, value in enumerate(report.curves[m][t][si]):
                        fh.write(f"{m},{t},{seed},{r},{value!r}\n")
    written.append(curves_path)
    return written
