import json
import os
from dataclasses import replace

import numpy as np
import pytest

from adashift.config import DEFAULT_GRID, ExperimentConfig, GridCell
from adashift.data import DomainFamily, DomainSpec, Shift
from adashift.dino import SslConfig
from adashift.harness import (
    AdaRoundState,
    ExperimentReport,
    emit_results,
    load_pools,
    prepare_splits,
    run_ada_round,
    run_workflow,
)
from adashift.labelers import OracleLabeler


def small_family(seed=0):
    return DomainFamily(domains=[
        DomainSpec("src", 300, 0.2, role="source"),
        DomainSpec("t1", 160, 0.3, shift=Shift(rotation=0.4, translation=(0.3, -0.2))),
        DomainSpec("t2", 160, 0.5, shift=Shift(rotation=0.9, translation=(-0.5, 0.4))),
    ], seed=seed)


def small_config(**overrides) -> ExperimentConfig:
    base = dict(
        family=small_family(),
        seeds=(0, 1),
        ssl=SslConfig(stage1_epochs=1, stage2_epochs=1, max_pool_size=400),
        budget=5,
        rounds=1,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def test_config_json_round_trip(tmp_path):
    cfg = small_config(grid=(GridCell("uniform", "finetune"),))
    path = tmp_path / "cfg.json"
    cfg.to_json(path)
    loaded = ExperimentConfig.from_json(path)
    assert loaded == cfg


def test_config_rejects_unknown_fields():
    with pytest.raises(ValueError, match="unknown config fields"):
        ExperimentConfig.from_dict({"no_such_field": 1})


def test_config_rejects_duplicate_seeds():
    with pytest.raises(ValueError, match="distinct"):
        small_config(seeds=(0, 0))


def test_baseline_only_grid_equals_probe_evaluation():
    cfg = small_config(grid=())
    report = run_workflow(cfg)
    assert report.methods == []
    assert set(report.baseline) == {"t1", "t2"}
    assert all(len(v) == 2 for v in report.baseline.values())


def test_budget_zero_uniform_finetune_gives_identical_deltas():
    cfg = small_config(grid=(GridCell("uniform", "finetune"),), budget=0)
    report = run_workflow(cfg)
    for t in report.targets:
        assert report.cells["uniform-finetune"][t] == report.baseline[t]


def test_baseline_column_independent_of_grid():
    with_grid = run_workflow(small_config(grid=(GridCell("uniform", "finetune"),
                                                GridCell("aada", "dann"))))
    without = run_workflow(small_config(grid=()))
    assert with_grid.baseline == without.baseline


def test_per_seed_isolation():
    both = run_workflow(small_config(seeds=(0, 1)))
    only_one = run_workflow(small_config(seeds=(1,)))
    for t in both.targets:
        assert both.baseline[t][1] == only_one.baseline[t][0]
        for m in both.methods:
            assert both.cells[m][t][1] == only_one.cells[m][t][0]


def test_two_rounds_grow_distinct_label_set():
    cfg = small_config(grid=(GridCell("uniform", "finetune"),), rounds=2, budget=5)
    pools = load_pools(cfg)
    splits = prepare_splits(cfg, pools)
    labeler = OracleLabeler(pools)
    from adashift.adapt import linear_probe
    from adashift.harness import build_backbone

    pooled = np.concatenate([pools[s.name].x for s in cfg.family.domains])
    backbone, _ = build_backbone(cfg, pooled, seed=0)
    probe = linear_probe(backbone, pools["src"].x, pools["src"].y, cfg.probe, 0)
    state = AdaRoundState(domain="t1", model=probe.clone())
    query_pool, eval_pool = splits["t1"]
    for _ in range(2):
        state = run_ada_round(state, cfg.grid[0], cfg, pools["src"], query_pool,
                              eval_pool, labeler, seed=0)
    assert len(state.queried_ids) == 10
    assert len(set(state.queried_ids)) == 10
    # oracle labels match ground truth
    for sid in state.queried_ids:
        idx = query_pool.index_of(sid)
        assert state.labels[sid] == int(query_pool.y[idx])
    # no evaluation id was ever queried
    assert not set(state.queried_ids) & set(eval_pool.ids)


@pytest.mark.parametrize("cell", DEFAULT_GRID, ids=lambda c: c.name)
def test_every_default_cell_runs(cell):
    cfg = small_config(grid=(cell,), seeds=(0,))
    report = run_workflow(cfg)
    for t in report.targets:
        value = report.cells[cell.name][t][0]
        assert 0.0 < value <= 1.0


def test_emitted_files_are_byte_identical_across_reruns(tmp_path):
    cfg = small_config(grid=(GridCell("uniform", "finetune"), GridCell("aada", "dann")))
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    emit_results(run_workflow(cfg), out_a)
    emit_results(run_workflow(cfg), out_b)
    for name in ("results_grid.json", "results_table.txt", "deltas.csv", "curves.csv"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name


def test_empty_grid_emits_headers(tmp_path):
    report = run_workflow(small_config(grid=(), seeds=(0, 1)))
    emit_results(report, tmp_path)
    deltas = (tmp_path / "deltas.csv").read_text().splitlines()
    assert deltas == ["method,domain,baseline_mean,method_mean,delta"]
    table = (tmp_path / "results_table.txt").read_text().splitlines()
    assert table[0] == "domain\tbaseline"


def test_single_cell_table_matches_report(tmp_path):
    cfg = small_config(grid=(GridCell("uniform", "finetune"),), seeds=(0, 1))
    report = run_workflow(cfg)
    emit_results(report, tmp_path)
    doc = json.loads((tmp_path / "results_grid.json").read_text())
    rebuilt = ExperimentReport.from_dict(doc)
    assert rebuilt.cells == report.cells
    assert rebuilt.baseline == report.baseline
    table = (tmp_path / "results_table.txt").read_text()
    agg = report.method_aggregates("uniform-finetune")["t1"]
    assert f"{agg.mean:.3f}" in table


def test_curves_track_rounds(tmp_path):
    cfg = small_config(grid=(GridCell("uniform", "finetune"),), rounds=3, budget=3,
                       seeds=(0,))
    report = run_workflow(cfg)
    assert all(len(curve) == 3 for curve in report.curves["uniform-finetune"]["t1"])
    emit_results(report, tmp_path)
    lines = (tmp_path / "curves.csv").read_text().splitlines()
    assert lines[0] == "method,domain,seed,round,auprc"
    assert len(lines) == 1 + 1 * 2 * 1 * 3  # methods * targets * seeds * rounds


def test_service_mode_requires_explicit_labeler():
    cfg = small_config(labeler="service")
    with pytest.raises(ValueError, match="explicit labeler"):
        run_workflow(cfg)


def test_parallel_seed_execution_matches_sequential():
    cfg = small_config(seeds=(0, 1, 2))
    sequential = run_workflow(cfg)
    parallel = run_workflow(small_config(seeds=(0, 1, 2), workers=3))
    assert parallel.baseline == sequential.baseline
    assert parallel.cells == sequential.cells
    assert parallel.curves == sequential.curves


def test_grid_cell_validates_names():
    with pytest.raises(ValueError, match="unknown strategy"):
        GridCell("entropy", "finetune")
    with pytest.raises(ValueError, match="unknown adaptation"):
        GridCell("uniform", "coral")


class ExplodingLabeler:
    def request_labels(self, domain, round_index, records):
        raise RuntimeError("annotator unavailable")


def test_cell_failures_carry_seed_domain_method_context():
    from adashift.harness import WorkflowError

    cfg = small_config(grid=(GridCell("uniform", "finetune"),), seeds=(0,))
    with pytest.raises(WorkflowError, match="seed 0, domain 't1', method 'uniform-finetune'"):
        run_workflow(cfg, labeler=ExplodingLabeler())


def test_labeler_failure_leaves_round_state_unchanged():
    cfg = small_config(grid=(GridCell("uniform", "finetune"),), seeds=(0,))
    pools = load_pools(cfg)
    splits = prepare_splits(cfg, pools)
    from adashift.adapt import linear_probe
    from adashift.harness import build_backbone

    pooled = np.concatenate([pools[s.name].x for s in cfg.family.domains])
    backbone, _ = build_backbone(cfg, pooled, seed=0)
    probe = linear_probe(backbone, pools["src"].x, pools["src"].y, cfg.probe, 0)
    state = AdaRoundState(domain="t1", model=probe.clone())
    before = state.model.head.param_bytes()
    with pytest.raises(RuntimeError, match="annotator unavailable"):
        run_ada_round(state, cfg.grid[0], cfg, pools["src"], splits["t1"][0],
                      splits["t1"][1], ExplodingLabeler(), seed=0)
    assert state.queried_ids == [] and state.labels == {}
    assert state.round_index == 0 and state.auprc_history == []
    assert state.model.head.param_bytes() == before


def test_gen_data_round_trip_via_dataset_dir(tmp_path):
    from adashift.data import save_csv

    cfg = small_config(grid=(GridCell("uniform", "finetune"),), seeds=(0,))
    pools = load_pools(cfg)
    for name, pool in pools.items():
        save_csv(pool, tmp_path / f"{name}.csv")
    from_disk = replace(cfg, dataset_dir=str(tmp_path))
    a = run_workflow(cfg)
    b = run_workflow(from_disk)
    assert a.baseline == b.baseline
    assert a.cells == b.cells
