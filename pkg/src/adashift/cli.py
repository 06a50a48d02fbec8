"""Command-line surface.

Subcommands:
  gen-data   write the configured domain family as per-domain CSV files
  ssl-train  self-distillation pretraining; writes a checkpoint
  probe      linear probe on the source domain from a checkpoint
  ada-run    full multi-seed workflow grid; writes result files
  report     re-emit result tables from a saved machine-readable grid
  serve      run the workflow with a human labeler behind the annotation
             service (and host the browser UI if a build is present)

Every command takes --config pointing at the JSON experiment file; omitted
fields fall back to the documented defaults. Exit status is 0 only when the
command ran to completion.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from . import checkpoint
from .adapt import linear_probe
from .config import ExperimentConfig
from .data import save_csv
from .dino import pretrain_ssl
from .harness import ExperimentReport, emit_results, load_pools, run_workflow
from .labelers import ServiceLabeler
from .metrics import auprc
from .service import AnnotationService, serve_in_background


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seeds", None):
        cfg = replace(cfg, seeds=tuple(int(s) for s in args.seeds.split(",")))
    if getattr(args, "labeler", None):
        cfg = replace(cfg, labeler=args.labeler)
    return cfg


def _progress(line: str) -> None:
    print(line, file=sys.stderr)


def cmd_gen_data(args) -> int:
    cfg = _load_config(args)
    pools = load_pools(replace(cfg, dataset_dir=None))
    os.makedirs(args.out, exist_ok=True)
    for name, pool in pools.items():
        path = os.path.join(args.out, f"{name}.csv")
        save_csv(pool, path)
        print(f"wrote {path} ({len(pool)} samples)")
    cfg.to_json(os.path.join(args.out, "config.json"))
    print(f"wrote {os.path.join(args.out, 'config.json')}")
    return 0


def cmd_ssl_train(args) -> int:
    cfg = _load_config(args)
    pools = load_pools(cfg)
    pooled = np.concatenate([pools[spec.name].x for spec in cfg.family.domains])
    seed = int(args.seed)
    init = None
    if args.init_checkpoint:
        nets, _, _ = checkpoint.load(args.init_checkpoint)
        init = nets["backbone"]
    backbone, diags, state = pretrain_ssl(pooled, cfg.ssl, seed, init_backbone=init)
    checkpoint.save(args.out, {
        "backbone": state.student_backbone,
        "projector": state.student_projector,
        "teacher_backbone": state.teacher_backbone,
        "teacher_projector": state.teacher_projector,
    }, center=state.center, meta={"stage": "ssl", "seed": seed})
    print(f"wrote {args.out}")
    print(f"epoch losses: {[round(v, 4) for v in diags.epoch_losses]}")
    if diags.collapse_flagged:
        print("warning: teacher entropy fell below the collapse floor", file=sys.stderr)
    return 0


def cmd_probe(args) -> int:
    cfg = _load_config(args)
    pools = load_pools(cfg)
    src = pools[cfg.family.source_name]
    nets, _, _ = checkpoint.load(args.checkpoint)
    model = linear_probe(nets["backbone"], src.x, src.y, cfg.probe, int(args.seed))
    checkpoint.save(args.out, {"backbone": model.backbone, "head": model.head},
                    meta={"stage": "probe", "seed": int(args.seed)})
    print(f"wrote {args.out}")
    print(f"source train AUPRC: {auprc(model.scores(src.x), src.y):.4f}")
    return 0


def cmd_ada_run(args) -> int:
    cfg = _load_config(args)
    labeler = None
    server = None
    if cfg.labeler == "service":
        journal = os.path.join(args.out, "labels.journal")
        os.makedirs(args.out, exist_ok=True)
        service = AnnotationService(journal_path=journal)
        src = load_pools(cfg)[cfg.family.source_name]
        labeled = [i for i in range(len(src)) if src.y[i] >= 0][:600]
        service.set_source_context(
            [[float(src.x[i][0]), float(src.x[i][1]), int(src.y[i])] for i in labeled])
        server, _ = serve_in_background(service, port=int(args.port), ui_dir=_ui_dir(args))
        print(f"annotation service listening on http://127.0.0.1:{server.server_port}/",
              file=sys.stderr)
        labeler = ServiceLabeler(service, timeout=args.timeout)
    try:
        report = run_workflow(cfg, labeler=labeler,
                              progress=None if args.quiet else _progress)
    finally:
        if server is not None:
            server.shutdown()
    for path in emit_results(report, args.out):
        print(f"wrote {path}")
    return 0


def cmd_report(args) -> int:
    import json

    with open(args.grid) as fh:
        report = ExperimentReport.from_dict(json.load(fh))
    for path in emit_results(report, args.out):
        print(f"wrote {path}")
    return 0


def cmd_serve(args) -> int:
    args.labeler = "service"
    return cmd_ada_run(args)


def _ui_dir(args) -> str | None:
    if getattr(args, "ui_dir", None):
        return args.ui_dir
    repo_root = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
    bundled = os.path.join(repo_root, "frontend", "dist")
    return bundled if os.path.isdir(bundled) else None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adashift", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_default=None):
        p.add_argument("--config", help="experiment config JSON")
        if out_default is not None:
            p.add_argument("--out", default=out_default, help="output path")
        else:
            p.add_argument("--out", required=True, help="output path")

    p = sub.add_parser("gen-data", help="write the domain family as CSV files")
    common(p)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("ssl-train", help="self-distillation pretraining")
    common(p)
    p.add_argument("--seed", default=0)
    p.add_argument("--init-checkpoint", help="warm-start backbone checkpoint")
    p.set_defaults(fn=cmd_ssl_train)

    p = sub.add_parser("probe", help="linear probe on the source domain")
    common(p)
    p.add_argument("--checkpoint", required=True, help="backbone checkpoint")
    p.add_argument("--seed", default=0)
    p.set_defaults(fn=cmd_probe)

    p = sub.add_parser("ada-run", help="full workflow grid")
    common(p)
    p.add_argument("--seeds", help="comma-separated seed override")
    p.add_argument("--labeler", choices=["oracle", "service"])
    p.add_argument("--port", default=0, help="annotation service port (service mode)")
    p.add_argument("--timeout", type=float, default=None,
                   help="per-round labeling timeout in seconds (service mode)")
    p.add_argument("--ui-dir", help="directory with the annotation UI build")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(fn=cmd_ada_run)

    p = sub.add_parser("report", help="re-emit tables from results_grid.json")
    p.add_argument("--grid", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("serve", help="workflow with the human-in-the-loop service")
    common(p)
    p.add_argument("--seeds", help="comma-separated seed override")
    p.add_argument("--port", default=8799)
    p.add_argument("--timeout", type=float, default=None)
    p.add_argument("--ui-dir", help="directory with the annotation UI build")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports and fails
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
