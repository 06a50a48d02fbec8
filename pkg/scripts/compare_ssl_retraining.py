"""Compare linear probes on self-distillation-retrained features against
probes on the untrained initialization, per target domain over 5 seeds.

Usage: python scripts/compare_ssl_retraining.py [n_seeds]
"""

import sys
import time
from dataclasses import replace

import numpy as np

from adashift.adapt import ProbeConfig, linear_probe
from adashift.data import default_family, gen_family, split
from adashift.dino import SslConfig, pretrain_ssl
from adashift.metrics import auprc


def main() -> int:
    n_seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 5
    family = default_family(seed=0)
    pools = gen_family(family)
    pooled = np.concatenate([p.x for p in pools.values()])
    splits = {name: split(pools[name], (0.5, 0.5), seed=family.seed)
              for name in family.target_names}
    src = pools[family.source_name]

    cfg_ssl = SslConfig()
    cfg_init = replace(cfg_ssl, stage1_epochs=0, stage2_epochs=0)
    probe_cfg = ProbeConfig()

    retrained = {n: [] for n in splits}
    plain = {n: [] for n in splits}
    start = time.time()
    for seed in range(n_seeds):
        bb_init, _, _ = pretrain_ssl(pooled, cfg_init, seed)
        bb_ssl, diags, _ = pretrain_ssl(pooled, cfg_ssl, seed)
        flag = " (collapse flagged!)" if diags.collapse_flagged else ""
        print(f"seed {seed}: distillation loss "
              f"{diags.epoch_losses[0]:.2f} -> {diags.epoch_losses[-1]:.2f}{flag}",
              file=sys.stderr)
        for backbone, sink in ((bb_init, plain), (bb_ssl, retrained)):
            probe = linear_probe(backbone, src.x, src.y, probe_cfg, seed)
            for name, (_, ev) in splits.items():
                sink[name].append(auprc(probe.scores(ev.x), ev.y))

    print(f"\n{n_seeds} seeds in {time.time() - start:.0f} s\n")
    print(f"{'target':6s} {'plain':>12s} {'retrained':>12s}  better?")
    wins = 0
    for name in splits:
        p_mean, p_std = np.mean(plain[name]), np.std(plain[name], ddof=1)
        r_mean, r_std = np.mean(retrained[name]), np.std(retrained[name], ddof=1)
        win = r_mean >= p_mean
        wins += win
        print(f"{name:6s} {p_mean:.3f}±{p_std:.3f} {r_mean:.3f}±{r_std:.3f}  "
              f"{'yes' if win else 'no'}")
    print(f"\nretrained >= plain on {wins} of {len(splits)} targets")
    return 0


if __name__ == "__main__":
    sys.exit(main())
