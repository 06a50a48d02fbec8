"""Source-domain linear probing and the adaptation procedures used during
active rounds: plain fine-tuning, adversarial domain alignment with gradient
reversal, and entropy minimax.

The backbone stays frozen by default so every method trains the same probe
head; feature adaptation is opt-in via `train_backbone`. Domain convention:
the domain head's logit index 1 means "source".
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng as rng_mod
from .nn import (
    GrlGate,
    LayerSpec,
    Network,
    Sgd,
    Tensor,
    _softmax,
    cross_entropy,
    grl,
    make_optimizer,
    softmax_entropy,
)

SOURCE_DOMAIN_INDEX = 1  # domain head logit index interpreted as P(source)


class AdaptError(ValueError):
    pass


@dataclass
class ProbeModel:
    backbone: Network
    head: Network
    frozen_backbone: bool = True

    def features_np(self, x: np.ndarray) -> np.ndarray:
        return self.backbone.forward_np(x)

    def logits_np(self, x: np.ndarray) -> np.ndarray:
        return self.head.forward_np(self.features_np(x))

    def class_probs(self, x: np.ndarray) -> np.ndarray:
        return _softmax(self.logits_np(x))

    def scores(self, x: np.ndarray) -> np.ndarray:
        """P(positive class) per sample."""
        return self.class_probs(x)[:, 1]

    def features(self, x: np.ndarray) -> Tensor:
        if self.frozen_backbone:
            return Tensor(self.backbone.forward_np(x))
        return self.backbone.forward(x)

    def trainable(self) -> list[Tensor]:
        params = list(self.head.parameters())
        if not self.frozen_backbone:
            params = self.backbone.parameters() + params
        return params

    def clone(self) -> "ProbeModel":
        return ProbeModel(self.backbone.clone(), self.head.clone(), self.frozen_backbone)


@dataclass
class DannModel:
    probe: ProbeModel
    domain_head: Network
    gate: GrlGate = field(default_factory=lambda: GrlGate(1.0))

    def __post_init__(self):
        if self.domain_head.input_dim != self.probe.backbone.output_dim:
            raise ValueError("domain head must consume the backbone's features")

    def domain_prob_source(self, x: np.ndarray) -> np.ndarray:
        logits = self.domain_head.forward_np(self.probe.features_np(x))
        return _softmax(logits)[:, SOURCE_DOMAIN_INDEX]

    def trainable(self) -> list[Tensor]:
        return self.probe.trainable() + self.domain_head.parameters()


@dataclass(frozen=True)
class AdaptLosses:
    l_c: float
    l_d: float
    domain_weight: float
    total: float

    @classmethod
    def combine(cls, l_c: float, l_d: float, domain_weight: float) -> "AdaptLosses":
        return cls(l_c=l_c, l_d=l_d, domain_weight=domain_weight,
                   total=l_c + domain_weight * l_d)


@dataclass
class ProbeConfig:
    max_epochs: int = 300
    lr: float = 0.2
    momentum: float = 0.9
    optimizer: str = "sgd"
    plateau_tol: float = 1e-8
    plateau_patience: int = 20


def linear_probe(backbone: Network, x: np.ndarray, y: np.ndarray,
                 cfg: ProbeConfig, seed) -> ProbeModel:
    """Train a single affine layer on frozen features by cross-entropy until
    the loss plateaus or max_epochs is hit. The backbone is never touched."""
    y = np.asarray(y, dtype=np.int64)
    classes = set(np.unique(y).tolist())
    if not {0, 1} <= classes:
        raise AdaptError("source pool must contain both classes")
    rng = rng_mod.stream(seed, "probe-init")
    head = Network.create(backbone.output_dim, [LayerSpec(2, "identity")], rng)
    model = ProbeModel(backbone, head, frozen_backbone=True)
    if cfg.max_epochs == 0:
        return model
    feats = backbone.forward_np(x)
    opt = make_optimizer(cfg.optimizer, head.parameters(), lr=cfg.lr, momentum=cfg.momentum)
    prev = None
    flat = 0
    for _ in range(cfg.max_epochs):
        logits = head.forward(Tensor(feats))
        loss = cross_entropy(logits, y)
        opt.zero_grad()
        loss.backward()
        opt.step()
        value = float(loss.data)
        if prev is not None and abs(prev - value) < cfg.plateau_tol:
            flat += 1
            if flat >= cfg.plateau_patience:
                break
        else:
            flat = 0
        prev = value
    return model


def _mean_of_means(pairs: list[tuple[Tensor, int]]) -> Tensor:
    """Combine per-batch mean losses into the mean over all samples."""
    total_n = sum(n for _, n in pairs)
    combined = None
    for loss, n in pairs:
        term = loss * (n / total_n)
        combined = term if combined is None else combined + term
    return combined


def dann_step(model: DannModel, src_x: np.ndarray, src_y: np.ndarray,
              tgt_x: np.ndarray, optimizer, lam: float,
              labeled_tgt: tuple[np.ndarray, np.ndarray] | None = None,
              domain_weight: float = 1.0) -> AdaptLosses:
    """One adversarial step: classification loss on labeled samples plus
    domain loss through the reversal gate, single optimizer update.

    The reversal means feature parameters see the exact negation of the
    gradient the domain head's input produces, scaled by lam.
    """
    if lam < 0:
        raise AdaptError("reversal coefficient must be non-negative")
    if src_x.shape[0] == 0 or tgt_x.shape[0] == 0:
        raise AdaptError("both batches must be non-empty")
    model.gate.lam = lam

    f_src = model.probe.features(src_x)
    f_tgt = model.probe.features(tgt_x)

    class_terms = [(cross_entropy(model.probe.head.forward(f_src), src_y), src_x.shape[0])]
    if labeled_tgt is not None and labeled_tgt[0].shape[0] > 0:
        f_lab = model.probe.features(labeled_tgt[0])
        class_terms.append(
            (cross_entropy(model.probe.head.forward(f_lab), labeled_tgt[1]),
             labeled_tgt[0].shape[0]))
    l_c = _mean_of_means(class_terms)

    src_tags = np.full(src_x.shape[0], SOURCE_DOMAIN_INDEX, dtype=np.int64)
    tgt_tags = np.full(tgt_x.shape[0], 1 - SOURCE_DOMAIN_INDEX, dtype=np.int64)
    l_d = _mean_of_means([
        (cross_entropy(model.domain_head.forward(grl(model.gate, f_src)), src_tags),
         src_x.shape[0]),
        (cross_entropy(model.domain_head.forward(grl(model.gate, f_tgt)), tgt_tags),
         tgt_x.shape[0]),
    ])

    total = l_c + domain_weight * l_d
    optimizer.zero_grad()
    total.backward()
    optimizer.step()
    return AdaptLosses.combine(float(l_c.data), float(l_d.data), domain_weight)


def mme_step(model: ProbeModel, src_x: np.ndarray, src_y: np.ndarray,
             tgt_x: np.ndarray, optimizer, lambda_ent: float) -> AdaptLosses:
    """Entropy minimax: the head ascends target entropy while the feature
    extractor descends it (via gradient reversal on the entropy branch); the
    supervised term is plain cross-entropy on the source batch. The entropy
    value is reported in the domain-loss slot with its -lambda weight."""
    if lambda_ent < 0:
        raise AdaptError("entropy coefficient must be non-negative")
    if src_x.shape[0] == 0 or tgt_x.shape[0] == 0:
        raise AdaptError("both batches must be non-empty")
    f_src = model.features(src_x)
    l_c = cross_entropy(model.head.forward(f_src), src_y)
    if lambda_ent == 0.0:
        total = l_c
        ent_value = 0.0
    else:
        f_tgt = model.features(tgt_x)
        ent = softmax_entropy(model.head.forward(grl(GrlGate(1.0), f_tgt)))
        ent_value = float(ent.data)
        total = l_c + (-lambda_ent) * ent
    optimizer.zero_grad()
    total.backward()
    optimizer.step()
    return AdaptLosses.combine(float(l_c.data), ent_value, -lambda_ent)


def finetune_step(model: ProbeModel, tgt_x: np.ndarray, tgt_y: np.ndarray,
                  optimizer, source_batch: tuple[np.ndarray, np.ndarray] | None = None
                  ) -> AdaptLosses:
    """Supervised step on labeled target samples, optionally mixed with a
    source batch; the loss is the mean over all samples in the step."""
    if tgt_x.shape[0] == 0:
        raise AdaptError("no labeled target samples")
    terms = [(cross_entropy(model.head.forward(model.features(tgt_x)), tgt_y),
              tgt_x.shape[0])]
    if source_batch is not None and source_batch[0].shape[0] > 0:
        sx, sy = source_batch
        terms.append((cross_entropy(model.head.forward(model.features(sx)), sy),
                      sx.shape[0]))
    l_c = _mean_of_means(terms)
    optimizer.zero_grad()
    l_c.backward()
    optimizer.step()
    return AdaptLosses.combine(float(l_c.data), 0.0, 0.0)


@dataclass
class AdaptConfig:
    method: str = "finetune"  # finetune | dann | mme
    steps: int = 80
    lr: float = 0.05
    momentum: float = 0.9
    optimizer: str = "sgd"
    source_batch_size: int = 32
    target_batch_size: int = 32
    domain_weight: float = 1.0
    lambda_ent: float = 0.1
    grl_warmup: bool = True  # lam ramps 0 -> 1 across the round's steps
    train_backbone: bool = False
    mix_source: bool = True
    domain_head_widths: tuple[int, ...] = (16,)

    def __post_init__(self):
        if self.method not in ("finetune", "dann", "mme"):
            raise ValueError(f"unknown adaptation method {self.method!r}")


def make_domain_head(backbone: Network, cfg: AdaptConfig, seed) -> Network:
    rng = rng_mod.stream(seed, "domain-head-init")
    specs = [LayerSpec(w, "relu") for w in cfg.domain_head_widths] + [LayerSpec(2, "identity")]
    return Network.create(backbone.output_dim, specs, rng)


def train_domain_head(probe: ProbeModel, src_x: np.ndarray, tgt_x: np.ndarray,
                      cfg: AdaptConfig, seed, steps: int = 60) -> Network:
    """Stand-alone source-vs-target discriminator on frozen features, used to
    compute acquisition domain probabilities when no aligned model exists."""
    head = make_domain_head(probe.backbone, cfg, seed)
    rng = rng_mod.stream(seed, "domain-head-train")
    opt = Sgd(head.parameters(), lr=cfg.lr, momentum=cfg.momentum)
    f_src = probe.features_np(src_x)
    f_tgt = probe.features_np(tgt_x)
    for _ in range(steps):
        bs = f_src[rng.choice(f_src.shape[0], size=min(cfg.source_batch_size, f_src.shape[0]),
                              replace=False)]
        bt = f_tgt[rng.choice(f_tgt.shape[0], size=min(cfg.target_batch_size, f_tgt.shape[0]),
                              replace=False)]
        tags = np.concatenate([
            np.full(bs.shape[0], SOURCE_DOMAIN_INDEX, dtype=np.int64),
            np.full(bt.shape[0], 1 - SOURCE_DOMAIN_INDEX, dtype=np.int64),
        ])
        logits = head.forward(Tensor(np.concatenate([bs, bt])))
        loss = cross_entropy(logits, tags)
        opt.zero_grad()
        loss.backward()
        opt.step()
    return head


def run_adaptation(probe: ProbeModel, cfg: AdaptConfig,
                   src_x: np.ndarray, src_y: np.ndarray,
                   labeled_x: np.ndarray, labeled_y: np.ndarray,
                   unlabeled_x: np.ndarray, seed,
                   dann_model: DannModel | None = None) -> tuple[ProbeModel, list[AdaptLosses]]:
    """Run one adaptation round in place on `probe`. Labeled target samples
    are oversampled to parity with the source half of each batch so a budget
    of ten does not vanish inside source-heavy batches."""
    probe.frozen_backbone = not cfg.train_backbone
    rng = rng_mod.stream(seed, "adapt", cfg.method)
    model = probe
    if cfg.method == "dann":
        if dann_model is None:
            dann_model = DannModel(probe, make_domain_head(probe.backbone, cfg, seed))
        params = dann_model.trainable()
    else:
        params = probe.trainable()
    opt = make_optimizer(cfg.optimizer, params, lr=cfg.lr, momentum=cfg.momentum)

    losses: list[AdaptLosses] = []
    n_src = src_x.shape[0]
    n_lab = labeled_x.shape[0]
    n_unl = unlabeled_x.shape[0]
    if n_src == 0:
        raise AdaptError("source pool is empty")
    if cfg.method in ("dann", "mme") and n_unl == 0:
        raise AdaptError(f"{cfg.method} needs unlabeled target samples")
    for step in range(cfg.steps):
        src_idx = rng.choice(n_src, size=min(cfg.source_batch_size, n_src), replace=False)
        bs_x, bs_y = src_x[src_idx], src_y[src_idx]
        if n_lab > 0:
            lab_idx = rng.choice(n_lab, size=len(src_idx), replace=True)
            bl_x, bl_y = labeled_x[lab_idx], labeled_y[lab_idx]
        else:
            bl_x = np.zeros((0, src_x.shape[1]))
            bl_y = np.zeros(0, dtype=np.int64)

        if cfg.method == "finetune":
            if n_lab == 0:
                raise AdaptError("fine-tuning needs labeled target samples")
            source = (bs_x, bs_y) if cfg.mix_source else None
            losses.append(finetune_step(model, bl_x, bl_y, opt, source_batch=source))
        elif cfg.method == "dann":
            unl_idx = rng.choice(n_unl, size=min(cfg.target_batch_size, n_unl), replace=False)
            lam = 1.0
            if cfg.grl_warmup and cfg.steps > 1:
                lam = step / (cfg.steps - 1)
            labeled = (bl_x, bl_y) if n_lab > 0 else None
            losses.append(dann_step(dann_model, bs_x, bs_y, unlabeled_x[unl_idx], opt,
                                    lam=lam, labeled_tgt=labeled,
                                    domain_weight=cfg.domain_weight))
        else:  # mme
            unl_idx = rng.choice(n_unl, size=min(cfg.target_batch_size, n_unl), replace=False)
            if n_lab > 0:
                # fold the queried labels into the supervised half
                mixed_x = np.concatenate([bs_x, bl_x])
                mixed_y = np.concatenate([bs_y, bl_y])
            else:
                mixed_x, mixed_y = bs_x, bs_y
            losses.append(mme_step(model, mixed_x, mixed_y, unlabeled_x[unl_idx], opt,
                                   lambda_ent=cfg.lambda_ent))
    return probe, losses
