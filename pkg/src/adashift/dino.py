"""Self-distillation pretraining: multi-view generation, teacher-student
cross-entropy with centering and sharpening, EMA teacher updates, and the
two-stage schedule (heads first, then all layers at per-group rates).

View policy on vector data: a "crop" keeps a contiguous coordinate window
whose width is a drawn fraction of the input dimension (the rest is zeroed),
after Gaussian noise is added; an extra random coordinate mask is applied
last. Teachers see only the wide (global) views, students see everything.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng as rng_mod
from .nn import (
    LayerSpec,
    Network,
    OneCycleSchedule,
    Sgd,
    Tensor,
    _log_softmax,
    _softmax,
    onecycle_lr,
    soft_cross_entropy,
)


class SslDivergenceError(RuntimeError):
    """Pretraining hit a non-finite loss; the checkpoint is not usable."""


@dataclass
class ViewConfig:
    n_global: int = 2
    n_local: int = 4
    global_scale: tuple[float, float] = (0.4, 1.0)
    local_scale: tuple[float, float] = (0.05, 0.4)
    noise_std: float = 0.1
    mask_fraction: float = 0.0
    rotation_max: float = 1.0  # random rotation in the first-two-dims plane

    def __post_init__(self):
        if self.n_global < 2:
            raise ValueError("need at least two global views")
        for lo, hi in (self.global_scale, self.local_scale):
            if not (0.0 < lo <= hi <= 1.0):
                raise ValueError("scale ranges must lie within (0,1]")
        if not 0.0 <= self.mask_fraction <= 1.0:
            raise ValueError("mask_fraction must lie in [0,1]")
        if self.rotation_max < 0.0:
            raise ValueError("rotation_max must be non-negative")


@dataclass
class ProjectorSpec:
    hidden_dim: int = 256
    output_dim: int = 256  # kept configurable; large prototype counts work too

    def __post_init__(self):
        if self.hidden_dim <= 0 or self.output_dim <= 0:
            raise ValueError("projector dims must be positive")


@dataclass
class DistillState:
    """Student/teacher pair plus the running center over teacher outputs.

    The teacher mirrors the student architecture exactly and is only ever
    updated by EMA; sharpening requires t_teacher < t_student.
    """

    student_backbone: Network
    student_projector: Network
    teacher_backbone: Network
    teacher_projector: Network
    center: np.ndarray
    t_student: float = 0.1
    t_teacher: float = 0.04
    ema_momentum: float = 0.996
    center_momentum: float = 0.9

    def __post_init__(self):
        pairs = [(self.student_backbone, self.teacher_backbone),
                 (self.student_projector, self.teacher_projector)]
        for s, t in pairs:
            if [sp.__dict__ for sp in s.specs()] != [sp.__dict__ for sp in t.specs()]:
                raise ValueError("teacher and student architectures differ")
        # sharpening wants t_teacher strictly below t_student; equality is
        # tolerated so collapse experiments can switch sharpening off
        if self.t_teacher > self.t_student:
            raise ValueError("teacher temperature must not exceed student temperature")
        if self.t_teacher <= 0:
            raise ValueError("temperatures must be positive")
        self.center = np.asarray(self.center, dtype=np.float64)
        if self.center.shape != (self.student_projector.output_dim,):
            raise ValueError("center must match projector output dim")

    def student_forward(self, x) -> Tensor:
        return self.student_projector.forward(self.student_backbone.forward(x))

    def teacher_logits(self, x: np.ndarray) -> np.ndarray:
        # teacher runs without gradients
        return self.teacher_projector.forward_np(self.teacher_backbone.forward_np(x))

    def teacher_probs(self, logits: np.ndarray) -> np.ndarray:
        return _softmax((logits - self.center) / self.t_teacher)


def make_state(input_dim: int, backbone_specs: list[LayerSpec], projector: ProjectorSpec,
               seed, t_student: float = 0.1, t_teacher: float = 0.04,
               ema_momentum: float = 0.996, center_momentum: float = 0.9,
               prototype_init_scale: float = 1.0) -> DistillState:
    rng = rng_mod.stream(seed, "distill-init")
    backbone = Network.create(input_dim, backbone_specs, rng)
    proj_specs = [LayerSpec(projector.hidden_dim, "relu"),
                  LayerSpec(projector.output_dim, "identity")]
    proj = Network.create(backbone.output_dim, proj_specs, rng)
    # a small prototype layer keeps sharpened teacher outputs diverse early on
    proj.layers[-1].weight.data *= prototype_init_scale
    return DistillState(
        student_backbone=backbone,
        student_projector=proj,
        teacher_backbone=backbone.clone(),
        teacher_projector=proj.clone(),
        center=np.zeros(projector.output_dim),
        t_student=t_student,
        t_teacher=t_teacher,
        ema_momentum=ema_momentum,
        center_momentum=center_momentum,
    )


def make_views(x: np.ndarray, cfg: ViewConfig, rng: np.random.Generator
               ) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Augmented views of one sample: (global views, local views).

    Exactly n_global + n_local views, all with x's dimensionality.
    """
    x = np.asarray(x, dtype=np.float64)
    dim = x.shape[0]

    def one(scale_range):
        view = x.copy()
        if cfg.rotation_max > 0 and dim >= 2:
            angle = rng.uniform(-cfg.rotation_max, cfg.rotation_max)
            c, s = math.cos(angle), math.sin(angle)
            v0, v1 = view[0], view[1]
            view[0] = c * v0 - s * v1
            view[1] = s * v0 + c * v1
        if cfg.noise_std > 0:
            view = view + rng.normal(0.0, cfg.noise_std, size=dim)
        scale = rng.uniform(*scale_range)
        width = max(1, round(scale * dim))
        if width < dim:
            start = int(rng.integers(0, dim - width + 1))
            kept = view[start : start + width].copy()
            view = np.zeros(dim)
            view[start : start + width] = kept
        if cfg.mask_fraction > 0:
            n_mask = round(cfg.mask_fraction * dim)
            if n_mask:
                view[rng.choice(dim, size=n_mask, replace=False)] = 0.0
        return view

    global_views = [one(cfg.global_scale) for _ in range(cfg.n_global)]
    local_views = [one(cfg.local_scale) for _ in range(cfg.n_local)]
    return global_views, local_views


def batch_views(batch: np.ndarray, cfg: ViewConfig, rng: np.random.Generator
                ) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Per-view matrices for a whole batch; one derived stream per sample so
    generation order (or parallelism) cannot change the draw."""
    seeds = rng.integers(0, 2**63 - 1, size=batch.shape[0])
    globals_acc = [[] for _ in range(cfg.n_global)]
    locals_acc = [[] for _ in range(cfg.n_local)]
    for row, seed in zip(batch, seeds):
        g, l = make_views(row, cfg, np.random.default_rng(int(seed)))
        for acc, view in zip(globals_acc, g):
            acc.append(view)
        for acc, view in zip(locals_acc, l):
            acc.append(view)
    return [np.stack(v) for v in globals_acc], [np.stack(v) for v in locals_acc]


def dino_loss(state: DistillState, teacher_logits: list[np.ndarray],
              student_logits: list[Tensor]) -> Tensor:
    """Mean cross-entropy between centered/sharpened teacher distributions and
    student distributions over all (teacher view, student view) pairs with
    distinct view indices. Teacher terms are constants."""
    terms: list[Tensor] = []
    for ti, t_logit in enumerate(teacher_logits):
        q = state.teacher_probs(t_logit)
        for si, s_logit in enumerate(student_logits):
            if si == ti:
                continue
            scaled = s_logit * (1.0 / state.t_student)
            terms.append(soft_cross_entropy(scaled, q))
    if not terms:
        raise ValueError("no view pairs to distill")
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total * (1.0 / len(terms))


def update_center(state: DistillState, teacher_logits: np.ndarray) -> np.ndarray:
    """center <- m*center + (1-m)*batch mean of raw teacher logits."""
    batch = np.atleast_2d(teacher_logits)
    if batch.shape[0] == 0:
        raise ValueError("empty teacher batch")
    m = state.center_momentum
    state.center = m * state.center + (1.0 - m) * batch.mean(axis=0)
    return state.center


def ema_update(state: DistillState) -> None:
    """Teacher parameters move toward the student: t <- m*t + (1-m)*s."""
    m = state.ema_momentum
    for s_net, t_net in ((state.student_backbone, state.teacher_backbone),
                         (state.student_projector, state.teacher_projector)):
        for s_layer, t_layer in zip(s_net.layers, t_net.layers):
            t_layer.weight.data *= m
            t_layer.weight.data += (1.0 - m) * s_layer.weight.data
            t_layer.bias.data *= m
            t_layer.bias.data += (1.0 - m) * s_layer.bias.data


def teacher_entropy(state: DistillState, probe: np.ndarray) -> float:
    """Mean entropy of the teacher's centered, sharpened output distribution."""
    logits = state.teacher_logits(probe)
    logp = _log_softmax((logits - state.center) / state.t_teacher)
    p = np.exp(logp)
    return float(-(p * logp).sum(axis=1).mean())


def collapse_floor(output_dim: int) -> float:
    return 0.1 * math.log(output_dim)


@dataclass
class SslConfig:
    backbone_widths: tuple[int, ...] = (32, 32)
    backbone_activation: str = "tanh"
    projector: ProjectorSpec = field(default_factory=lambda: ProjectorSpec(64, 64))
    views: ViewConfig = field(default_factory=ViewConfig)
    t_student: float = 0.1
    t_teacher: float = 0.04
    ema_momentum: float = 0.996
    center_momentum: float = 0.9
    centering: bool = True
    stage1_epochs: int = 3
    stage2_epochs: int = 8
    batch_size: int = 256
    stage1_lr: float = 0.05
    stage2_backbone_lr: float = 0.02
    stage2_projector_lr: float = 0.05
    momentum: float = 0.9
    warmup_fraction: float = 0.1
    final_lr_fraction: float = 0.05
    prototype_init_scale: float = 0.4
    weight_decay: float = 0.02
    max_pool_size: int | None = 4000  # subsample the pooled data for speed

    def backbone_specs(self) -> list[LayerSpec]:
        return [LayerSpec(w, self.backbone_activation) for w in self.backbone_widths]


@dataclass
class SslDiagnostics:
    epoch_losses: list[float] = field(default_factory=list)
    entropy_trace: list[float] = field(default_factory=list)
    collapse_flagged: bool = False
    stage2_first_epoch_loss: float | None = None
    stage2_last_epoch_loss: float | None = None


def pretrain_ssl(pooled: np.ndarray, cfg: SslConfig, seed,
                 init_backbone: Network | None = None
                 ) -> tuple[Network, SslDiagnostics, DistillState]:
    """Two-stage self-distillation over pooled unlabeled features.

    Stage 1 freezes the backbone and trains the projector head only; stage 2
    trains everything with per-group one-cycle learning rates. Returns the
    student backbone (projector discarded for downstream use), diagnostics
    including the collapse monitor trace, and the full pair state for
    checkpointing. `init_backbone` warm-starts both networks' backbones.
    """
    pooled = np.asarray(pooled, dtype=np.float64)
    if pooled.size == 0:
        raise ValueError("pooled data is empty")
    rng = rng_mod.stream(seed, "ssl")
    if cfg.max_pool_size is not None and pooled.shape[0] > cfg.max_pool_size:
        keep = rng.choice(pooled.shape[0], size=cfg.max_pool_size, replace=False)
        pooled = pooled[keep]

    state = make_state(pooled.shape[1], cfg.backbone_specs(), cfg.projector, seed,
                       t_student=cfg.t_student, t_teacher=cfg.t_teacher,
                       ema_momentum=cfg.ema_momentum, center_momentum=cfg.center_momentum,
                       prototype_init_scale=cfg.prototype_init_scale)
    if init_backbone is not None:
        state.student_backbone.load_from(init_backbone)
        state.teacher_backbone.load_from(init_backbone)
    diags = SslDiagnostics()
    floor = collapse_floor(cfg.projector.output_dim)
    probe = pooled[rng.choice(pooled.shape[0], size=min(256, pooled.shape[0]), replace=False)]

    def run_stage(epochs: int, optimizer: Sgd, schedule: OneCycleSchedule | None, tag: str):
        n = pooled.shape[0]
        steps_per_epoch = max(1, math.ceil(n / cfg.batch_size))
        step = 0
        first_epoch_loss = last_epoch_loss = None
        for _ in range(epochs):
            order = rng.permutation(n)
            epoch_loss = 0.0
            for b in range(steps_per_epoch):
                batch = pooled[order[b * cfg.batch_size : (b + 1) * cfg.batch_size]]
                if batch.shape[0] == 0:
                    continue
                g_views, l_views = batch_views(batch, cfg.views, rng)
                t_logits = [state.teacher_logits(v) for v in g_views]
                s_logits = [state.student_forward(v) for v in g_views + l_views]
                loss = dino_loss(state, t_logits, s_logits)
                if not np.isfinite(loss.data):
                    raise SslDivergenceError(
                        f"non-finite loss in {tag} at step {step}; "
                        f"last lr scale {onecycle_lr(schedule, min(step, schedule.total_steps)) if schedule else 1.0:.3g}")
                optimizer.zero_grad()
                loss.backward()
                scale = onecycle_lr(schedule, min(step, schedule.total_steps)) if schedule else 1.0
                optimizer.step(lr_scale=scale)
                ema_update(state)
                if cfg.centering:
                    update_center(state, np.concatenate(t_logits))
                epoch_loss += float(loss.data)
                step += 1
            epoch_mean = epoch_loss / steps_per_epoch
            diags.epoch_losses.append(epoch_mean)
            ent = teacher_entropy(state, probe)
            diags.entropy_trace.append(ent)
            if ent < floor:
                diags.collapse_flagged = True
            if first_epoch_loss is None:
                first_epoch_loss = epoch_mean
            last_epoch_loss = epoch_mean
        return first_epoch_loss, last_epoch_loss

    if cfg.stage1_epochs > 0:
        opt1 = Sgd(state.student_projector.parameters(), lr=cfg.stage1_lr, momentum=cfg.momentum,
                   weight_decay=cfg.weight_decay)
        steps1 = cfg.stage1_epochs * max(1, math.ceil(pooled.shape[0] / cfg.batch_size))
        sched1 = OneCycleSchedule(1.0, steps1, cfg.warmup_fraction, cfg.final_lr_fraction)
        run_stage(cfg.stage1_epochs, opt1, sched1, "stage 1")

    if cfg.stage2_epochs > 0:
        groups = [
            {"params": state.student_backbone.parameters(), "lr": cfg.stage2_backbone_lr},
            {"params": state.student_projector.parameters(), "lr": cfg.stage2_projector_lr},
        ]
        opt2 = Sgd(groups, momentum=cfg.momentum, weight_decay=cfg.weight_decay)
        steps2 = cfg.stage2_epochs * max(1, math.ceil(pooled.shape[0] / cfg.batch_size))
        sched2 = OneCycleSchedule(1.0, steps2, cfg.warmup_fraction, cfg.final_lr_fraction)
        first, last = run_stage(cfg.stage2_epochs, opt2, sched2, "stage 2")
        diags.stage2_first_epoch_loss = first
        diags.stage2_last_epoch_loss = last

    return state.student_backbone, diags, state
