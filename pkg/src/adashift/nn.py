"""Dense-network substrate: reverse-mode autodiff, layers, optimizers, schedules.

Everything runs on float64 numpy arrays. The graph is built by closures on
`Tensor` ops and walked once per backward pass (micrograd style, but
vectorized). Supported activations: relu, tanh, identity, softmax.

Non-finite values are treated as an error state: network outputs and loss
nodes raise `NonFiniteError` as soon as a NaN/Inf appears, so divergence
surfaces at the step that produced it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ACTIVATIONS = ("relu", "tanh", "identity", "softmax")


class NonFiniteError(ArithmeticError):
    """A network output or loss produced NaN/Inf."""


class Tensor:
    """Node in the reverse-mode graph. Holds float64 data and, after
    backward(), the accumulated gradient of the same shape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_done")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self._done = False

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def _accum(self, g: np.ndarray) -> None:
        # first contribution is assigned, not added, so sign bits survive
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self) -> None:
        """Backpropagate from this scalar. A graph may be walked once; call
        a new forward pass before backpropagating again."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss node")
        if self._done:
            raise RuntimeError("backward already ran on this graph; rerun forward first")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()
            node._done = True

    # ---- elementwise / arithmetic ----

    def __add__(self, other):
        other = _as_tensor(other)
        out = Tensor(self.data + other.data, self.requires_grad or other.requires_grad)
        out._parents = (self, other)

        def bw():
            if self.requires_grad:
                self._accum(_unbroadcast(out.grad, self.data.shape))
            if other.requires_grad:
                other._accum(_unbroadcast(out.grad, other.data.shape))

        out._backward = bw
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data, self.requires_grad)
        out._parents = (self,)

        def bw():
            if self.requires_grad:
                self._accum(-out.grad)

        out._backward = bw
        return out

    def __sub__(self, other):
        return self + (-_as_tensor(other))

    def __mul__(self, other):
        other = _as_tensor(other)
        out = Tensor(self.data * other.data, self.requires_grad or other.requires_grad)
        out._parents = (self, other)

        def bw():
            if self.requires_grad:
                self._accum(_unbroadcast(out.grad * other.data, self.data.shape))
            if other.requires_grad:
                other._accum(_unbroadcast(out.grad * self.data, other.data.shape))

        out._backward = bw
        return out

    __rmul__ = __mul__

    def __matmul__(self, other):
        other = _as_tensor(other)
        out = Tensor(self.data @ other.data, self.requires_grad or other.requires_grad)
        out._parents = (self, other)

        def bw():
            if self.requires_grad:
                self._accum(out.grad @ other.data.T)
            if other.requires_grad:
                other._accum(self.data.T @ out.grad)

        out._backward = bw
        return out

    # ---- reductions ----

    def sum(self):
        out = Tensor(self.data.sum(), self.requires_grad)
        out._parents = (self,)

        def bw():
            if self.requires_grad:
                self._accum(np.full_like(self.data, out.grad.item()))

        out._backward = bw
        return out

    def mean(self):
        n = self.data.size
        out = Tensor(self.data.mean(), self.requires_grad)
        out._parents = (self,)

        def bw():
            if self.requires_grad:
                self._accum(np.full_like(self.data, out.grad.item() / n))

        out._backward = bw
        return out

    # ---- nonlinearities ----

    def relu(self):
        out = Tensor(np.maximum(self.data, 0.0), self.requires_grad)
        out._parents = (self,)
        mask = self.data > 0.0

        def bw():
            if self.requires_grad:
                self._accum(out.grad * mask)

        out._backward = bw
        return out

    def tanh(self):
        t = np.tanh(self.data)
        out = Tensor(t, self.requires_grad)
        out._parents = (self,)

        def bw():
            if self.requires_grad:
                self._accum(out.grad * (1.0 - t * t))

        out._backward = bw
        return out

    def softmax(self):
        """Row-wise softmax over the last axis."""
        p = _softmax(self.data)
        out = Tensor(p, self.requires_grad)
        out._parents = (self,)

        def bw():
            if self.requires_grad:
                g = out.grad
                inner = np.sum(g * p, axis=-1, keepdims=True)
                self._accum(p * (g - inner))

        out._backward = bw
        return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _check_finite(value: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(f"non-finite values in {where}")


# ---------------------------------------------------------------------------
# gradient reversal


@dataclass
class GrlGate:
    """Identity on the forward pass; scales the upstream gradient by
    -lam on the backward pass."""

    lam: float

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("gradient-reversal coefficient must be non-negative")


def grl(gate: GrlGate, x: Tensor) -> Tensor:
    out = Tensor(x.data.copy(), x.requires_grad)
    out._parents = (x,)
    lam = float(gate.lam)

    def bw():
        if x.requires_grad:
            x._accum((-lam) * out.grad)

    out._backward = bw
    return out


# ---------------------------------------------------------------------------
# losses (fused for speed; all covered by the finite-difference checks)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of row-wise softmax against integer labels."""
    labels = np.asarray(labels, dtype=np.int64)
    n = logits.data.shape[0]
    logp = _log_softmax(logits.data)
    picked = logp[np.arange(n), labels]
    out = Tensor(-picked.mean(), logits.requires_grad)
    out._parents = (logits,)
    _check_finite(out.data, "cross_entropy")

    def bw():
        if logits.requires_grad:
            p = np.exp(logp)
            p[np.arange(n), labels] -= 1.0
            logits._accum(out.grad.item() / n * p)

    out._backward = bw
    return out


def soft_cross_entropy(logits: Tensor, target_probs: np.ndarray) -> Tensor:
    """Mean of -sum(q * log softmax(z)) per row; q is a constant."""
    q = np.asarray(target_probs, dtype=np.float64)
    n = logits.data.shape[0]
    logp = _log_softmax(logits.data)
    out = Tensor(-(q * logp).sum(axis=-1).mean(), logits.requires_grad)
    out._parents = (logits,)
    _check_finite(out.data, "soft_cross_entropy")

    def bw():
        if logits.requires_grad:
            p = np.exp(logp)
            qsum = q.sum(axis=-1, keepdims=True)
            logits._accum(out.grad.item() / n * (p * qsum - q))

    out._backward = bw
    return out


def softmax_entropy(logits: Tensor) -> Tensor:
    """Mean Shannon entropy of row-wise softmax(logits)."""
    n = logits.data.shape[0]
    logp = _log_softmax(logits.data)
    p = np.exp(logp)
    row_h = -(p * logp).sum(axis=-1)
    out = Tensor(row_h.mean(), logits.requires_grad)
    out._parents = (logits,)
    _check_finite(out.data, "softmax_entropy")

    def bw():
        if logits.requires_grad:
            # dH/dz_j = -p_j (log p_j + H) per row
            g = -p * (logp + row_h[:, None])
            logits._accum(out.grad.item() / n * g)

    out._backward = bw
    return out


# ---------------------------------------------------------------------------
# networks


@dataclass
class LayerSpec:
    units: int
    activation: str = "identity"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.units <= 0:
            raise ValueError("layer width must be positive")


class Layer:
    def __init__(self, weight: np.ndarray, bias: np.ndarray, activation: str):
        self.weight = Tensor(weight, requires_grad=True)
        self.bias = Tensor(bias, requires_grad=True)
        self.activation = activation


class Network:
    """Plain MLP: a chain of affine layers with per-layer activations.
    Parameter count is fixed at construction; consecutive dims must chain."""

    def __init__(self, input_dim: int, layers: list[Layer]):
        if input_dim <= 0:
            raise ValueError("input_dim must be positive")
        dim = input_dim
        for layer in layers:
            if layer.weight.data.shape[0] != dim:
                raise ValueError("layer dimensions do not chain")
            dim = layer.weight.data.shape[1]
        self.input_dim = input_dim
        self.output_dim = dim if layers else input_dim
        self.layers = layers

    @classmethod
    def create(cls, input_dim: int, specs: list[LayerSpec], rng: np.random.Generator) -> "Network":
        """He-uniform weights, zero biases."""
        layers = []
        fan_in = input_dim
        for spec in specs:
            limit = math.sqrt(6.0 / fan_in)
            w = rng.uniform(-limit, limit, size=(fan_in, spec.units))
            layers.append(Layer(w, np.zeros(spec.units), spec.activation))
            fan_in = spec.units
        return cls(input_dim, layers)

    def forward(self, x) -> Tensor:
        t = x if isinstance(x, Tensor) else Tensor(np.atleast_2d(np.asarray(x, dtype=np.float64)))
        if t.data.shape[-1] != self.input_dim:
            raise ValueError(
                f"input dim {t.data.shape[-1]} does not match network input {self.input_dim}"
            )
        for layer in self.layers:
            t = t @ layer.weight + layer.bias
            if layer.activation == "relu":
                t = t.relu()
            elif layer.activation == "tanh":
                t = t.tanh()
            elif layer.activation == "softmax":
                t = t.softmax()
        _check_finite(t.data, "network output")
        return t

    __call__ = forward

    def forward_np(self, x: np.ndarray) -> np.ndarray:
        """Gradient-free forward pass for evaluation and frozen backbones."""
        out = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if out.shape[-1] != self.input_dim:
            raise ValueError(
                f"input dim {out.shape[-1]} does not match network input {self.input_dim}"
            )
        for layer in self.layers:
            out = out @ layer.weight.data + layer.bias.data
            if layer.activation == "relu":
                out = np.maximum(out, 0.0)
            elif layer.activation == "tanh":
                out = np.tanh(out)
            elif layer.activation == "softmax":
                out = _softmax(out)
        _check_finite(out, "network output")
        return out

    def parameters(self) -> list[Tensor]:
        out = []
        for layer in self.layers:
            out.append(layer.weight)
            out.append(layer.bias)
        return out

    def named_parameters(self) -> dict[str, Tensor]:
        out = {}
        for i, layer in enumerate(self.layers):
            out[f"w{i}"] = layer.weight
            out[f"b{i}"] = layer.bias
        return out

    def specs(self) -> list[LayerSpec]:
        return [LayerSpec(l.weight.data.shape[1], l.activation) for l in self.layers]

    def clone(self) -> "Network":
        layers = [
            Layer(l.weight.data.copy(), l.bias.data.copy(), l.activation) for l in self.layers
        ]
        return Network(self.input_dim, layers)

    def load_from(self, other: "Network") -> None:
        if [s.__dict__ for s in self.specs()] != [s.__dict__ for s in other.specs()]:
            raise ValueError("architecture mismatch")
        for mine, theirs in zip(self.layers, other.layers):
            mine.weight.data[...] = theirs.weight.data
            mine.bias.data[...] = theirs.bias.data

    def param_bytes(self) -> bytes:
        return b"".join(p.data.tobytes() for p in self.parameters())


def zero_grads(params: list[Tensor]) -> None:
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# optimizers


class Sgd:
    """SGD with classic (non-dampened) momentum: v <- m*v + g; p <- p - lr*v.

    Accepts a flat parameter list or groups of {"params": [...], "lr": ...}
    so backbone and head can run at different rates.
    """

    def __init__(self, params_or_groups, lr: float | None = None, momentum: float = 0.0,
                 weight_decay: float = 0.0):
        if params_or_groups and isinstance(params_or_groups[0], dict):
            self.groups = [dict(g) for g in params_or_groups]
        else:
            if lr is None:
                raise ValueError("lr required for a flat parameter list")
            self.groups = [{"params": list(params_or_groups), "lr": lr}]
        for g in self.groups:
            if g["lr"] <= 0:
                raise ValueError("lr must be positive")
        self.momentum = momentum
        self.weight_decay = weight_decay
        self._velocity = [
            [np.zeros_like(p.data) for p in g["params"]] for g in self.groups
        ]

    def zero_grad(self):
        for g in self.groups:
            zero_grads(g["params"])

    def step(self, lr_scale: float = 1.0):
        for g, vels in zip(self.groups, self._velocity):
            lr = g["lr"] * lr_scale
            for p, v in zip(g["params"], vels):
                if p.grad is None:
                    continue
                if p.grad.shape != p.data.shape:
                    raise ValueError("gradient shape does not match parameter shape")
                grad = p.grad if self.weight_decay == 0.0 else p.grad + self.weight_decay * p.data
                v *= self.momentum
                v += grad
                p.data -= lr * v


class Adam:
    def __init__(self, params_or_groups, lr: float | None = None, betas=(0.9, 0.999), eps=1e-8):
        if params_or_groups and isinstance(params_or_groups[0], dict):
            self.groups = [dict(g) for g in params_or_groups]
        else:
            if lr is None:
                raise ValueError("lr required for a flat parameter list")
            self.groups = [{"params": list(params_or_groups), "lr": lr}]
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self._m = [[np.zeros_like(p.data) for p in g["params"]] for g in self.groups]
        self._v = [[np.zeros_like(p.data) for p in g["params"]] for g in self.groups]

    def zero_grad(self):
        for g in self.groups:
            zero_grads(g["params"])

    def step(self, lr_scale: float = 1.0):
        self.t += 1
        for g, ms, vs in zip(self.groups, self._m, self._v):
            lr = g["lr"] * lr_scale
            for p, m, v in zip(g["params"], ms, vs):
                if p.grad is None:
                    continue
                if p.grad.shape != p.data.shape:
                    raise ValueError("gradient shape does not match parameter shape")
                m *= self.b1
                m += (1 - self.b1) * p.grad
                v *= self.b2
                v += (1 - self.b2) * p.grad * p.grad
                mhat = m / (1 - self.b1**self.t)
                vhat = v / (1 - self.b2**self.t)
                p.data -= lr * mhat / (np.sqrt(vhat) + self.eps)


def make_optimizer(name: str, params_or_groups, lr: float | None = None, momentum: float = 0.9):
    if name == "sgd":
        return Sgd(params_or_groups, lr=lr, momentum=momentum)
    if name == "adam":
        return Adam(params_or_groups, lr=lr)
    raise ValueError(f"unknown optimizer {name!r}")


# ---------------------------------------------------------------------------
# schedules


@dataclass
class OneCycleSchedule:
    """Linear warmup to max_lr, then cosine anneal to max_lr*final_lr_fraction.

    The warmup starts from the final (floor) value, so lr(0) < max_lr and the
    peak is reached exactly once, at step = round(warmup_fraction*total_steps).
    """

    max_lr: float
    total_steps: int
    warmup_fraction: float = 0.1
    final_lr_fraction: float = 0.05

    def __post_init__(self):
        if self.total_steps <= 0:
            raise ValueError("total_steps must be positive")
        if not 0.0 < self.warmup_fraction < 1.0:
            raise ValueError("warmup_fraction must lie in (0,1)")
        if not 0.0 < self.final_lr_fraction < 1.0:
            raise ValueError("final_lr_fraction must lie in (0,1)")

    @property
    def warmup_steps(self) -> int:
        return max(1, round(self.warmup_fraction * self.total_steps))


def onecycle_lr(schedule: OneCycleSchedule, step: int) -> float:
    if not 0 <= step <= schedule.total_steps:
        raise ValueError(f"step {step} outside [0, {schedule.total_steps}]")
    floor = schedule.max_lr * schedule.final_lr_fraction
    warm = schedule.warmup_steps
    if step <= warm:
        return floor + (schedule.max_lr - floor) * step / warm
    span = schedule.total_steps - warm
    frac = (step - warm) / span
    return floor + (schedule.max_lr - floor) * 0.5 * (1.0 + math.cos(math.pi * frac))
