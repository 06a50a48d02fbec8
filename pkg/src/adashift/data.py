"""Synthetic domain families and delimited-text dataset ingestion.

A family has one labeled source domain and a set of shifted targets. Each
domain draws from a shared two-class base distribution (interleaved moons in
2-D, a two-component Gaussian mixture otherwise) with an exact, stratified
positive count, then applies its own shift: a rotation in the first two
coordinates, a translation, and extra observation noise.

CSV contract: header row with required "id", optional "domain", optional
"label" (empty cell = unlabeled), and feature columns f0..f{d-1}. Floats are
written with repr so round-trips are lossless for finite values.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import rng as rng_mod


@dataclass
class DomainPool:
    """Feature matrix with per-sample stable ids and labels.

    Labels: 1 positive, 0 negative, -1 unknown. Synthetic pools always carry
    ground truth; whether the workflow is allowed to see it is decided by the
    harness, not here.
    """

    name: str
    ids: list[str]
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if len(self.ids) != self.x.shape[0] or len(self.ids) != self.y.shape[0]:
            raise ValueError("ids, x and y must align")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError(f"duplicate ids in pool {self.name!r}")

    def __len__(self):
        return len(self.ids)

    @property
    def labeled_mask(self) -> np.ndarray:
        return self.y >= 0

    def subset(self, indices) -> "DomainPool":
        indices = np.asarray(indices, dtype=np.int64)
        return DomainPool(self.name, [self.ids[i] for i in indices],
                          self.x[indices], self.y[indices])

    def index_of(self, sample_id: str) -> int:
        try:
            return self.ids.index(sample_id)
        except ValueError:
            raise KeyError(f"unknown sample id {sample_id!r}") from None


@dataclass(frozen=True)
class Shift:
    """Domain transform: rotate the first two coordinates, translate, and add
    Gaussian observation noise. The affine part is exactly invertible; the
    noise is part of the domain's generative draw."""

    rotation: float = 0.0
    translation: tuple[float, ...] = ()
    noise_scale: float = 0.0

    def matrix(self, dim: int) -> np.ndarray:
        r = np.eye(dim)
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        if dim >= 2:
            r[0, 0], r[0, 1] = c, -s
            r[1, 0], r[1, 1] = s, c
        return r

    def offset(self, dim: int) -> np.ndarray:
        t = np.zeros(dim)
        t[: len(self.translation)] = self.translation
        return t

    def apply(self, x: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
        dim = x.shape[1]
        out = x @ self.matrix(dim).T + self.offset(dim)
        if self.noise_scale > 0:
            if rng is None:
                raise ValueError("noisy shift needs a generator")
            out = out + rng.normal(0.0, self.noise_scale, size=out.shape)
        return out

    def apply_affine(self, x: np.ndarray) -> np.ndarray:
        return x @ self.matrix(x.shape[1]).T + self.offset(x.shape[1])

    def invert_affine(self, x: np.ndarray) -> np.ndarray:
        return (x - self.offset(x.shape[1])) @ self.matrix(x.shape[1])


@dataclass(frozen=True)
class DomainSpec:
    name: str
    n_samples: int
    positive_ratio: float
    shift: Shift = Shift()
    role: str = "target"
    positive_count: int | None = None  # overrides round(n * ratio) when set

    def __post_init__(self):
        if self.role not in ("source", "target"):
            raise ValueError("role must be source or target")
        if not 0.0 < self.positive_ratio < 1.0:
            raise ValueError("positive_ratio must lie in (0,1)")

    def resolved_positive_count(self) -> int:
        n_pos = self.positive_count
        if n_pos is None:
            n_pos = round(self.n_samples * self.positive_ratio)
        if n_pos < 1:
            raise ValueError(f"domain {self.name!r}: positive count would be zero")
        if n_pos >= self.n_samples:
            raise ValueError(f"domain {self.name!r}: no negatives left")
        return n_pos


@dataclass
class DomainFamily:
    domains: list[DomainSpec]
    feature_dim: int = 2
    base: str = "moons"  # or "gaussian"
    base_noise: float = 0.12
    seed: int = 0

    def __post_init__(self):
        sources = [d for d in self.domains if d.role == "source"]
        if len(sources) != 1:
            raise ValueError("a family needs exactly one source domain")
        if self.base not in ("moons", "gaussian"):
            raise ValueError("base must be moons or gaussian")

    @property
    def source_name(self) -> str:
        return next(d.name for d in self.domains if d.role == "source")

    @property
    def target_names(self) -> list[str]:
        return [d.name for d in self.domains if d.role == "target"]


def _moons(n_pos: int, n_neg: int, noise: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Interleaved half-circles; positives on the lower moon."""
    t_neg = rng.uniform(0.0, math.pi, size=n_neg)
    t_pos = rng.uniform(0.0, math.pi, size=n_pos)
    neg = np.stack([np.cos(t_neg), np.sin(t_neg)], axis=1)
    pos = np.stack([1.0 - np.cos(t_pos), 0.5 - np.sin(t_pos)], axis=1)
    x = np.concatenate([pos, neg])
    x += rng.normal(0.0, noise, size=x.shape)
    y = np.concatenate([np.ones(n_pos, dtype=np.int64), np.zeros(n_neg, dtype=np.int64)])
    return x, y


def _gaussian_pair(n_pos: int, n_neg: int, dim: int, noise: float,
                   rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    direction = np.zeros(dim)
    direction[0] = 1.0
    pos = rng.normal(0.0, 0.5 + noise, size=(n_pos, dim)) + direction
    neg = rng.normal(0.0, 0.5 + noise, size=(n_neg, dim)) - direction
    x = np.concatenate([pos, neg])
    y = np.concatenate([np.ones(n_pos, dtype=np.int64), np.zeros(n_neg, dtype=np.int64)])
    return x, y


def gen_domain(spec: DomainSpec, family: DomainFamily) -> DomainPool:
    rng = rng_mod.stream(family.seed, "domain", spec.name)
    n_pos = spec.resolved_positive_count()
    n_neg = spec.n_samples - n_pos
    noise = family.base_noise + spec.shift.noise_scale
    if family.base == "moons":
        x, y = _moons(n_pos, n_neg, noise, rng)
        if family.feature_dim > 2:
            extra = rng.normal(0.0, family.base_noise,
                               size=(spec.n_samples, family.feature_dim - 2))
            x = np.concatenate([x, extra], axis=1)
    else:
        x, y = _gaussian_pair(n_pos, n_neg, family.feature_dim, noise, rng)
    x = spec.shift.apply_affine(x)
    order = rng.permutation(spec.n_samples)
    x, y = x[order], y[order]
    ids = [f"{spec.name}-{i:05d}" for i in range(spec.n_samples)]
    return DomainPool(spec.name, ids, x, y)


def gen_family(family: DomainFamily) -> dict[str, DomainPool]:
    """All domain pools, deterministic per family seed. Generation is
    stratified: label counts match the spec exactly, never Bernoulli draws."""
    return {spec.name: gen_domain(spec, family) for spec in family.domains}


# Default family: one large imbalanced source plus ten targets whose sizes and
# positive counts follow the benchmark layout this toolkit ships with. Shift
# intensity is graded from mild to severe across the targets.
_DEFAULT_ROWS = [
    # name, n, ratio, n_pos, rotation, translation, extra noise
    ("H", 4699, 0.10, 465, 0.0, (0.0, 0.0), 0.00),
    ("HA", 557, 0.04, 25, 0.10, (0.15, -0.10), 0.02),
    ("HLH", 220, 0.45, 90, 0.20, (-0.20, 0.15), 0.03),
    ("HLP", 218, 0.07, 15, 0.30, (0.25, 0.20), 0.05),
    ("B", 4639, 0.41, 1918, 0.35, (-0.30, -0.20), 0.05),
    ("BA", 879, 0.08, 71, 0.45, (0.35, 0.25), 0.08),
    ("BLH", 932, 0.66, 612, 0.55, (-0.40, 0.30), 0.08),
    ("BLP", 297, 0.65, 192, 0.65, (0.45, -0.35), 0.10),
    ("M", 1847, 0.31, 565, 0.75, (-0.50, -0.40), 0.10),
    ("MA", 464, 0.08, 37, 0.85, (0.55, 0.45), 0.12),
    ("MLH", 292, 0.60, 175, 0.95, (-0.60, 0.50), 0.12),
]


def default_family(seed: int = 0, feature_dim: int = 2) -> DomainFamily:
    domains = []
    for i, (name, n, ratio, n_pos, rot, trans, extra) in enumerate(_DEFAULT_ROWS):
        domains.append(DomainSpec(
            name=name, n_samples=n, positive_ratio=ratio, positive_count=n_pos,
            shift=Shift(rotation=rot, translation=trans, noise_scale=extra),
            role="source" if i == 0 else "target",
        ))
    base = "moons" if feature_dim == 2 else "gaussian"
    return DomainFamily(domains=domains, feature_dim=feature_dim, base=base, seed=seed)


# ---------------------------------------------------------------------------
# delimited-text ingestion


def save_csv(pool: DomainPool, path) -> None:
    dim = pool.x.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "domain", "label"] + [f"f{i}" for i in range(dim)])
        for i, sid in enumerate(pool.ids):
            label = "" if pool.y[i] < 0 else str(int(pool.y[i]))
            writer.writerow([sid, pool.name, label] + [repr(float(v)) for v in pool.x[i]])


def load_csv(path, name: str | None = None) -> DomainPool:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a header row") from None
        if "id" not in header:
            raise ValueError(f"{path}: header must contain an 'id' column")
        id_col = header.index("id")
        domain_col = header.index("domain") if "domain" in header else None
        label_col = header.index("label") if "label" in header else None
        feature_cols = [i for i, h in enumerate(header)
                        if i not in (id_col, domain_col, label_col)]
        ids: list[str] = []
        labels: list[int] = []
        rows: list[list[float]] = []
        domain = name
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: ragged row")
            ids.append(row[id_col])
            if domain_col is not None and domain is None:
                domain = row[domain_col]
            if label_col is not None and row[label_col] != "":
                value = int(row[label_col])
                if value not in (0, 1):
                    raise ValueError(f"{path}:{lineno}: label must be 0 or 1")
                labels.append(value)
            else:
                labels.append(-1)
            try:
                rows.append([float(row[i]) for i in feature_cols])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric feature value") from None
    dim = len(feature_cols)
    x = np.asarray(rows, dtype=np.float64).reshape(len(ids), dim)
    return DomainPool(domain or "pool", ids, x, np.asarray(labels, dtype=np.int64))


def split(pool: DomainPool, fractions: tuple[float, float], seed: int) -> tuple[DomainPool, DomainPool]:
    """Stratified disjoint split; deterministic per seed. Unknown-label samples
    are stratified as their own group."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    rng = rng_mod.stream(seed, "split", pool.name)
    first_parts: list[np.ndarray] = []
    second_parts: list[np.ndarray] = []
    n_nonzero = sum(1 for f in fractions if f > 0)
    for value in (1, 0, -1):
        idx = np.flatnonzero(pool.y == value)
        if idx.size == 0:
            continue
        if idx.size < n_nonzero:
            raise ValueError(
                f"pool {pool.name!r}: class {value} has fewer samples than split parts")
        idx = rng.permutation(idx)
        n_first = round(len(idx) * fractions[0])
        if fractions[0] > 0:
            n_first = max(1, n_first)
        if fractions[1] > 0:
            n_first = min(len(idx) - 1, n_first)
        first_parts.append(idx[:n_first])
        second_parts.append(idx[n_first:])
    first = np.sort(np.concatenate(first_parts)) if first_parts else np.array([], dtype=np.int64)
    second = np.sort(np.concatenate(second_parts)) if second_parts else np.array([], dtype=np.int64)
    return pool.subset(first), pool.subset(second)
