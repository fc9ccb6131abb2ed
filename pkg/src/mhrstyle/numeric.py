"""Dense numerical substrate: primitives, parameter store, Adam, grad check.

Tensors are plain numpy arrays in row-major layout. Training runs in
float32; gradient checks run the same code paths in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import ArgumentError, ConfigurationError, DimensionError

GROUPS = ("base", "adapter", "routing")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    logits = np.asarray(logits)
    if logits.size == 0 or logits.shape[axis] == 0:
        raise ArgumentError("softmax of an empty vector")
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    z = logits - logits.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def cross_entropy_loss(logits: np.ndarray, labels) -> float:
    """Mean negative log-likelihood of ``labels`` under ``softmax(logits)``."""
    loss, _ = cross_entropy_with_grad(logits, labels)
    return loss


def cross_entropy_with_grad(logits: np.ndarray, labels, weights=None):
    """Loss and d(loss)/d(logits).

    ``weights`` (per-sample) replaces the plain 1/batch averaging; used when
    one batch carries several independent objectives.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if labels.shape != (n,):
        raise DimensionError(f"labels shape {labels.shape} for logits {logits.shape}")
    if n and (labels.min() < 0 or labels.max() >= k):
        raise ArgumentError(f"label out of range [0, {k})")
    logp = log_softmax(logits)
    w = np.full(n, 1.0 / n, dtype=logits.dtype) if weights is None else weights.astype(logits.dtype)
    nll = -logp[np.arange(n), labels]
    loss = float(np.dot(w.astype(np.float64), nll.astype(np.float64)))
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    grad *= w[:, None]
    return loss, grad


@dataclass
class ParamStore:
    """Named parameters with a learning-rate group and a trainability mask.

    ``trainable[name]`` is ``True``, ``False`` or an integer array of row
    indices along axis 0; only those rows are updated.
    """

    params: dict[str, np.ndarray] = field(default_factory=dict)
    groups: dict[str, str] = field(default_factory=dict)
    trainable: dict[str, object] = field(default_factory=dict)
    adam_m: dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def add(self, name: str, value: np.ndarray, group: str, trainable=True) -> None:
        if name in self.params:
            raise ConfigurationError(f"duplicate parameter {name!r}")
        if group not in GROUPS:
            raise ConfigurationError(f"unknown parameter group {group!r}")
        self.params[name] = value
        self.groups[name] = group
        self.trainable[name] = trainable

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self, group: str | None = None) -> list[str]:
        return [n for n in self.params if group is None or self.groups[n] == group]

    def set_group_trainable(self, group: str, flag) -> None:
        if group not in GROUPS:
            raise ConfigurationError(f"unknown parameter group {group!r}")
        for n in self.names(group):
            self.trainable[n] = flag

    def reset_optimizer(self) -> None:
        self.adam_m.clear()
        self.adam_v.clear()
        self.step = 0

    def copy(self) -> "ParamStore":
        out = ParamStore(
            {k: v.copy() for k, v in self.params.items()},
            dict(self.groups),
            {k: (v.copy() if isinstance(v, np.ndarray) else v) for k, v in self.trainable.items()},
        )
        return out

    def astype(self, dtype) -> "ParamStore":
        out = self.copy()
        out.params = {k: v.astype(dtype) for k, v in out.params.items()}
        return out

    def count(self, group: str | None = None) -> int:
        return sum(self.params[n].size for n in self.names(group))


def _row_mask(flag, shape) -> np.ndarray | None:
    """Boolean mask for partially trainable params; None means all-or-nothing."""
    if isinstance(flag, (bool, np.bool_)):
        return None
    mask = np.zeros(shape[0], dtype=bool)
    mask[np.asarray(flag, dtype=np.int64)] = True
    return mask.reshape((-1,) + (1,) * (len(shape) - 1))


def adam_step(
    store: ParamStore,
    grads: Mapping[str, np.ndarray],
    lr_by_group: Mapping[str, float],
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> ParamStore:
    """One bias-corrected Adam update, in place. Frozen entries never move."""
    store.step += 1
    t = store.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in store.params.items():
        flag = store.trainable[name]
        if flag is False or (not isinstance(flag, (bool, np.bool_)) and len(flag) == 0):
            continue
        group = store.groups[name]
        if group not in lr_by_group:
            raise ConfigurationError(f"no learning rate for group {group!r}")
        lr = lr_by_group[group]
        if lr <= 0:
            continue
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape:
            raise DimensionError(f"gradient for {name} has shape {g.shape}, param {p.shape}")
        m = store.adam_m.get(name)
        v = store.adam_v.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        m_new = beta1 * m + (1.0 - beta1) * g
        v_new = beta2 * v + (1.0 - beta2) * g * g
        update = (lr / c1) * m_new / (np.sqrt(v_new / c2) + eps)
        mask = _row_mask(flag, p.shape)
        if mask is None:
            store.adam_m[name], store.adam_v[name] = m_new.astype(p.dtype), v_new.astype(p.dtype)
            store.params[name] = (p - update).astype(p.dtype)
        else:
            store.adam_m[name] = np.where(mask, m_new, m).astype(p.dtype)
            store.adam_v[name] = np.where(mask, v_new, v).astype(p.dtype)
            store.params[name] = np.where(mask, p - update, p).astype(p.dtype)
    return store


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str | None
    worst_index: tuple | None
    checked: int
    passed: bool


def finite_diff_check(
    f: Callable[[ParamStore], tuple[float, Mapping[str, np.ndarray]]],
    store: ParamStore,
    epsilon: float = 1e-6,
    tolerance: float = 1e-4,
    max_entries_per_param: int | None = None,
    rng: np.random.Generator | None = None,
    abs_floor: float = 1e-6,
) -> GradCheckReport:
    """Compare analytic gradients against central differences.

    ``f`` returns ``(loss, grads)``. Relative error is
    ``|a - n| / max(|a| + |n|, abs_floor)`` so that near-zero gradients are
    judged on absolute scale. ``tolerance`` only sets ``report.passed``.
    Optionally subsamples entries per parameter.
    """
    _, grads = f(store)
    worst, worst_name, worst_idx, checked = 0.0, None, None, 0
    for name in store.names():
        if store.trainable[name] is False:
            continue
        p = store.params[name]
        g = grads.get(name, np.zeros_like(p))
        flat_idx = np.arange(p.size)
        if max_entries_per_param is not None and p.size > max_entries_per_param:
            rng = rng or np.random.default_rng(0)
            flat_idx = np.sort(rng.choice(p.size, max_entries_per_param, replace=False))
        for fi in flat_idx:
            idx = np.unravel_index(fi, p.shape)
            orig = p[idx]
            p[idx] = orig + epsilon
            fp, _ = f(store)
            p[idx] = orig - epsilon
            fm, _ = f(store)
            p[idx] = orig
            num = (fp - fm) / (2 * epsilon)
            ana = float(g[idx])
            err = abs(ana - num) / max(abs(ana) + abs(num), abs_floor)
            checked += 1
            if err > worst:
                worst, worst_name, worst_idx = err, name, idx
    return GradCheckReport(worst, worst_name, worst_idx, checked, worst < tolerance)
