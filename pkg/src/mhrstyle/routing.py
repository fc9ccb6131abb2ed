"""Low-rank adapters, Poly mixing and multi-head routing (MHR).

An adapter inventory holds ``m`` low-rank pairs ``(A_i, B_i)`` with
``A_i: d_out x r`` and ``B_i: d_in x r``; the weight shift is ``A B^T``.
A style vector is an ``m x h`` logit matrix: for head ``k`` the softmax of
column ``k`` mixes row-block ``k`` of every ``A_i`` (and of every ``B_i``),
and the mixed blocks are concatenated back to full size. Mixing happens in
parameter space, so ``h = 1`` is exactly Poly and ``m = 1`` is plain LoRA.

Stacked inventories are arrays ``A: (m, d_out, r)`` and ``B: (m, d_in, r)``.
Per-sample mixing weights have shape ``(batch, m, h)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .errors import ConfigurationError, DimensionError
from .numeric import ParamStore, softmax


@dataclass(frozen=True)
class LoraPair:
    A: np.ndarray
    B: np.ndarray

    @property
    def rank(self) -> int:
        return self.A.shape[1]

    def delta(self) -> np.ndarray:
        """Dense ``d_out x d_in`` weight shift ``A B^T``."""
        return self.A @ self.B.T


@dataclass(frozen=True)
class AdapterInventory:
    A: np.ndarray  # (m, d_out, r)
    B: np.ndarray  # (m, d_in, r)

    def __post_init__(self):
        if self.A.ndim != 3 or self.B.ndim != 3:
            raise DimensionError("inventory stacks must be 3-d (m, d, r)")
        if self.A.shape[0] != self.B.shape[0] or self.A.shape[2] != self.B.shape[2]:
            raise DimensionError(f"inventory A {self.A.shape} and B {self.B.shape} disagree")
        if self.A.shape[0] < 1:
            raise DimensionError("inventory needs at least one module")

    @classmethod
    def from_pairs(cls, pairs: Sequence[LoraPair]) -> "AdapterInventory":
        return cls(np.stack([p.A for p in pairs]), np.stack([p.B for p in pairs]))

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def rank(self) -> int:
        return self.A.shape[2]

    @property
    def d_out(self) -> int:
        return self.A.shape[1]

    @property
    def d_in(self) -> int:
        return self.B.shape[1]

    def parameter_count(self) -> int:
        return self.A.size + self.B.size

    def pair(self, i: int) -> LoraPair:
        return LoraPair(self.A[i], self.B[i])


@dataclass(frozen=True)
class StyleVector:
    logits: np.ndarray  # (m, h)
    player_id: Hashable = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.logits.shape

    def mixing_weights(self) -> np.ndarray:
        return softmax(self.logits, axis=0)

    def flat(self) -> np.ndarray:
        return self.logits.reshape(-1)


@dataclass(frozen=True)
class RoutingTensor:
    """Rows of style logits, one per task; row order is the player index."""

    rows: np.ndarray  # (T, m, h)
    player_ids: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.rows.ndim != 3:
            raise DimensionError(f"routing tensor must be 3-d, got {self.rows.shape}")
        if len(self.player_ids) != self.rows.shape[0]:
            raise DimensionError("one player id per routing row required")

    @classmethod
    def empty(cls, m: int, h: int, dtype=np.float32) -> "RoutingTensor":
        return cls(np.zeros((0, m, h), dtype=dtype), ())

    def __len__(self) -> int:
        return self.rows.shape[0]

    def row(self, index: int) -> StyleVector:
        return StyleVector(self.rows[index].copy(), self.player_ids[index])

    def index_of(self, player_id) -> int:
        try:
            return self.player_ids.index(player_id)
        except ValueError:
            raise KeyError(f"no routing row for player {player_id!r}") from None

    def vectors(self) -> list[StyleVector]:
        return [self.row(i) for i in range(len(self))]


def append_task_row(
    routing: RoutingTensor,
    init: str = "gaussian",
    sigma: float = 0.01,
    rng: np.random.Generator | None = None,
    player_id=None,
) -> tuple[RoutingTensor, int]:
    """Return a new tensor with one extra row, plus that row's index."""
    _, m, h = routing.rows.shape
    if init == "zeros":
        new = np.zeros((1, m, h), dtype=routing.rows.dtype)
    elif init == "gaussian":
        if rng is None:
            raise ConfigurationError("gaussian routing init needs an explicit RNG stream")
        new = (sigma * rng.standard_normal((1, m, h))).astype(routing.rows.dtype)
    else:
        raise ConfigurationError(f"unknown routing init {init!r}")
    rows = np.concatenate([routing.rows, new], axis=0)
    return RoutingTensor(rows, routing.player_ids + (player_id,)), len(routing)


def _check_heads(d: int, h: int) -> None:
    if h < 1 or d % h:
        raise ConfigurationError(f"head count {h} does not divide dimension {d}")


def mix_stack(stack: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Per-head convex mixing of a ``(m, d, r)`` stack.

    ``weights`` is ``(m, h)`` for one task or ``(b, m, h)`` per sample;
    returns ``(d, r)`` or ``(b, d, r)``.
    """
    m, d, r = stack.shape
    h = weights.shape[-1]
    _check_heads(d, h)
    if weights.shape[-2] != m:
        raise DimensionError(f"weights over {weights.shape[-2]} modules, inventory has {m}")
    blocks = stack.reshape(m, h, d // h, r)
    if weights.ndim == 2:
        out = np.empty((h, d // h, r), dtype=np.result_type(stack, weights))
        for k in range(h):
            out[k] = np.tensordot(weights[:, k], blocks[:, k], axes=(0, 0))
        return out.reshape(d, r)
    b = weights.shape[0]
    out = np.empty((b, h, (d // h) * r), dtype=np.result_type(stack, weights))
    for k in range(h):
        out[:, k] = weights[:, :, k] @ blocks[:, k].reshape(m, -1)
    return out.reshape(b, d, r)


def mix_stack_backward(stack: np.ndarray, weights: np.ndarray, dmixed: np.ndarray):
    """Gradients of :func:`mix_stack` w.r.t. the stack and the weights."""
    m, d, r = stack.shape
    h = weights.shape[-1]
    blocks = stack.reshape(m, h, -1)
    dstack = np.empty_like(blocks)
    dweights = np.empty_like(weights)
    if weights.ndim == 2:
        dm = dmixed.reshape(h, -1)
        for k in range(h):
            dstack[:, k] = weights[:, k, None] * dm[k][None, :]
            dweights[:, k] = blocks[:, k] @ dm[k]
    else:
        b = weights.shape[0]
        dm = dmixed.reshape(b, h, -1)
        for k in range(h):
            dstack[:, k] = weights[:, :, k].T @ dm[:, k]
            dweights[:, :, k] = dm[:, k] @ blocks[:, k].T
    return dstack.reshape(m, d, r), dweights


def softmax_backward(weights: np.ndarray, dweights: np.ndarray) -> np.ndarray:
    """Logit gradient for a softmax taken over the module axis (-2)."""
    return weights * (dweights - (weights * dweights).sum(axis=-2, keepdims=True))


def mix_poly(inventory: AdapterInventory, logits: np.ndarray) -> LoraPair:
    logits = np.asarray(logits)
    if logits.shape != (inventory.m,):
        raise DimensionError(f"{logits.shape[0] if logits.ndim else 0} logits for {inventory.m} modules")
    alpha = softmax(logits)
    A = np.tensordot(alpha, inventory.A, axes=(0, 0))
    B = np.tensordot(alpha, inventory.B, axes=(0, 0))
    return LoraPair(A, B)


def mix_mhr(inventory: AdapterInventory, style: StyleVector | np.ndarray) -> LoraPair:
    logits = style.logits if isinstance(style, StyleVector) else np.asarray(style)
    if logits.ndim != 2 or logits.shape[0] != inventory.m:
        raise DimensionError(f"style shape {logits.shape} for {inventory.m} modules")
    h = logits.shape[1]
    _check_heads(inventory.d_out, h)
    _check_heads(inventory.d_in, h)
    if h == 1:
        return mix_poly(inventory, logits[:, 0])
    alpha = softmax(logits, axis=0)
    return LoraPair(mix_stack(inventory.A, alpha), mix_stack(inventory.B, alpha))


@dataclass
class MhrLayer:
    """Frozen linear map plus a routed adapter inventory.

    The style vector is supplied per call, so one inventory serves every
    player and all layers of a network can share the same routing.
    """

    W0: np.ndarray  # (d_out, d_in)
    bias: np.ndarray | None
    inventory: AdapterInventory
    heads: int

    def __post_init__(self):
        d_out, d_in = self.W0.shape
        if (self.inventory.d_out, self.inventory.d_in) != (d_out, d_in):
            raise DimensionError(
                f"inventory ({self.inventory.d_out}x{self.inventory.d_in}) does not fit W0 {self.W0.shape}"
            )
        _check_heads(d_out, self.heads)
        _check_heads(d_in, self.heads)


def adapted_forward(layer: MhrLayer, style: StyleVector | None, x: np.ndarray) -> np.ndarray:
    """``x (W0 + A B^T)^T + bias`` with ``(A, B)`` mixed by ``style``."""
    if x.ndim != 2 or x.shape[1] != layer.W0.shape[1]:
        raise DimensionError(f"input {x.shape} for layer with d_in={layer.W0.shape[1]}")
    y = x @ layer.W0.T
    if layer.bias is not None:
        y = y + layer.bias
    if style is None:
        return y
    if style.logits.shape[1] != layer.heads:
        raise DimensionError(f"style has {style.logits.shape[1]} heads, layer expects {layer.heads}")
    pair = mix_mhr(layer.inventory, style)
    return y + (x @ pair.B) @ pair.A.T


TRAINING_MODES = ("full_finetune", "routing_only", "base")


def set_training_mode(mode: str, params: ParamStore, rows=None) -> ParamStore:
    """Set trainability by group.

    ``base`` trains the backbone only; ``full_finetune`` freezes it and
    trains adapters and routing; ``routing_only`` trains only the routing
    rows listed in ``rows`` (all rows when ``rows`` is None).
    """
    for g in ("base", "adapter", "routing"):
        if not params.names(g):
            raise ConfigurationError(f"parameter store lacks group {g!r}")
    routing_flag = True if rows is None else np.asarray(rows, dtype=np.int64)
    if mode == "base":
        flags = {"base": True, "adapter": False, "routing": False}
    elif mode == "full_finetune":
        flags = {"base": False, "adapter": True, "routing": routing_flag}
    elif mode == "routing_only":
        flags = {"base": False, "adapter": False, "routing": routing_flag}
    else:
        raise ConfigurationError(f"unknown training mode {mode!r}")
    for g, f in flags.items():
        params.set_group_trainable(g, f)
    return params
