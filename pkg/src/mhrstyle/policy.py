"""Residual-MLP behavioral-cloning policy with routed adapters in every block.

Each block computes ``x + fc2(relu(fc1(x)))`` where ``fc1`` and ``fc2`` are
MHR layers. All blocks share one style vector per sample. With no style the
adapters are skipped, which is the plain base model.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ArgumentError, ConfigurationError, DimensionError
from .numeric import ParamStore, softmax
from .routing import (
    AdapterInventory,
    MhrLayer,
    StyleVector,
    mix_stack,
    mix_stack_backward,
    softmax_backward,
)

N_ACTIONS = 9
# group samples by style when each distinct style covers this many samples on average
GROUPING_RATIO = 8


@dataclass(frozen=True)
class NetConfig:
    input_dim: int = 20
    width: int = 64
    blocks: int = 4
    hidden: int = 128
    actions: int = N_ACTIONS
    rank: int = 4
    modules: int = 8
    heads: int = 4

    def __post_init__(self):
        if self.blocks < 1 or self.rank < 1 or self.modules < 1:
            raise ConfigurationError("blocks, rank and modules must be positive")
        for d in (self.width, self.hidden):
            if self.heads < 1 or d % self.heads:
                raise ConfigurationError(f"heads={self.heads} must divide layer width {d}")

    def to_dict(self) -> dict:
        return asdict(self)


def _layer_names(l: int) -> tuple[str, str]:
    return f"blocks.{l}.fc1", f"blocks.{l}.fc2"


def init_params(cfg: NetConfig, rng_base: np.random.Generator, rng_adapter: np.random.Generator,
                dtype=np.float32) -> ParamStore:
    store = ParamStore()
    d, hid, m, r = cfg.width, cfg.hidden, cfg.modules, cfg.rank

    def he(shape, fan_in, scale=1.0):
        return (scale * np.sqrt(2.0 / fan_in) * rng_base.standard_normal(shape)).astype(dtype)

    store.add("in.W", he((d, cfg.input_dim), cfg.input_dim), "base")
    store.add("in.b", np.zeros(d, dtype), "base")
    for l in range(cfg.blocks):
        f1, f2 = _layer_names(l)
        store.add(f"{f1}.W0", he((hid, d), d), "base")
        store.add(f"{f1}.b", np.zeros(hid, dtype), "base")
        store.add(f"{f2}.W0", he((d, hid), hid, 1.0 / np.sqrt(2 * cfg.blocks)), "base")
        store.add(f"{f2}.b", np.zeros(d, dtype), "base")
    store.add("head.W", (np.sqrt(1.0 / d) * rng_base.standard_normal((cfg.actions, d))).astype(dtype), "base")
    store.add("head.b", np.zeros(cfg.actions, dtype), "base")
    a_std = np.sqrt(1.0 / r)
    for l in range(cfg.blocks):
        for name, (dout, din) in zip(_layer_names(l), ((hid, d), (d, hid))):
            store.add(f"{name}.A", (a_std * rng_adapter.standard_normal((m, dout, r))).astype(dtype), "adapter")
            store.add(f"{name}.B", np.zeros((m, din, r), dtype), "adapter")
    store.add("routing", np.zeros((0, m, cfg.heads), dtype), "routing")
    return store


class PolicyNet:
    """Forward/backward over a :class:`ParamStore` laid out by :func:`init_params`."""

    def __init__(self, cfg: NetConfig, params: ParamStore, routing_ids=None):
        self.cfg = cfg
        self.params = params
        self.routing_ids = list(routing_ids or [])

    @classmethod
    def create(cls, cfg: NetConfig, rng_base, rng_adapter, dtype=np.float32) -> "PolicyNet":
        return cls(cfg, init_params(cfg, rng_base, rng_adapter, dtype))

    @property
    def dtype(self):
        return self.params["in.W"].dtype

    def layer(self, name: str) -> MhrLayer:
        p = self.params
        return MhrLayer(p[f"{name}.W0"], p[f"{name}.b"],
                        AdapterInventory(p[f"{name}.A"], p[f"{name}.B"]), self.cfg.heads)

    def _style_table(self, style, n: int):
        """Resolve ``style`` to ``(table, index, rows)``.

        ``table`` holds the distinct style logits used by the batch, ``index``
        maps each sample to a table row (None when one style is shared) and
        ``rows`` are routing-row ids when the style came from the routing
        tensor.
        """
        if style is None:
            return None, None, None
        if isinstance(style, StyleVector):
            style = style.logits
        if isinstance(style, tuple):
            table, index = style
            table = np.asarray(table)
            index = np.asarray(index, dtype=np.int64)
            if index.shape != (n,):
                raise DimensionError(f"{index.shape} style indices for batch of {n}")
            self._check_style_shape(table, 3)
            return table.astype(self.dtype, copy=False), index, None
        style = np.asarray(style)
        if style.dtype.kind in "iu":
            if style.shape != (n,):
                raise DimensionError(f"{style.shape} routing row indices for batch of {n}")
            rows, index = np.unique(style, return_inverse=True)
            return self.params["routing"][rows], index.reshape(-1), rows
        if style.ndim == 2:
            self._check_style_shape(style, 2)
            return style.astype(self.dtype, copy=False), None, None
        self._check_style_shape(style, 3)
        if style.shape[0] != n:
            raise DimensionError(f"{style.shape[0]} per-sample styles for batch of {n}")
        return style.astype(self.dtype, copy=False), np.arange(n), None

    def _check_style_shape(self, style, ndim):
        if style.ndim != ndim or style.shape[-2:] != (self.cfg.modules, self.cfg.heads):
            raise DimensionError(f"style shape {style.shape}, expected (..., {self.cfg.modules}, {self.cfg.heads})")

    def forward(self, states: np.ndarray, style=None, keep_cache: bool = False):
        """Action logits ``(batch, actions)``.

        ``style`` is one of: None (base model); a :class:`StyleVector` or
        ``(m, h)`` array shared by the batch; a ``(batch, m, h)`` array; an
        integer array of routing-row indices; or a ``(table, index)`` pair
        selecting a row of ``table`` per sample.
        """
        p = self.params
        if states.ndim != 2 or states.shape[1] != self.cfg.input_dim:
            raise DimensionError(f"states {states.shape}, expected (batch, {self.cfg.input_dim})")
        x_in = states.astype(self.dtype, copy=False)
        n = x_in.shape[0]
        table, index, rows = self._style_table(style, n)
        alpha = None if table is None else softmax(table, axis=-2)
        order, groups = None, None
        if index is not None and len(alpha) * GROUPING_RATIO <= n:
            # few distinct styles: process contiguous groups with dense GEMMs
            order = np.argsort(index, kind="stable")
            sorted_index = index[order]
            starts = np.flatnonzero(np.r_[True, sorted_index[1:] != sorted_index[:-1]])
            ends = np.r_[starts[1:], n]
            groups = [(int(sorted_index[a]), slice(a, b)) for a, b in zip(starts, ends)]
            x_in = x_in[order]
        cache = {"x_in": x_in, "alpha": alpha, "index": index, "rows": rows, "layers": [],
                 "order": order, "groups": groups}
        x = x_in @ p["in.W"].T + p["in.b"]
        for l in range(self.cfg.blocks):
            f1, f2 = _layer_names(l)
            a1, c1 = self._mhr_forward(f1, x, alpha, index, groups)
            z = np.maximum(a1, 0)
            a2, c2 = self._mhr_forward(f2, z, alpha, index, groups)
            if keep_cache:
                cache["layers"].append((c1, a1 > 0, c2))
            x = x + a2
        hfin = np.maximum(x, 0)
        out = hfin @ p["head.W"].T + p["head.b"]
        if order is not None:
            unsorted = np.empty_like(out)
            unsorted[order] = out
            out = unsorted
        if keep_cache:
            cache["hfin"] = hfin
            return out, cache
        return out

    def _mhr_forward(self, name, x, alpha, index, groups=None):
        p = self.params
        y = x @ p[f"{name}.W0"].T + p[f"{name}.b"]
        if alpha is None:
            return y, {"x": x}
        At = mix_stack(p[f"{name}.A"], alpha)
        Bt = mix_stack(p[f"{name}.B"], alpha)
        if groups is not None:
            u = np.empty((len(x), At.shape[-1]), dtype=y.dtype)
            for k, sl in groups:
                u[sl] = x[sl] @ Bt[k]
                y[sl] += u[sl] @ At[k].T
        elif index is None:
            u = x @ Bt
            y = y + u @ At.T
        else:
            u = np.matmul(x[:, None, :], Bt[index])[:, 0, :]
            y = y + np.matmul(At[index], u[:, :, None])[:, :, 0]
        return y, {"x": x, "At": At, "Bt": Bt, "u": u}

    def _mhr_backward(self, name, c, g, alpha, index, onehot, need_params, grads, dalpha, groups=None):
        p = self.params
        x = c["x"]
        if need_params:
            grads[f"{name}.W0"] = g.T @ x
            grads[f"{name}.b"] = g.sum(axis=0)
        dx = g @ p[f"{name}.W0"]
        if alpha is None:
            return dx
        At, Bt, u = c["At"], c["Bt"], c["u"]
        if groups is not None:
            dAt = np.zeros_like(At)
            dBt = np.zeros_like(Bt)
            du = np.empty_like(u)
            for k, sl in groups:
                dAt[k] = g[sl].T @ u[sl]
                du[sl] = g[sl] @ At[k]
                dBt[k] = x[sl].T @ du[sl]
                dx[sl] += du[sl] @ Bt[k].T
        elif index is None:
            dAt = g.T @ u
            du = g @ At
            dBt = x.T @ du
            dx = dx + du @ Bt.T
        else:
            du = np.matmul(g[:, None, :], At[index])[:, 0, :]
            dx = dx + np.matmul(Bt[index], du[:, :, None])[:, :, 0]
            dAt = g[:, :, None] * u[:, None, :]
            dBt = x[:, :, None] * du[:, None, :]
            if onehot is not None:
                # reduce per-sample outer products onto the style table
                dAt = (onehot @ dAt.reshape(len(g), -1)).reshape(At.shape)
                dBt = (onehot @ dBt.reshape(len(g), -1)).reshape(Bt.shape)
        dA, da_A = mix_stack_backward(p[f"{name}.A"], alpha, dAt)
        dB, da_B = mix_stack_backward(p[f"{name}.B"], alpha, dBt)
        if need_params:
            grads[f"{name}.A"] = dA
            grads[f"{name}.B"] = dB
        dalpha += da_A + da_B
        return dx

    def backward(self, cache, dlogits: np.ndarray, groups=("base", "adapter", "routing")) -> dict:
        """Gradients for the requested parameter groups.

        Routing gradients go to ``"routing"`` when the forward used row
        indices, and otherwise to ``"style"`` with the shape of the style
        table (``(m, h)`` for a shared style).
        """
        p = self.params
        grads: dict[str, np.ndarray] = {}
        need_base = "base" in groups
        need_adapter = "adapter" in groups
        alpha, index, sgroups = cache["alpha"], cache["index"], cache["groups"]
        if cache["order"] is not None:
            dlogits = dlogits[cache["order"]]
        dalpha = None if alpha is None else np.zeros_like(alpha)
        onehot = None
        if index is not None and sgroups is None and not (len(alpha) == len(index) and np.array_equal(index, np.arange(len(index)))):
            onehot = np.zeros((alpha.shape[0], len(index)), dtype=alpha.dtype)
            onehot[index, np.arange(len(index))] = 1.0
        if need_base:
            grads["head.W"] = dlogits.T @ cache["hfin"]
            grads["head.b"] = dlogits.sum(axis=0)
        dx = (dlogits @ p["head.W"]) * (cache["hfin"] > 0)
        need_params = need_base or need_adapter
        for l in reversed(range(self.cfg.blocks)):
            f1, f2 = _layer_names(l)
            c1, relu_mask, c2 = cache["layers"][l]
            layer_grads: dict = {}
            dz = self._mhr_backward(f2, c2, dx, alpha, index, onehot, need_params, layer_grads, dalpha, sgroups)
            da1 = dz * relu_mask
            dx = dx + self._mhr_backward(f1, c1, da1, alpha, index, onehot, need_params, layer_grads, dalpha, sgroups)
            for k, v in layer_grads.items():
                if (need_adapter if k.endswith((".A", ".B")) else need_base):
                    grads[k] = v
        if need_base:
            grads["in.W"] = dx.T @ cache["x_in"]
            grads["in.b"] = dx.sum(axis=0)
        if alpha is not None and "routing" in groups:
            dlog = softmax_backward(alpha, dalpha)
            if cache["rows"] is not None:
                g = np.zeros_like(p["routing"])
                g[cache["rows"]] = dlog
                grads["routing"] = g
            else:
                grads["style"] = dlog
        return grads

    def logits_in_chunks(self, states: np.ndarray, style=None, chunk: int = 8192) -> np.ndarray:
        out = []
        for s in range(0, len(states), chunk):
            if isinstance(style, tuple):
                st = (style[0], np.asarray(style[1])[s:s + chunk])
            elif style is not None and not isinstance(style, StyleVector) and np.asarray(style).ndim in (1, 3):
                st = style[s:s + chunk]
            else:
                st = style
            out.append(self.forward(states[s:s + chunk], st))
        if not out:
            return np.zeros((0, self.cfg.actions), dtype=self.dtype)
        return np.concatenate(out)


def move_matching_accuracy(net: PolicyNet, style, states: np.ndarray, actions: np.ndarray) -> float:
    """Fraction of states whose argmax logit equals the recorded action."""
    if len(actions) == 0:
        raise ArgumentError("move-matching accuracy of an empty partition")
    logits = net.logits_in_chunks(states, style)
    return float(np.mean(np.argmax(logits, axis=1) == np.asarray(actions)))


ARGMAX_TEMPERATURE = 1e-4


def sample_from_logits(logits: np.ndarray, temperature: float, u: np.ndarray,
                       legal: np.ndarray | None = None) -> np.ndarray:
    """Inverse-CDF sampling from ``softmax(logits / T)`` per row.

    ``u`` holds one uniform draw per row. Below ``ARGMAX_TEMPERATURE`` the
    argmax is returned. Illegal entries (``legal == False``) get zero mass.
    """
    if temperature <= 0:
        raise ArgumentError("temperature must be positive")
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    if legal is not None:
        logits = np.where(legal, logits, -np.inf)
    if temperature < ARGMAX_TEMPERATURE:
        return np.argmax(logits, axis=1)
    probs = softmax(logits / temperature, axis=1)
    return sample_from_probs(probs, u)


def sample_from_probs(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs, axis=1)
    idx = (np.asarray(u)[:, None] * cdf[:, -1:] >= cdf).sum(axis=1)
    # never land on a zero-probability tail entry through rounding
    last_pos = probs.shape[1] - 1 - np.argmax(probs[:, ::-1] > 0, axis=1)
    return np.minimum(idx, last_pos)


def sample_action(net: PolicyNet, style, features: np.ndarray, temperature: float,
                  rng: np.random.Generator, legal: np.ndarray | None = None) -> int:
    """Sample one action for a single encoded state."""
    logits = net.forward(np.asarray(features).reshape(1, -1), style)
    lm = None if legal is None else np.asarray(legal).reshape(1, -1)
    return int(sample_from_logits(logits, temperature, rng.random(1), lm)[0])
