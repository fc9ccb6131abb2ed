"""Base training, MHR fine-tuning, routing-only few-shot fitting, evaluation."""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import rng as rngmod
from .errors import ArgumentError, TrainingDiverged
from .numeric import ParamStore, _row_mask, adam_step, cross_entropy_with_grad
from .policy import NetConfig, PolicyNet
from .population import PlayerDataset
from .routing import RoutingTensor, StyleVector, append_task_row, set_training_mode

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptConfig:
    base_lr: float = 1e-3
    adapter_lr: float = 1e-3
    routing_lr: float = 1e-2
    batch_size: int = 256
    base_epochs: int = 20
    finetune_epochs: int = 30
    fewshot_epochs: int = 50
    patience: int = 5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    routing_init_sigma: float = 0.01
    fewshot_parallel: int = 16
    # update only the routing rows present in each minibatch
    lazy_routing: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainReport:
    curve: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    epochs_run: int = 0
    summary: dict = field(default_factory=dict)


def _pool(datasets, part: str, with_rows: bool):
    xs, ys, rows = [], [], []
    for i, ds in enumerate(datasets):
        x, y = ds.part(part)
        xs.append(x)
        ys.append(y)
        if with_rows:
            rows.append(np.full(len(y), i, dtype=np.int64))
    if not xs or sum(len(y) for y in ys) == 0:
        raise ArgumentError(f"no samples in the pooled {part} partition")
    x, y = np.concatenate(xs), np.concatenate(ys)
    return x, y, (np.concatenate(rows) if with_rows else None)


def _evaluate(net: PolicyNet, x, y, style, chunk: int = 8192) -> tuple[float, float]:
    loss_sum, correct = 0.0, 0
    for s in range(0, len(y), chunk):
        st = None if style is None else style[s:s + chunk]
        logits = net.forward(x[s:s + chunk], st)
        loss, _ = cross_entropy_with_grad(logits, y[s:s + chunk])
        loss_sum += loss * len(logits)
        correct += int((logits.argmax(axis=1) == y[s:s + chunk]).sum())
    return loss_sum / len(y), correct / len(y)


def _fit(net: PolicyNet, x, y, rows, lrs, groups, opt: OptConfig, epochs: int, rng: np.random.Generator,
         val=None, report: TrainReport | None = None) -> TrainReport:
    """Minibatch Adam with optional early stopping on ``val = (x, y, rows)``."""
    report = report or TrainReport()
    store = net.params
    best_loss, best_params, bad = np.inf, None, 0
    lazy = opt.lazy_routing and rows is not None and "routing" in groups
    if lazy:
        allowed = _row_mask(store.trainable["routing"], store.params["routing"].shape)
        allowed = np.ones(len(store.params["routing"]), bool) if allowed is None else allowed.ravel()
    for epoch in range(epochs):
        order = rng.permutation(len(y))
        loss_sum = 0.0
        correct = 0
        for s in range(0, len(y), opt.batch_size):
            b = order[s:s + opt.batch_size]
            logits, cache = net.forward(x[b], None if rows is None else rows[b], keep_cache=True)
            loss, dlogits = cross_entropy_with_grad(logits, y[b])
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch starting {s}")
            grads = net.backward(cache, dlogits, groups)
            if lazy:
                present = np.unique(rows[b])
                store.trainable["routing"] = present[allowed[present]]
            adam_step(store, grads, lrs, opt.beta1, opt.beta2, opt.eps)
            loss_sum += loss * len(b)
            correct += int((logits.argmax(axis=1) == y[b]).sum())
        report.curve.append({"epoch": epoch, "split": "train", "loss": loss_sum / len(y), "accuracy": correct / len(y)})
        report.epochs_run = epoch + 1
        if val is None:
            continue
        vl, va = _evaluate(net, val[0], val[1], val[2])
        report.curve.append({"epoch": epoch, "split": "validation", "loss": vl, "accuracy": va})
        log.info("epoch %d train %.4f val %.4f acc %.4f", epoch, loss_sum / len(y), vl, va)
        if vl < best_loss - 1e-6:
            best_loss, bad, report.best_epoch = vl, 0, epoch
            best_params = {k: v.copy() for k, v in store.params.items()}
        else:
            bad += 1
            if bad >= opt.patience:
                break
    if lazy:
        store.trainable["routing"] = np.flatnonzero(allowed)
    if best_params is not None:
        store.params.update(best_params)
    return report


def new_net(net_cfg: NetConfig, seed: int) -> PolicyNet:
    return PolicyNet.create(net_cfg, rngmod.stream(seed, "net-init"), rngmod.stream(seed, "adapter-init"))


def train_base(datasets, net_cfg: NetConfig, opt: OptConfig, seed: int) -> tuple[PolicyNet, TrainReport]:
    """Behavioral cloning on the union of the base players' train partitions."""
    datasets = list(datasets)
    x, y, _ = _pool(datasets, "train", False)
    xv, yv, _ = _pool(datasets, "validation", False)
    net = new_net(net_cfg, seed)
    set_training_mode("base", net.params)
    net.params.reset_optimizer()
    report = _fit(net, x, y, None, {"base": opt.base_lr}, ("base",), opt, opt.base_epochs,
                  rngmod.stream(seed, "base-train"), val=(xv, yv, None))
    xt, yt, _ = _pool(datasets, "test", False)
    report.summary = {"pooled_test_accuracy": _evaluate(net, xt, yt, None)[1],
                      "train_samples": int(len(y))}
    net.params.reset_optimizer()
    return net, report


def finetune_mhr(net: PolicyNet, datasets, opt: OptConfig, seed: int,
                 routing_init: str = "gaussian") -> tuple[PolicyNet, TrainReport]:
    """Freeze the backbone; learn adapters and one routing row per player.

    Returns a new network; the input network is not modified.
    """
    datasets = list(datasets)
    if opt.routing_lr <= opt.adapter_lr:
        warnings.warn("routing learning rate is not above the adapter learning rate", stacklevel=2)
    net = clone_net(net)
    routing = RoutingTensor(net.params["routing"], tuple(net.routing_ids))
    g = rngmod.stream(seed, "routing-init")
    first = len(routing)
    for ds in datasets:
        routing, _ = append_task_row(routing, routing_init, opt.routing_init_sigma, g, ds.player_id)
    net.params.params["routing"] = routing.rows
    net.routing_ids = list(routing.player_ids)
    x, y, rows = _pool(datasets, "train", True)
    xv, yv, rows_v = _pool(datasets, "validation", True)
    rows, rows_v = rows + first, rows_v + first
    set_training_mode("full_finetune", net.params, rows=np.arange(first, len(routing)))
    net.params.reset_optimizer()
    lrs = {"base": 0.0, "adapter": opt.adapter_lr, "routing": opt.routing_lr}
    report = _fit(net, x, y, rows, lrs, ("adapter", "routing"), opt, opt.finetune_epochs,
                  rngmod.stream(seed, "finetune"), val=(xv, yv, rows_v))
    net.params.reset_optimizer()
    return net, report


def clone_net(net: PolicyNet) -> PolicyNet:
    return PolicyNet(net.cfg, net.params.copy(), net.routing_ids)


def fewshot_fit_many(net: PolicyNet, game_sets, names, opt: OptConfig, seed: int) -> list[StyleVector]:
    """Routing-only fits of new style rows, one per game set.

    Fits advance in lockstep within groups of ``opt.fewshot_parallel``, but
    each uses its own init stream, shuffling stream and batch schedule, and
    only active fits' rows are updated, so every result matches a solitary
    fit up to floating-point summation order. ``net`` is left unchanged.
    """
    game_sets, names = list(game_sets), list(names)
    if len(game_sets) != len(names):
        raise ArgumentError("one name per game set required")
    out: list[StyleVector] = []
    for g0 in range(0, len(game_sets), max(1, opt.fewshot_parallel)):
        group = list(zip(game_sets[g0:g0 + opt.fewshot_parallel], names[g0:g0 + opt.fewshot_parallel]))
        out.extend(_fewshot_group(net, group, opt, seed))
    return out


def _fewshot_group(net: PolicyNet, group, opt: OptConfig, seed: int) -> list[StyleVector]:
    work = clone_net(net)
    base_rows = len(work.routing_ids)
    routing = RoutingTensor(work.params["routing"], tuple(work.routing_ids))
    data, schedules, rngs = [], [], []
    for i, (ds, name) in enumerate(group):
        x, y = (ds.states, ds.actions) if isinstance(ds, PlayerDataset) else ds
        if len(y) == 0:
            raise ArgumentError(f"few-shot fit {name!r} has no samples")
        routing, _ = append_task_row(routing, "gaussian", opt.routing_init_sigma,
                                     rngmod.stream(seed, f"fewshot-init/{name}"), name)
        data.append((x, y))
        rngs.append(rngmod.stream(seed, f"fewshot/{name}"))
        schedules.append(None)
    work.params.params["routing"] = routing.rows
    work.routing_ids = list(routing.player_ids)
    set_training_mode("routing_only", work.params, rows=[])
    work.params.reset_optimizer()
    # each fit's flat list of minibatches over all epochs
    for i, (x, y) in enumerate(data):
        batches = []
        for _ in range(opt.fewshot_epochs):
            order = rngs[i].permutation(len(y))
            batches.extend(order[s:s + opt.batch_size] for s in range(0, len(y), opt.batch_size))
        schedules[i] = batches
    n_steps = max(len(b) for b in schedules)
    lrs = {"base": 0.0, "adapter": 0.0, "routing": opt.routing_lr}
    for t in range(n_steps):
        active = [i for i in range(len(group)) if t < len(schedules[i])]
        xs, ys, rows, wts = [], [], [], []
        for i in active:
            b = schedules[i][t]
            xs.append(data[i][0][b])
            ys.append(data[i][1][b])
            rows.append(np.full(len(b), base_rows + i, dtype=np.int64))
            wts.append(np.full(len(b), 1.0 / len(b), dtype=np.float32))
        x, y, r, w = map(np.concatenate, (xs, ys, rows, wts))
        logits, cache = work.forward(x, r, keep_cache=True)
        loss, dlogits = cross_entropy_with_grad(logits, y, w)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"non-finite few-shot loss at step {t}")
        grads = work.backward(cache, dlogits, ("routing",))
        work.params.trainable["routing"] = np.array([base_rows + i for i in active], dtype=np.int64)
        adam_step(work.params, grads, lrs, opt.beta1, opt.beta2, opt.eps)
    rows = work.params["routing"]
    return [StyleVector(rows[base_rows + i].copy(), name) for i, (_, name) in enumerate(group)]


def fewshot_fit(net: PolicyNet, games, opt: OptConfig, seed: int, name="fewshot") -> StyleVector:
    """Fit one new style row on ``games`` with everything else frozen."""
    return fewshot_fit_many(net, [games], [name], opt, seed)[0]


@dataclass
class PlayerEval:
    per_player: dict
    mean: float
    minimum: float
    maximum: float


def eval_per_player(net: PolicyNet, datasets, part: str = "test", use_routing: bool = True,
                    styles: dict | None = None) -> PlayerEval:
    """Per-player move-matching accuracy and the unweighted mean.

    Each player is conditioned on their routing row (``use_routing``), on an
    explicit entry of ``styles``, or on nothing (base model).
    """
    accs = {}
    for ds in datasets:
        x, y = ds.part(part)
        if len(y) == 0:
            raise ArgumentError(f"player {ds.player_id} has an empty {part} partition")
        if styles is not None:
            style = styles[ds.player_id]
        elif use_routing:
            if ds.player_id not in net.routing_ids:
                raise KeyError(f"no routing row for player {ds.player_id!r}")
            style = StyleVector(net.params["routing"][net.routing_ids.index(ds.player_id)], ds.player_id)
        else:
            style = None
        logits = net.logits_in_chunks(x, style)
        accs[ds.player_id] = float(np.mean(logits.argmax(axis=1) == y))
    vals = np.array(list(accs.values()))
    return PlayerEval(accs, float(vals.mean()), float(vals.min()), float(vals.max()))
