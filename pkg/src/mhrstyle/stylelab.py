"""Analyses over style vectors: identification, consistency, steering,
interpolation and merging."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from . import gridsoccer as gs
from . import rng as rngmod
from .errors import ArgumentError, DimensionError
from .numeric import softmax
from .policy import PolicyNet
from .routing import RoutingTensor, StyleVector


def _flat(v) -> np.ndarray:
    if isinstance(v, StyleVector):
        return v.flat().astype(np.float64)
    return np.asarray(v, dtype=np.float64).reshape(-1)


def cosine_similarity(u, v) -> float:
    a, b = _flat(u), _flat(v)
    if a.shape != b.shape:
        raise DimensionError(f"cosine of vectors with {a.size} and {b.size} entries")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ArgumentError("cosine similarity of a zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def cosine_matrix(queries, universe) -> np.ndarray:
    Q = np.stack([_flat(q) for q in queries])
    U = np.stack([_flat(u) for u in universe])
    if Q.shape[1] != U.shape[1]:
        raise DimensionError(f"query dim {Q.shape[1]} vs universe dim {U.shape[1]}")
    qn, un = np.linalg.norm(Q, axis=1), np.linalg.norm(U, axis=1)
    if (qn == 0).any() or (un == 0).any():
        raise ArgumentError("cosine similarity of a zero vector")
    return np.clip((Q / qn[:, None]) @ (U / un[:, None]).T, -1.0, 1.0)


# ---------------------------------------------------------------------------
# stylometry


@dataclass
class StylometryResult:
    true_ids: list
    predicted: list
    ranks: np.ndarray
    scores: np.ndarray  # (queries, universe)
    universe_ids: list
    roc: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    @property
    def top1(self) -> float:
        return float(np.mean(self.ranks == 1))

    def topk(self, k: int) -> float:
        return float(np.mean(self.ranks <= k))


def stylometry_identify(queries: Sequence[StyleVector], universe: RoutingTensor,
                        true_ids: Sequence | None = None) -> StylometryResult:
    """Rank every universe row by cosine to each query.

    Ties go to the lowest universe index. ``true_ids`` defaults to the
    queries' own player ids.
    """
    if len(universe) == 0:
        raise ArgumentError("empty stylometry universe")
    true_ids = list(true_ids) if true_ids is not None else [q.player_id for q in queries]
    ids = list(universe.player_ids)
    S = cosine_matrix(queries, list(universe.rows))
    predicted, ranks = [], []
    idx = np.arange(S.shape[1])
    for q, row in enumerate(S):
        order = np.lexsort((idx, -row))
        predicted.append(ids[order[0]])
        t = ids.index(true_ids[q]) if true_ids[q] in ids else None
        ranks.append(int(np.flatnonzero(order == t)[0]) + 1 if t is not None else len(ids) + 1)
    genuine, impostor = _split_scores(S, true_ids, ids)
    return StylometryResult(true_ids, predicted, np.array(ranks), S, ids, roc_curve(genuine, impostor))


def _split_scores(S, true_ids, ids):
    genuine, impostor = [], []
    for q, row in enumerate(S):
        for j, pid in enumerate(ids):
            (genuine if pid == true_ids[q] else impostor).append(row[j])
    return np.array(genuine), np.array(impostor)


def roc_curve(genuine: np.ndarray, impostor: np.ndarray) -> np.ndarray:
    """(false-positive rate, true-positive rate) over a threshold sweep.

    Starts at (0, 0) with the threshold above every score and ends at (1, 1).
    """
    genuine, impostor = np.asarray(genuine, float), np.asarray(impostor, float)
    thresholds = np.unique(np.concatenate([genuine, impostor]))[::-1]
    pts = [(0.0, 0.0)]
    for t in thresholds:
        fpr = float(np.mean(impostor >= t)) if len(impostor) else 1.0
        tpr = float(np.mean(genuine >= t)) if len(genuine) else 1.0
        pts.append((fpr, tpr))
    pts.append((1.0, 1.0))
    return np.array(pts)


# ---------------------------------------------------------------------------
# consistency and merging


@dataclass
class ConsistencyResult:
    within: np.ndarray
    cross: np.ndarray
    mannwhitney_p: float

    @property
    def mean_within(self) -> float:
        return float(self.within.mean())

    @property
    def mean_cross(self) -> float:
        return float(self.cross.mean())

    @property
    def within_exceeds_cross(self) -> bool:
        return self.mean_within > self.mean_cross


def consistency_within(split_vectors: dict) -> ConsistencyResult:
    """Compare style vectors fit on disjoint splits of each player's games.

    ``split_vectors`` maps player id to the list of per-split vectors.
    Within-player pairs are all pairs of one player's splits; cross-player
    pairs are all pairs of splits from different players (no self-pairs).
    """
    if any(len(v) < 2 for v in split_vectors.values()):
        raise ArgumentError("consistency needs at least 2 splits per player")
    owners, vecs = [], []
    for pid, vs in split_vectors.items():
        owners += [pid] * len(vs)
        vecs += list(vs)
    S = cosine_matrix(vecs, vecs)
    owners = np.array([str(o) for o in owners])
    iu = np.triu_indices(len(vecs), k=1)
    same = owners[iu[0]] == owners[iu[1]]
    within, cross = S[iu][same], S[iu][~same]
    p = float(stats.mannwhitneyu(within, cross, alternative="greater").pvalue) if len(cross) else 1.0
    return ConsistencyResult(within, cross, p)


@dataclass
class MergeResult:
    pair: tuple
    cos_to_average: float
    cos_to_random: float
    cos_to_each: tuple


def average_style(a, b) -> np.ndarray:
    return (_flat(a) + _flat(b)) / 2.0


def merge_consistency(merged: StyleVector, za, zb, random_row) -> MergeResult:
    """Cosine of the merged-data fit to the logit average and to a random row."""
    avg = average_style(za, zb)
    return MergeResult(
        (getattr(za, "player_id", None), getattr(zb, "player_id", None)),
        cosine_similarity(merged, avg), cosine_similarity(merged, random_row),
        (cosine_similarity(merged, za), cosine_similarity(merged, zb)),
    )


# ---------------------------------------------------------------------------
# steering


@dataclass(frozen=True)
class StyleDelta:
    delta: np.ndarray
    attribute: str
    k: int


def style_delta(top_players, population, attribute: str = "") -> StyleDelta:
    """Mean of the selected players' logits minus the population mean."""
    X = [np.asarray(v.logits if isinstance(v, StyleVector) else v, dtype=np.float64) for v in top_players]
    P = [np.asarray(v.logits if isinstance(v, StyleVector) else v, dtype=np.float64) for v in population]
    if not X or not P:
        raise ArgumentError("style delta needs nonempty selected and population sets")
    return StyleDelta(np.mean(X, axis=0) - np.mean(P, axis=0), attribute, len(X))


def steer(style: StyleVector, delta: StyleDelta, strength: float = 1.0) -> StyleVector:
    if style.logits.shape != delta.delta.shape:
        raise DimensionError(f"style {style.logits.shape} vs delta {delta.delta.shape}")
    return StyleVector(style.logits + strength * delta.delta.astype(style.logits.dtype), style.player_id)


def select_top_attribute_players(profiles: dict, attribute: str, threshold_std: float) -> list:
    """Players whose attribute exceeds mean + threshold_std * std."""
    if attribute not in gs.ATTRIBUTES:
        raise ArgumentError(f"unknown attribute {attribute!r}")
    ids = list(profiles)
    vals = np.array([getattr(profiles[i], attribute) for i in ids])
    cut = vals.mean() + threshold_std * vals.std()
    chosen = [i for i, v in zip(ids, vals) if v > cut or threshold_std == -np.inf]
    if not chosen:
        raise ArgumentError(f"no player exceeds {threshold_std} std on {attribute}; lower the threshold")
    return chosen


def net_chooser(net: PolicyNet, style) -> gs.Chooser:
    """Greedy legal action of the conditioned model."""

    def choose(states: gs.StateBatch) -> np.ndarray:
        feats = gs.encode_batch(states, states.side)
        logits = net.logits_in_chunks(feats, style)
        legal = gs.to_canonical(gs.successors(states), states.side).legal
        return np.argmax(np.where(legal, logits, -np.inf), axis=1)

    return choose


def profile_model(net: PolicyNet, style, probe: gs.StateBatch) -> gs.AttributeProfile:
    return gs.probe_attributes(net_chooser(net, style), probe)


def profile_many(net: PolicyNet, styles: dict, probe: gs.StateBatch) -> dict:
    """Attribute profiles for many styles with one batched forward pass."""
    ids = list(styles)
    if not ids:
        return {}
    table = np.stack([np.asarray(styles[i].logits if isinstance(styles[i], StyleVector) else styles[i])
                      for i in ids])
    n = len(probe)
    feats_all, legal = gs.action_features(probe)
    x = gs.encode_batch(probe, probe.side)
    out = {}
    for c0 in range(0, len(ids), 16):
        chunk = table[c0:c0 + 16]
        index = np.repeat(np.arange(len(chunk)), n)
        logits = net.logits_in_chunks(np.tile(x, (len(chunk), 1)), (chunk, index), chunk=65536)
        for j in range(len(chunk)):
            lg = logits[j * n:(j + 1) * n]
            act = np.argmax(np.where(legal, lg, -np.inf), axis=1)
            out[ids[c0 + j]] = gs.AttributeProfile.from_array(feats_all[np.arange(n), act].mean(axis=0))
    return out


# ---------------------------------------------------------------------------
# match play between conditioned models


class NetAgents:
    """Conditioned model as a match policy; ``styles[game]`` picks the style.

    ``styles`` is a ``(table, index)`` pair: ``table`` rows are style logits,
    ``index[g]`` the row used in game ``g``.
    """

    def __init__(self, net: PolicyNet, table: np.ndarray, index: np.ndarray, temperature: float = 1.0):
        self.net = net
        self.table = np.asarray(table)
        self.index = np.asarray(index, dtype=np.int64)
        self.temperature = temperature

    def __call__(self, states: gs.StateBatch, games: np.ndarray) -> np.ndarray:
        feats = gs.encode_batch(states, states.side)
        idx = self.index[games]
        used, inv = np.unique(idx, return_inverse=True)
        logits = self.net.forward(feats, (self.table[used], inv.reshape(-1))).astype(np.float64)
        legal = gs.to_canonical(gs.successors(states), states.side).legal
        return softmax(np.where(legal, logits / self.temperature, -np.inf), axis=1)


def play_styles(net: PolicyNet, table: np.ndarray, a_index: np.ndarray, b_index: np.ndarray,
                seed: int, name: str, temperature: float = 1.0) -> np.ndarray:
    """Score of style ``a`` per game against style ``b``; ``a`` is L in even games."""
    n = len(a_index)
    g = np.arange(n)
    seat_a_l = g % 2 == 0
    idx_l = np.where(seat_a_l, a_index, b_index)
    idx_r = np.where(seat_a_l, b_index, a_index)
    keys = rngmod.game_keys(seed, name, g)
    res = gs.play_games(NetAgents(net, table, idx_l, temperature), NetAgents(net, table, idx_r, temperature), keys)
    s_l = res.score_l()
    return np.where(seat_a_l, s_l, 1.0 - s_l)


def round_robin(net: PolicyNet, styles: dict, games_per_pair: int, seed: int) -> dict:
    """Mean score of each style over all pairings (draws count half)."""
    ids = list(styles)
    table = np.stack([styles[i].logits if isinstance(styles[i], StyleVector) else styles[i] for i in ids])
    a_idx, b_idx = [], []
    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            a_idx += [i] * games_per_pair
            b_idx += [j] * games_per_pair
    a_idx, b_idx = np.array(a_idx), np.array(b_idx)
    scores = play_styles(net, table, a_idx, b_idx, seed, "round-robin")
    total = np.zeros(len(ids))
    count = np.zeros(len(ids))
    np.add.at(total, a_idx, scores)
    np.add.at(total, b_idx, 1.0 - scores)
    np.add.at(count, a_idx, 1)
    np.add.at(count, b_idx, 1)
    return {pid: float(total[k] / count[k]) for k, pid in enumerate(ids)}


def interpolate_winrate(net: PolicyNet, u_w: StyleVector, u_s: StyleVector, lambdas, n_games: int,
                        seed: int, name: str = "interpolate") -> np.ndarray:
    """Win rate of ``(1 - lam) u_w + lam u_s`` against ``u_s`` for each lam."""
    return interpolate_many(net, [(u_w, u_s)], lambdas, n_games, seed, [name])[0]


def interpolate_many(net: PolicyNet, pairs, lambdas, n_games: int, seed: int, names=None) -> np.ndarray:
    """Win-rate curves ``(pairs, len(lambdas))``, all games in one batch."""
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if np.any((lambdas < 0) | (lambdas > 1)):
        raise ArgumentError("interpolation weights must lie in [0, 1]")
    if n_games < 100:
        raise ArgumentError("need at least 100 games per interpolation point")
    names = names or [f"interpolate/{k}" for k in range(len(pairs))]
    table, a_idx, b_idx, keys = [], [], [], []
    for p, (uw, us) in enumerate(pairs):
        w, s = np.asarray(uw.logits, np.float64), np.asarray(us.logits, np.float64)
        s_row = len(table)
        table.append(s)
        for li, lam in enumerate(lambdas):
            table.append((1 - lam) * w + lam * s)
            a_idx.append(np.full(n_games, len(table) - 1))
            b_idx.append(np.full(n_games, s_row))
            keys.append(rngmod.game_keys(seed, f"{names[p]}/{lam:.6f}", np.arange(n_games)))
    table = np.stack(table).astype(net.dtype)
    a_idx, b_idx, keys = map(np.concatenate, (a_idx, b_idx, keys))
    g = np.arange(len(a_idx))
    # seat alternates within each (pair, lambda) block
    seat_a_l = (g % n_games) % 2 == 0
    idx_l = np.where(seat_a_l, a_idx, b_idx)
    idx_r = np.where(seat_a_l, b_idx, a_idx)
    res = gs.play_games(NetAgents(net, table, idx_l), NetAgents(net, table, idx_r), keys)
    s_l = res.score_l()
    score = np.where(seat_a_l, s_l, 1.0 - s_l)
    return score.reshape(len(pairs), len(lambdas), n_games).mean(axis=2)


def binomial_halfwidth(p: float, n: int, z: float = 1.96) -> float:
    return z * np.sqrt(max(p * (1 - p), 1e-12) / n)
