"""Synthetic players with known styles, their game logs, and data partitions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import gridsoccer as gs
from . import rng as rngmod
from .errors import ArgumentError, ConfigurationError
from .gridsoccer import StyleParams


@dataclass(frozen=True)
class PopulationConfig:
    n_base: int = 256
    n_finetune: int = 64
    n_fewshot: int = 16
    n_clusters: int = 8
    # cluster-centre prior
    # chasers and kickers are kept a minority so attribute tails exist
    chase_range: tuple = (-1.0, 1.0)
    goal_push_range: tuple = (0.0, 2.0)
    defend_range: tuple = (0.0, 2.0)
    kick_bias_range: tuple = (-4.0, 1.0)
    temperature_range: tuple = (0.1, 0.4)
    # per-player perturbation around the centre
    weight_sigma: float = 0.5
    temperature_sigma: float = 0.15
    min_games: int = 20
    max_games: int = 200
    reference_games: int = 100
    query_games: int = 100
    n_opponents: int = 8

    @property
    def n_players(self) -> int:
        return self.n_base + self.n_finetune + self.n_fewshot


@dataclass(frozen=True)
class PlayerSpec:
    player_id: int
    params: StyleParams
    cluster: int


def sample_population(n_players: int, n_clusters: int, seed: int,
                      cfg: PopulationConfig = PopulationConfig(),
                      weight_sigma: float | None = None,
                      temperature_sigma: float | None = None) -> list[PlayerSpec]:
    if not n_players >= n_clusters >= 1:
        raise ArgumentError("need n_players >= n_clusters >= 1")
    ws = cfg.weight_sigma if weight_sigma is None else weight_sigma
    ts = cfg.temperature_sigma if temperature_sigma is None else temperature_sigma
    g = rngmod.stream(seed, "population")
    centres = np.empty((n_clusters, 5))
    lo, hi = np.array([cfg.chase_range, cfg.goal_push_range, cfg.defend_range]).T
    centres[:, 0:3] = g.uniform(lo, hi, (n_clusters, 3))
    centres[:, 3] = g.uniform(*cfg.kick_bias_range, n_clusters)
    tlo, thi = cfg.temperature_range
    centres[:, 4] = np.exp(g.uniform(np.log(tlo), np.log(thi), n_clusters))
    clusters = np.arange(n_players) % n_clusters
    g.shuffle(clusters)
    params = centres[clusters].copy()
    params[:, 0:4] += ws * g.standard_normal((n_players, 4))
    params[:, 4] *= np.exp(ts * g.standard_normal(n_players))
    return [PlayerSpec(i, StyleParams.from_array(params[i]), int(clusters[i])) for i in range(n_players)]


def split_counts(n_games: int) -> tuple[int, int, int]:
    """Train/test/validation game counts for an 80/10/10 split."""
    if n_games < 10:
        raise ArgumentError(f"need at least 10 games for an 80/10/10 split, got {n_games}")
    k = max(1, int(np.floor(n_games / 10 + 0.5)))
    return n_games - 2 * k, k, k


PARTS = ("train", "test", "validation")


@dataclass
class PlayerDataset:
    """One player's (state, canonical action) pairs, grouped by game.

    Games are numbered ``0..n_games-1``; the first ``n_train`` games form the
    train partition, the next ``n_test`` the test partition, the rest
    validation.
    """

    player_id: int
    states: np.ndarray  # (n, 20) float32
    actions: np.ndarray  # (n,) int64
    game: np.ndarray  # (n,) game index
    n_games: int
    split: tuple[int, int, int] = field(default=(0, 0, 0))

    def __post_init__(self):
        if self.split == (0, 0, 0) and self.n_games >= 10:
            self.split = split_counts(self.n_games)

    def __len__(self) -> int:
        return len(self.actions)

    def game_range(self, part: str) -> tuple[int, int]:
        n_train, n_test, _ = self.split
        bounds = {"train": (0, n_train), "test": (n_train, n_train + n_test),
                  "validation": (n_train + n_test, self.n_games), "all": (0, self.n_games)}
        if part not in bounds:
            raise ArgumentError(f"unknown partition {part!r}")
        return bounds[part]

    def part(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.game_range(name)
        mask = (self.game >= lo) & (self.game < hi)
        return self.states[mask], self.actions[mask]

    def subset(self, games) -> "PlayerDataset":
        """Dataset restricted to ``games``, renumbered in the given order."""
        games = np.asarray(games, dtype=np.int64)
        remap = np.full(self.n_games, -1, dtype=np.int64)
        remap[games] = np.arange(len(games))
        new_game = remap[self.game]
        keep = new_game >= 0
        order = np.argsort(new_game[keep], kind="stable")
        out = PlayerDataset(self.player_id, self.states[keep][order], self.actions[keep][order],
                            new_game[keep][order], len(games),
                            split_counts(len(games)) if len(games) >= 10 else (len(games), 0, 0))
        return out


def merge_datasets(a: PlayerDataset, b: PlayerDataset, player_id=None) -> PlayerDataset:
    """Concatenate two game logs (b's games are numbered after a's)."""
    return PlayerDataset(
        player_id if player_id is not None else (a.player_id, b.player_id),
        np.concatenate([a.states, b.states]), np.concatenate([a.actions, b.actions]),
        np.concatenate([a.game, b.game + a.n_games]), a.n_games + b.n_games,
        (a.n_games + b.n_games, 0, 0),
    )


def merge_balanced(a: PlayerDataset, b: PlayerDataset) -> PlayerDataset:
    """Equal game counts from each player, concatenated in player-id order.

    The result does not depend on argument order.
    """
    n = min(a.n_games, b.n_games)
    a, b = sorted((a, b), key=lambda d: d.player_id)
    return merge_datasets(a.subset(np.arange(n)), b.subset(np.arange(n)))


def game_counts(population, seed: int, cfg: PopulationConfig = PopulationConfig()) -> dict[int, int]:
    """Per-player game counts, log-uniform between min_games and max_games."""
    g = rngmod.stream(seed, "game-counts")
    u = g.uniform(np.log(cfg.min_games), np.log(cfg.max_games + 1), len(population))
    return {p.player_id: int(np.clip(np.floor(np.exp(v)), cfg.min_games, cfg.max_games))
            for p, v in zip(population, u)}


def choose_opponents(population, seed: int, k: int) -> dict[int, list[PlayerSpec]]:
    """``k`` opponents per player, drawn across the whole population."""
    ids = np.array([p.player_id for p in population])
    by_id = {p.player_id: p for p in population}
    out = {}
    for p in population:
        g = rngmod.stream(seed, f"opponents/{p.player_id}")
        others = ids[ids != p.player_id]
        out[p.player_id] = [by_id[int(i)] for i in g.choice(others, size=min(k, len(others)), replace=False)]
    return out


def generate_many(jobs, seed: int, stream_name: str = "games", board: gs.Board = gs.DEFAULT_BOARD,
                  min_games: int = 10) -> dict[int, PlayerDataset]:
    """Generate datasets for several players in one lockstep batch.

    ``jobs`` is a sequence of ``(spec, opponents, n_games)``. The focal
    player takes seat L in even-numbered games and R in odd ones, and meets
    its opponents in rotation. Each game's randomness is keyed by
    ``(seed, stream_name, player, game)``, so results do not depend on how
    jobs are batched.
    """
    focal_p, opp_p, game_of, owner, seat, keys = [], [], [], [], [], []
    for spec, opponents, n_games in jobs:
        if n_games < min_games:
            raise ArgumentError(f"n_games must be >= {min_games}, got {n_games}")
        if not opponents:
            raise ArgumentError("at least one opponent required")
        idx = np.arange(n_games)
        keys.append(rngmod.game_keys(seed, f"{stream_name}/{spec.player_id}", idx))
        focal_p.append(np.repeat(spec.params.as_array()[None], n_games, axis=0))
        opp_p.append(np.stack([opponents[i % len(opponents)].params.as_array() for i in idx]))
        game_of.append(idx)
        owner.append(np.full(n_games, spec.player_id))
        seat.append(idx % 2)
    if not keys:
        return {}
    focal_p, opp_p = np.concatenate(focal_p), np.concatenate(opp_p)
    game_of, owner, seat = np.concatenate(game_of), np.concatenate(owner), np.concatenate(seat)
    params_l = np.where(seat[:, None] == gs.SIDE_L, focal_p, opp_p)
    params_r = np.where(seat[:, None] == gs.SIDE_L, opp_p, focal_p)
    res = gs.play_games(gs.ScriptedAgents(params_l), gs.ScriptedAgents(params_r), np.concatenate(keys),
                        board, record=True)
    mover = res.traj_ply % 2
    mine = mover == seat[res.traj_game]
    tg = res.traj_game[mine]
    order = np.lexsort((res.traj_ply[mine], tg))
    tg = tg[order]
    feats = res.traj_features[mine][order]
    acts = res.traj_canonical[mine][order]
    out = {}
    for spec, _, n_games in jobs:
        sel = owner[tg] == spec.player_id
        out[spec.player_id] = PlayerDataset(spec.player_id, feats[sel].astype(np.float32),
                                            acts[sel].astype(np.int64), game_of[tg[sel]].astype(np.int64),
                                            n_games)
    return out


def generate_games(spec: PlayerSpec, opponents, n_games: int, seed: int,
                   stream_name: str = "games", board: gs.Board = gs.DEFAULT_BOARD) -> PlayerDataset:
    return generate_many([(spec, opponents, n_games)], seed, stream_name, board)[spec.player_id]


@dataclass
class PopulationPartition:
    base: list[int]
    finetune: list[int]
    fewshot: list[int]
    reference: dict[int, np.ndarray]  # few-shot player -> game indices
    query: dict[int, np.ndarray]


def make_partition(population, cfg: PopulationConfig, seed: int) -> PopulationPartition:
    """Split players into base / fine-tuning / few-shot sets.

    Few-shot players get ``reference_games + query_games`` games; the first
    block is the reference set and the second the query set.
    """
    need = cfg.n_base + cfg.n_finetune + cfg.n_fewshot
    if len(population) < need:
        raise ConfigurationError(f"population of {len(population)} cannot supply {need} players")
    if cfg.n_finetune < 1 or cfg.n_fewshot < 0 or cfg.n_base < 1:
        raise ConfigurationError("base and fine-tuning sets must be nonempty")
    if cfg.reference_games < 10 or cfg.query_games < 10:
        raise ConfigurationError("reference and query sets need at least 10 games each")
    ids = np.array([p.player_id for p in population])
    perm = rngmod.stream(seed, "partition").permutation(ids)
    base = sorted(int(i) for i in perm[:cfg.n_base])
    ft = sorted(int(i) for i in perm[cfg.n_base:cfg.n_base + cfg.n_finetune])
    few = sorted(int(i) for i in perm[cfg.n_base + cfg.n_finetune:need])
    r, q = cfg.reference_games, cfg.query_games
    reference = {p: np.arange(r) for p in few}
    query = {p: np.arange(r, r + q) for p in few}
    return PopulationPartition(base, ft, few, reference, query)
