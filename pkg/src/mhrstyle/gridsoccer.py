"""GridSoccer: a deterministic two-player ball-pushing game on a 9x7 grid.

Player L attacks the right edge column, player R the left one. Each side
moves one unit per ply: stay, step in one of four directions (stepping
onto the ball pushes it one cell), or kick the ball up to three cells when
4-adjacent to it. A goal is scored when the ball enters one of the three
centre cells of an edge column; the attacker of that column wins. After
200 plies without a goal the game is drawn.

Actions are indexed ``0 stay, 1-4 move N/S/E/W, 5-8 kick N/S/E/W`` in board
coordinates (raw). Learned and scripted policies work in a canonical
frame where east always points at the opponent's goal; for R the raw and
canonical indices differ by swapping E and W.

Two engines share these rules. ``GameState``/``legal_actions``/
``apply_action`` are the readable scalar reference. ``StateBatch`` and
friends advance many games in lockstep with numpy and are what data
generation, match play and probing use.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Callable, Protocol

import numpy as np

from . import rng as rngmod
from .errors import ArgumentError, ContractError
from .numeric import softmax
from .policy import sample_from_probs

STAY, N, S, E, W, KN, KS, KE, KW = range(9)
N_ACTIONS = 9
ACTION_NAMES = ("stay", "move_n", "move_s", "move_e", "move_w", "kick_n", "kick_s", "kick_e", "kick_w")
DIRS = np.array([(0, 0), (0, 1), (0, -1), (1, 0), (-1, 0), (0, 1), (0, -1), (1, 0), (-1, 0)], dtype=np.int64)
MIRROR_ACTION = np.array([0, 1, 2, 4, 3, 5, 6, 8, 7], dtype=np.int64)

SIDE_L, SIDE_R = 0, 1
NO_WINNER, WIN_L, WIN_R, DRAW = 0, 1, 2, 3
N_FEATURES = 20


@dataclass(frozen=True)
class Board:
    width: int = 9
    height: int = 7
    kick_range: int = 3
    max_plies: int = 200
    goal_half: int = 1

    @property
    def cy(self) -> int:
        return self.height // 2

    def in_bounds(self, x, y):
        return (x >= 0) & (x < self.width) & (y >= 0) & (y < self.height)

    def goal_rows(self) -> range:
        return range(max(0, self.cy - self.goal_half), min(self.height, self.cy + self.goal_half + 1))

    def is_goal_row(self, y):
        return (y >= self.cy - self.goal_half) & (y <= self.cy + self.goal_half)


DEFAULT_BOARD = Board()


# ---------------------------------------------------------------------------
# scalar reference engine


@dataclass(frozen=True)
class GameState:
    lx: int
    ly: int
    rx: int
    ry: int
    bx: int
    by: int
    side: int = SIDE_L
    ply: int = 0
    winner: int = NO_WINNER
    board: Board = DEFAULT_BOARD

    @property
    def terminal(self) -> bool:
        return self.winner != NO_WINNER

    def mover(self) -> tuple[int, int]:
        return (self.lx, self.ly) if self.side == SIDE_L else (self.rx, self.ry)

    def opponent(self) -> tuple[int, int]:
        return (self.rx, self.ry) if self.side == SIDE_L else (self.lx, self.ly)

    def ball(self) -> tuple[int, int]:
        return self.bx, self.by

    def is_valid(self) -> bool:
        cells = [(self.lx, self.ly), (self.rx, self.ry), (self.bx, self.by)]
        return len(set(cells)) == 3 and all(bool(self.board.in_bounds(x, y)) for x, y in cells)


def initial_state(board: Board = DEFAULT_BOARD) -> GameState:
    q = board.width // 4
    return GameState(q, board.cy, board.width - 1 - q, board.cy, board.width // 2, board.cy, board=board)


def mirror(state: GameState) -> GameState:
    """Reflect left-right and swap the roles of L and R."""
    w = state.board.width - 1
    swap = {NO_WINNER: NO_WINNER, DRAW: DRAW, WIN_L: WIN_R, WIN_R: WIN_L}
    return replace(state, lx=w - state.rx, ly=state.ry, rx=w - state.lx, ry=state.ly,
                   bx=w - state.bx, side=1 - state.side, winner=swap[state.winner])


def _goal_winner(board: Board, bx: int, by: int) -> int:
    if not board.is_goal_row(by):
        return NO_WINNER
    if bx == board.width - 1:
        return WIN_L
    if bx == 0:
        return WIN_R
    return NO_WINNER


def legal_actions(state: GameState) -> list[int]:
    if state.terminal:
        raise ContractError("no legal actions in a terminal state")
    b = state.board
    mx, my = state.mover()
    ox, oy = state.opponent()
    legal = [STAY]
    for a in (N, S, E, W):
        dx, dy = DIRS[a]
        tx, ty = mx + dx, my + dy
        if not b.in_bounds(tx, ty) or (tx, ty) == (ox, oy):
            continue
        if (tx, ty) == (state.bx, state.by):
            px, py = tx + dx, ty + dy
            if not b.in_bounds(px, py) or (px, py) == (ox, oy):
                continue
        legal.append(a)
    if abs(mx - state.bx) + abs(my - state.by) == 1:
        legal.extend((KN, KS, KE, KW))
    return legal


def apply_action(state: GameState, action: int) -> GameState:
    if action not in legal_actions(state):
        raise ContractError(f"illegal action {ACTION_NAMES[action] if 0 <= action < 9 else action}")
    b = state.board
    mx, my = state.mover()
    ox, oy = state.opponent()
    bx, by = state.bx, state.by
    dx, dy = (int(v) for v in DIRS[action])
    if N <= action <= W:
        mx, my = mx + dx, my + dy
        if (mx, my) == (bx, by):
            bx, by = bx + dx, by + dy
    elif action >= KN:
        for _ in range(b.kick_range):
            cx, cy = bx + dx, by + dy
            if not b.in_bounds(cx, cy) or (cx, cy) in ((mx, my), (ox, oy)):
                break
            bx, by = cx, cy
            if _goal_winner(b, bx, by) != NO_WINNER:
                break
    if state.side == SIDE_L:
        lx, ly, rx, ry = mx, my, ox, oy
    else:
        lx, ly, rx, ry = ox, oy, mx, my
    ply = state.ply + 1
    winner = _goal_winner(b, bx, by)
    if winner == NO_WINNER and ply >= b.max_plies:
        winner = DRAW
    return GameState(lx, ly, rx, ry, bx, by, 1 - state.side, ply, winner, b)


# ---------------------------------------------------------------------------
# batched engine

_STATE_FIELDS = ("lx", "ly", "rx", "ry", "bx", "by", "side", "ply", "winner")


@dataclass
class StateBatch:
    lx: np.ndarray
    ly: np.ndarray
    rx: np.ndarray
    ry: np.ndarray
    bx: np.ndarray
    by: np.ndarray
    side: np.ndarray
    ply: np.ndarray
    winner: np.ndarray
    board: Board = DEFAULT_BOARD

    def __len__(self) -> int:
        return len(self.lx)

    @classmethod
    def from_states(cls, states) -> "StateBatch":
        states = list(states)
        board = states[0].board if states else DEFAULT_BOARD
        cols = {f: np.array([getattr(s, f) for s in states], dtype=np.int64) for f in _STATE_FIELDS}
        return cls(**cols, board=board)

    @classmethod
    def initial(cls, n: int, board: Board = DEFAULT_BOARD) -> "StateBatch":
        return cls.from_states([initial_state(board)] * n) if n else cls.from_states([])

    def to_states(self) -> list[GameState]:
        cols = [getattr(self, f) for f in _STATE_FIELDS]
        return [GameState(*(int(c[i]) for c in cols), board=self.board) for i in range(len(self))]

    def take(self, idx) -> "StateBatch":
        return StateBatch(*(getattr(self, f)[idx] for f in _STATE_FIELDS), board=self.board)

    def cells(self) -> np.ndarray:
        return np.stack([self.lx, self.ly, self.rx, self.ry, self.bx, self.by], axis=1)

    @property
    def terminal(self) -> np.ndarray:
        return self.winner != NO_WINNER


def concat_batches(batches) -> StateBatch:
    batches = list(batches)
    return StateBatch(*(np.concatenate([getattr(b, f) for b in batches]) for f in _STATE_FIELDS),
                      board=batches[0].board)


def _movers(s: StateBatch):
    is_l = s.side == SIDE_L
    mx = np.where(is_l, s.lx, s.rx)
    my = np.where(is_l, s.ly, s.ry)
    ox = np.where(is_l, s.rx, s.lx)
    oy = np.where(is_l, s.ry, s.ly)
    return mx, my, ox, oy


@dataclass
class Successors:
    """Outcome of every raw action for every game in a batch."""

    legal: np.ndarray  # (n, 9) bool
    mx: np.ndarray  # mover position after the action
    my: np.ndarray
    bx: np.ndarray
    by: np.ndarray


def successors(s: StateBatch) -> Successors:
    b = s.board
    mx, my, ox, oy = _movers(s)
    n = len(s)
    legal = np.zeros((n, N_ACTIONS), dtype=bool)
    nmx = np.repeat(mx[:, None], N_ACTIONS, axis=1)
    nmy = np.repeat(my[:, None], N_ACTIONS, axis=1)
    nbx = np.repeat(s.bx[:, None], N_ACTIONS, axis=1)
    nby = np.repeat(s.by[:, None], N_ACTIONS, axis=1)
    legal[:, STAY] = True
    for a in (N, S, E, W):
        dx, dy = DIRS[a]
        tx, ty = mx + dx, my + dy
        on_ball = (tx == s.bx) & (ty == s.by)
        px, py = s.bx + dx, s.by + dy
        push_ok = b.in_bounds(px, py) & ~((px == ox) & (py == oy))
        ok = b.in_bounds(tx, ty) & ~((tx == ox) & (ty == oy)) & (~on_ball | push_ok)
        legal[:, a] = ok
        nmx[:, a] = np.where(ok, tx, mx)
        nmy[:, a] = np.where(ok, ty, my)
        nbx[:, a] = np.where(ok & on_ball, px, s.bx)
        nby[:, a] = np.where(ok & on_ball, py, s.by)
    adj = (np.abs(mx - s.bx) + np.abs(my - s.by)) == 1
    for a in (KN, KS, KE, KW):
        dx, dy = DIRS[a]
        cx, cy = s.bx.copy(), s.by.copy()
        moving = adj.copy()
        for _ in range(b.kick_range):
            tx, ty = cx + dx, cy + dy
            blocked = ~b.in_bounds(tx, ty) | ((tx == mx) & (ty == my)) | ((tx == ox) & (ty == oy))
            moving &= ~blocked
            cx = np.where(moving, tx, cx)
            cy = np.where(moving, ty, cy)
            in_goal = b.is_goal_row(cy) & ((cx == 0) | (cx == b.width - 1))
            moving &= ~in_goal
        legal[:, a] = adj
        nbx[:, a] = cx
        nby[:, a] = cy
    return Successors(legal, nmx, nmy, nbx, nby)


def canonical_to_raw(canonical: np.ndarray, side: np.ndarray) -> np.ndarray:
    canonical = np.asarray(canonical)
    return np.where(np.asarray(side) == SIDE_L, canonical, MIRROR_ACTION[canonical])


def to_canonical(succ: Successors, side: np.ndarray) -> Successors:
    """Reorder the action axis so index ``c`` is canonical action ``c``."""
    idx = np.where(side[:, None] == SIDE_L, np.arange(N_ACTIONS)[None, :], MIRROR_ACTION[None, :])
    take = lambda a: np.take_along_axis(a, idx, axis=1)
    return Successors(take(succ.legal), take(succ.mx), take(succ.my), take(succ.bx), take(succ.by))


def step(s: StateBatch, raw_actions: np.ndarray, succ: Successors | None = None) -> StateBatch:
    """Apply one raw action per game. Raises if any action is illegal."""
    if np.any(s.terminal):
        raise ContractError("cannot step a terminal game")
    succ = successors(s) if succ is None else succ
    rows = np.arange(len(s))
    raw_actions = np.asarray(raw_actions, dtype=np.int64)
    if not np.all(succ.legal[rows, raw_actions]):
        raise ContractError("illegal action in batch step")
    mx, my = succ.mx[rows, raw_actions], succ.my[rows, raw_actions]
    bx, by = succ.bx[rows, raw_actions], succ.by[rows, raw_actions]
    is_l = s.side == SIDE_L
    b = s.board
    ply = s.ply + 1
    goal_row = b.is_goal_row(by)
    winner = np.where(goal_row & (bx == b.width - 1), WIN_L, np.where(goal_row & (bx == 0), WIN_R, NO_WINNER))
    winner = np.where((winner == NO_WINNER) & (ply >= b.max_plies), DRAW, winner)
    return StateBatch(
        np.where(is_l, mx, s.lx), np.where(is_l, my, s.ly),
        np.where(is_l, s.rx, mx), np.where(is_l, s.ry, my),
        bx, by, 1 - s.side, ply, winner, b,
    )


# ---------------------------------------------------------------------------
# encoding and action features


def frame_x(x, side, board: Board):
    """x coordinate in the frame where ``side`` attacks toward +x."""
    return np.where(np.asarray(side) == SIDE_L, x, board.width - 1 - np.asarray(x))


def goal_distance(bx, by, side, board: Board):
    """Manhattan distance from the ball to the nearest goal cell ``side`` attacks."""
    fx = frame_x(bx, side, board)
    dy = np.maximum(0, np.abs(np.asarray(by) - board.cy) - board.goal_half)
    return (board.width - 1 - fx) + dy


def encode_batch(s: StateBatch, perspective) -> np.ndarray:
    """Features ``(n, 20)`` in [-1, 1] from the perspective side's frame."""
    b = s.board
    p = np.broadcast_to(np.asarray(perspective), (len(s),))
    is_l = p == SIDE_L
    sx = np.where(is_l, s.lx, s.rx); sy = np.where(is_l, s.ly, s.ry)
    ox = np.where(is_l, s.rx, s.lx); oy = np.where(is_l, s.ry, s.ly)
    fsx, fox, fbx = frame_x(sx, p, b), frame_x(ox, p, b), frame_x(s.bx, p, b)
    cx = (b.width - 1) / 2.0
    cy = max((b.height - 1) / 2.0, 0.5)
    wx, wy = max(b.width - 1, 1), max(b.height - 1, 1)
    gd = goal_distance(s.bx, s.by, p, b)
    f = np.empty((len(s), N_FEATURES), dtype=np.float64)
    f[:, 0] = (fsx - cx) / cx
    f[:, 1] = (sy - cy) / cy
    f[:, 2] = (fox - cx) / cx
    f[:, 3] = (oy - cy) / cy
    f[:, 4] = (fbx - cx) / cx
    f[:, 5] = (s.by - cy) / cy
    f[:, 6] = (fbx - fsx) / wx
    f[:, 7] = (s.by - sy) / wy
    f[:, 8] = (b.width - 1 - fbx) / wx
    f[:, 9] = (b.cy - s.by) / cy
    f[:, 10] = (fbx == fsx + 1) & (s.by == sy)
    f[:, 11] = (fbx == fsx - 1) & (s.by == sy)
    f[:, 12] = (fbx == fsx) & (s.by == sy + 1)
    f[:, 13] = (fbx == fsx) & (s.by == sy - 1)
    f[:, 14] = np.where(s.side == p, 1.0, -1.0)
    f[:, 15] = s.ply / b.max_plies
    f[:, 16] = (np.abs(fbx - fsx) + np.abs(s.by - sy)) / (wx + wy)
    f[:, 17] = gd / (wx + b.height // 2)
    f[:, 18] = 1.0
    f[:, 19] = -1.0
    return np.clip(f, -1.0, 1.0).astype(np.float32)


def encode_state(state: GameState, perspective: int) -> np.ndarray:
    return encode_batch(StateBatch.from_states([state]), perspective)[0]


ATTRIBUTES = ("aggression", "goal_threat", "defensiveness", "kick_rate")


def action_features(s: StateBatch, succ: Successors | None = None):
    """Per canonical action: (features ``(n, 9, 4)``, legal ``(n, 9)``).

    Features are, in order: decrease of mover-to-ball distance, decrease of
    ball-to-target-goal distance, whether the mover ends strictly between the
    ball and its own goal, and whether the action is a kick.
    """
    b = s.board
    succ = to_canonical(successors(s) if succ is None else succ, s.side)
    mx, my, _, _ = _movers(s)
    side = s.side[:, None]
    d0 = (np.abs(mx - s.bx) + np.abs(my - s.by))[:, None]
    d1 = np.abs(succ.mx - succ.bx) + np.abs(succ.my - succ.by)
    g0 = goal_distance(s.bx, s.by, s.side, b)[:, None]
    g1 = goal_distance(succ.bx, succ.by, side, b)
    between = frame_x(succ.mx, side, b) < frame_x(succ.bx, side, b)
    feats = np.empty(succ.legal.shape + (4,), dtype=np.float64)
    feats[..., 0] = d0 - d1
    feats[..., 1] = g0 - g1
    feats[..., 2] = between
    feats[..., 3] = np.arange(N_ACTIONS)[None, :] >= KN
    return feats, succ.legal


# ---------------------------------------------------------------------------
# scripted style agents

STYLE_FIELDS = ("chase_weight", "goal_push_weight", "defend_weight", "kick_bias", "temperature")


@dataclass(frozen=True)
class StyleParams:
    chase_weight: float = 0.0
    goal_push_weight: float = 0.0
    defend_weight: float = 0.0
    kick_bias: float = 0.0
    temperature: float = 1.0

    def __post_init__(self):
        if not self.temperature > 0:
            raise ArgumentError("temperature must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in STYLE_FIELDS], dtype=np.float64)

    @classmethod
    def from_array(cls, a) -> "StyleParams":
        return cls(*(float(v) for v in a))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def scripted_scores(params: np.ndarray, s: StateBatch, succ: Successors | None = None):
    """Scores ``(n, 9)`` over canonical actions; params rows are StyleParams arrays."""
    feats, legal = action_features(s, succ)
    params = np.broadcast_to(np.asarray(params, dtype=np.float64), (len(s), 5))
    score = np.einsum("naf,nf->na", feats, params[:, :4])
    return score, legal


def scripted_probs(params: np.ndarray, s: StateBatch, succ: Successors | None = None) -> np.ndarray:
    score, legal = scripted_scores(params, s, succ)
    params = np.broadcast_to(np.asarray(params, dtype=np.float64), (len(s), 5))
    z = np.where(legal, score / params[:, 4:5], -np.inf)
    return softmax(z, axis=1)


def scripted_policy(params: StyleParams, state: GameState) -> np.ndarray:
    """Distribution over the 9 raw actions (zero on illegal ones)."""
    if state.terminal:
        raise ContractError("scripted policy queried on a terminal state")
    batch = StateBatch.from_states([state])
    probs_c = scripted_probs(params.as_array(), batch)[0]
    raw = np.zeros(N_ACTIONS)
    raw[canonical_to_raw(np.arange(N_ACTIONS), np.full(N_ACTIONS, state.side))] = probs_c
    return raw


# ---------------------------------------------------------------------------
# match play


class BatchPolicy(Protocol):
    def __call__(self, states: StateBatch, games: np.ndarray) -> np.ndarray:
        """Probabilities ``(n, 9)`` over canonical actions for the side to move."""


class ScriptedAgents:
    """Scripted policy with per-game style parameters (rows indexed by game)."""

    def __init__(self, params):
        self.params = np.asarray(params, dtype=np.float64)

    def __call__(self, states: StateBatch, games: np.ndarray, succ: Successors | None = None) -> np.ndarray:
        p = self.params if self.params.ndim == 1 else self.params[games]
        return scripted_probs(p, states, succ)


class FunctionAgent:
    """Adapter for a scalar ``GameState -> raw distribution`` function."""

    def __init__(self, fn: Callable[[GameState], np.ndarray]):
        self.fn = fn

    def __call__(self, states: StateBatch, games: np.ndarray) -> np.ndarray:
        out = np.empty((len(states), N_ACTIONS))
        for i, st in enumerate(states.to_states()):
            raw = np.asarray(self.fn(st), dtype=np.float64)
            out[i] = raw[canonical_to_raw(np.arange(N_ACTIONS), np.full(N_ACTIONS, st.side))]
        return out


@dataclass
class MatchResult:
    winner: int
    plies: int
    trajectory: list

    @property
    def score_l(self) -> float:
        return {WIN_L: 1.0, WIN_R: 0.0, DRAW: 0.5}[self.winner]


@dataclass
class BatchResult:
    """Outcomes of ``n`` games; trajectory rows are ply-major when recorded."""

    winners: np.ndarray
    plies: np.ndarray
    traj_game: np.ndarray | None = None
    traj_ply: np.ndarray | None = None
    traj_cells: np.ndarray | None = None  # (rows, 6) raw cells before the move
    traj_canonical: np.ndarray | None = None
    traj_raw: np.ndarray | None = None
    traj_features: np.ndarray | None = None  # (rows, 20) from the mover's perspective

    def score_l(self) -> np.ndarray:
        return np.select([self.winners == WIN_L, self.winners == DRAW], [1.0, 0.5], 0.0)


def _call(policy, states, games, succ):
    if isinstance(policy, ScriptedAgents):
        return policy(states, games, succ)
    return policy(states, games)


def play_games(policy_l, policy_r, keys: np.ndarray, board: Board = DEFAULT_BOARD,
               record: bool = False, start: StateBatch | None = None) -> BatchResult:
    """Play ``len(keys)`` independent games in lockstep.

    Every game starts from the same position with L to move, so at any ply
    all unfinished games have the same side to move. Game ``g`` draws its
    ply-``t`` action with the counter generator at ``(keys[g], t)``, so its
    course does not depend on the other games in the batch.
    """
    keys = np.asarray(keys, dtype=np.uint64)
    n = len(keys)
    s = StateBatch.initial(n, board) if start is None else start
    active = np.arange(n)
    winners = np.zeros(n, dtype=np.int64)
    plies = np.zeros(n, dtype=np.int64)
    rec: dict[str, list] = {k: [] for k in ("game", "ply", "cells", "canon", "raw", "feat")}
    while len(active):
        side = s.side
        succ = successors(s)
        probs_l = probs_r = None
        is_l = side == SIDE_L
        probs = np.empty((len(active), N_ACTIONS))
        if is_l.any():
            il = np.flatnonzero(is_l)
            sub = s.take(il)
            probs[il] = _call(policy_l, sub, active[il], _take_succ(succ, il))
        if (~is_l).any():
            ir = np.flatnonzero(~is_l)
            sub = s.take(ir)
            probs[ir] = _call(policy_r, sub, active[ir], _take_succ(succ, ir))
        legal_c = to_canonical(succ, side).legal
        probs = np.where(legal_c, probs, 0.0)
        u = rngmod.counter_uniform(keys[active], s.ply)
        canon = sample_from_probs(probs, u)
        raw = canonical_to_raw(canon, side)
        if record:
            rec["game"].append(active.copy())
            rec["ply"].append(s.ply.copy())
            rec["cells"].append(s.cells())
            rec["canon"].append(canon)
            rec["raw"].append(raw)
            rec["feat"].append(encode_batch(s, side))
        s = step(s, raw, succ)
        done = s.terminal
        if done.any():
            winners[active[done]] = s.winner[done]
            plies[active[done]] = s.ply[done]
            keep = np.flatnonzero(~done)
            s = s.take(keep)
            active = active[keep]
    out = BatchResult(winners, plies)
    if record:
        cat = lambda k, shape: np.concatenate(rec[k]) if rec[k] else np.zeros(shape, dtype=np.int64)
        out.traj_game = cat("game", (0,))
        out.traj_ply = cat("ply", (0,))
        out.traj_cells = cat("cells", (0, 6))
        out.traj_canonical = cat("canon", (0,))
        out.traj_raw = cat("raw", (0,))
        out.traj_features = np.concatenate(rec["feat"]) if rec["feat"] else np.zeros((0, N_FEATURES), np.float32)
    return out


def _take_succ(succ: Successors, idx) -> Successors:
    return Successors(succ.legal[idx], succ.mx[idx], succ.my[idx], succ.bx[idx], succ.by[idx])


def play_match(policy_l: Callable[[GameState], np.ndarray], policy_r: Callable[[GameState], np.ndarray],
               seed: int, board: Board = DEFAULT_BOARD) -> MatchResult:
    """One game between two scalar policies (state -> raw action distribution)."""
    keys = rngmod.game_keys(seed, "match", [0])
    res = play_games(FunctionAgent(policy_l), FunctionAgent(policy_r), keys, board, record=True)
    traj = [
        {"ply": int(p), "side": int(p % 2), "cells": tuple(int(c) for c in cells), "action": int(a)}
        for p, cells, a in zip(res.traj_ply, res.traj_cells, res.traj_raw)
    ]
    return MatchResult(int(res.winners[0]), int(res.plies[0]), traj)


def win_rate(scores_for_player: np.ndarray) -> float:
    """Mean score with wins 1, draws 0.5, losses 0."""
    return float(np.mean(scores_for_player))


# ---------------------------------------------------------------------------
# attribute probing

PROBE_VERSION = "probe-v1"
PROBE_SEED = 20240917


@dataclass(frozen=True)
class AttributeProfile:
    aggression: float
    goal_threat: float
    defensiveness: float
    kick_rate: float

    def as_array(self) -> np.ndarray:
        return np.array([self.aggression, self.goal_threat, self.defensiveness, self.kick_rate])

    @classmethod
    def from_array(cls, a) -> "AttributeProfile":
        return cls(*(float(v) for v in a))


def random_style_params(rng: np.random.Generator, n: int) -> np.ndarray:
    """Broad prior used only for probe-set playouts."""
    p = np.empty((n, 5))
    p[:, 0:3] = rng.uniform(0.0, 2.0, (n, 3))
    p[:, 3] = rng.uniform(-1.5, 1.5, n)
    p[:, 4] = np.exp(rng.uniform(np.log(0.3), np.log(3.0), n))
    return p


def generate_probe_set(size: int = 4096, seed: int = PROBE_SEED, board: Board = DEFAULT_BOARD) -> StateBatch:
    """Fixed, versioned set of nonterminal states from mixed-policy playouts."""
    g = rngmod.stream(seed, PROBE_VERSION)
    n_games = max(64, size // 8)
    params_l = random_style_params(g, n_games)
    params_r = random_style_params(g, n_games)
    # a quarter of the seats play uniformly at random
    params_l[g.random(n_games) < 0.25, 4] = 1e6
    params_r[g.random(n_games) < 0.25, 4] = 1e6
    keys = rngmod.game_keys(seed, PROBE_VERSION + "/games", np.arange(n_games))
    res = play_games(ScriptedAgents(params_l), ScriptedAgents(params_r), keys, board, record=True)
    pick = np.sort(g.choice(len(res.traj_ply), size=size, replace=len(res.traj_ply) < size))
    c = res.traj_cells[pick]
    ply = res.traj_ply[pick]
    return StateBatch(c[:, 0], c[:, 1], c[:, 2], c[:, 3], c[:, 4], c[:, 5], ply % 2, ply,
                      np.zeros(size, dtype=np.int64), board)


Chooser = Callable[[StateBatch], np.ndarray]


def probe_attributes(choose: Chooser, probe: StateBatch) -> AttributeProfile:
    """Mean change of each heuristic caused by the chosen canonical actions."""
    if len(probe) == 0:
        raise ArgumentError("empty probe set")
    feats, legal = action_features(probe)
    actions = np.asarray(choose(probe), dtype=np.int64)
    rows = np.arange(len(probe))
    if not np.all(legal[rows, actions]):
        raise ContractError("chooser returned an illegal action on the probe set")
    return AttributeProfile.from_array(feats[rows, actions].mean(axis=0))


def scripted_chooser(params: StyleParams | np.ndarray) -> Chooser:
    """Greedy (argmax-score) scripted agent; ties go to the lowest index."""
    arr = params.as_array() if isinstance(params, StyleParams) else np.asarray(params, dtype=np.float64)

    def choose(states: StateBatch) -> np.ndarray:
        score, legal = scripted_scores(arr, states)
        return np.argmax(np.where(legal, score, -np.inf), axis=1)

    return choose


def stay_chooser(states: StateBatch) -> np.ndarray:
    return np.zeros(len(states), dtype=np.int64)
