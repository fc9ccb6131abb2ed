import numpy as np
import pytest

from mhrstyle import gridsoccer as gs
from mhrstyle import rng as rngmod
from mhrstyle.errors import ArgumentError, ConfigurationError
from mhrstyle.population import (PlayerDataset, PlayerSpec, PopulationConfig, choose_opponents, game_counts,
                                 generate_games, generate_many, make_partition, merge_datasets, sample_population,
                                 split_counts)

CFG = PopulationConfig(n_base=20, n_finetune=8, n_fewshot=4, n_clusters=4, reference_games=10, query_games=10)


@pytest.fixture(scope="module")
def players():
    return sample_population(CFG.n_players, CFG.n_clusters, 3, CFG)


class TestSamplePopulation:
    def test_single_cluster_no_noise_identical(self):
        pop = sample_population(10, 1, 0, CFG, weight_sigma=0.0, temperature_sigma=0.0)
        assert len({p.params for p in pop}) == 1

    def test_seed_reproducible(self, players):
        again = sample_population(CFG.n_players, CFG.n_clusters, 3, CFG)
        assert [p.params for p in players] == [p.params for p in again]

    def test_no_collisions_with_noise(self, players):
        assert len({p.params.as_array().tobytes() for p in players}) == len(players)

    def test_ids_unique_and_clusters_balanced(self, players):
        assert [p.player_id for p in players] == list(range(len(players)))
        counts = np.bincount([p.cluster for p in players])
        assert counts.max() - counts.min() <= 1

    def test_temperatures_positive(self, players):
        assert all(p.params.temperature > 0 for p in players)

    def test_too_few_players(self):
        with pytest.raises(ArgumentError):
            sample_population(2, 3, 0, CFG)


class TestSplits:
    @pytest.mark.parametrize("n,want", [(10, (8, 1, 1)), (20, (16, 2, 2)), (25, (19, 3, 3)), (200, (160, 20, 20))])
    def test_rounding(self, n, want):
        assert split_counts(n) == want

    def test_fractions_within_one_game(self):
        for n in range(10, 201):
            tr, te, va = split_counts(n)
            assert tr + te + va == n
            assert abs(te - 0.1 * n) <= 1 and abs(va - 0.1 * n) <= 1 and te >= 1

    def test_too_few_games(self):
        with pytest.raises(ArgumentError):
            split_counts(9)


@pytest.fixture(scope="module")
def dataset(players):
    opps = choose_opponents(players, 3, 4)
    return generate_games(players[0], opps[0], 12, seed=5)


class TestGenerateGames:
    def test_split_and_disjoint_parts(self, dataset):
        assert dataset.split == (10, 1, 1)
        parts = {n: dataset.game_range(n) for n in ("train", "test", "validation")}
        assert parts == {"train": (0, 10), "test": (10, 11), "validation": (11, 12)}
        for n in parts:
            x, y = dataset.part(n)
            assert len(x) == len(y) > 0

    def test_same_seed_same_dataset(self, players, dataset):
        opps = choose_opponents(players, 3, 4)
        again = generate_games(players[0], opps[0], 12, seed=5)
        np.testing.assert_array_equal(again.states, dataset.states)
        np.testing.assert_array_equal(again.actions, dataset.actions)

    def test_independent_of_batching(self, players, dataset):
        opps = choose_opponents(players, 3, 4)
        many = generate_many([(players[1], opps[1], 15), (players[0], opps[0], 12)], 5)
        np.testing.assert_array_equal(many[0].states, dataset.states)
        np.testing.assert_array_equal(many[0].game, dataset.game)

    def test_recorded_actions_legal_and_focal_only(self, players, dataset):
        opps = choose_opponents(players, 3, 4)[0]
        n = 12
        focal = players[0].params.as_array()
        opp = np.stack([opps[i % len(opps)].params.as_array() for i in range(n)])
        seat = np.arange(n) % 2
        pl = np.where(seat[:, None] == 0, focal, opp)
        pr = np.where(seat[:, None] == 0, opp, focal)
        keys = rngmod.game_keys(5, "games/0", np.arange(n))
        res = gs.play_games(gs.ScriptedAgents(pl), gs.ScriptedAgents(pr), keys, record=True)
        for cells, raw, ply in zip(res.traj_cells, res.traj_raw, res.traj_ply):
            st = gs.GameState(*(int(c) for c in cells), side=int(ply % 2), ply=int(ply))
            assert raw in gs.legal_actions(st)
        mine = res.traj_ply % 2 == seat[res.traj_game]
        assert mine.sum() == len(dataset)
        order = np.lexsort((res.traj_ply[mine], res.traj_game[mine]))
        np.testing.assert_array_equal(res.traj_canonical[mine][order], dataset.actions)

    def test_focal_features_are_from_mover_perspective(self, dataset):
        # the to-move flag is always +1 for the recorded player
        assert np.all(dataset.states[:, 14] == 1.0)

    def test_too_few_games(self, players):
        with pytest.raises(ArgumentError):
            generate_games(players[0], players[1:3], 9, seed=0)

    def test_game_counts_range(self, players):
        counts = game_counts(players, 0, PopulationConfig())
        assert all(20 <= c <= 200 for c in counts.values())

    def test_opponents_exclude_self(self, players):
        for pid, opps in choose_opponents(players, 1, 8).items():
            assert pid not in {o.player_id for o in opps} and len(opps) == 8


class TestDatasetOps:
    def test_subset_renumbers(self, dataset):
        sub = dataset.subset([3, 1])
        assert sub.n_games == 2 and set(sub.game) == {0, 1}
        np.testing.assert_array_equal(sub.states[sub.game == 0], dataset.states[dataset.game == 3])

    def test_merge(self, dataset):
        a, b = dataset.subset(np.arange(5)), dataset.subset(np.arange(5, 12))
        m = merge_datasets(a, b)
        assert m.n_games == 12 and len(m) == len(dataset)
        np.testing.assert_array_equal(m.states, dataset.states)

    def test_unknown_part(self, dataset):
        with pytest.raises(ArgumentError):
            dataset.part("holdout")


class TestPartition:
    def test_sizes_and_disjointness(self, players):
        part = make_partition(players, CFG, 0)
        assert (len(part.base), len(part.finetune), len(part.fewshot)) == (20, 8, 4)
        assert not (set(part.base) & set(part.finetune)) and not (set(part.fewshot) & set(part.finetune))
        assert not (set(part.fewshot) & set(part.base))
        for p in part.fewshot:
            assert not set(part.reference[p]) & set(part.query[p])
            assert len(part.reference[p]) == len(part.query[p]) == 10

    def test_default_desk_sizes(self):
        cfg = PopulationConfig()
        part = make_partition(sample_population(cfg.n_players, cfg.n_clusters, 0, cfg), cfg, 0)
        assert (len(part.base), len(part.finetune), len(part.fewshot)) == (256, 64, 16)

    def test_insufficient_players(self, players):
        with pytest.raises(ConfigurationError):
            make_partition(players[:10], CFG, 0)


def test_player_spec_carries_ground_truth_only():
    spec = PlayerSpec(0, gs.StyleParams(1, 2, 3, 4, 0.5), cluster=2)
    ds = PlayerDataset(0, np.zeros((1, 20), np.float32), np.zeros(1, np.int64), np.zeros(1, np.int64), 10)
    assert not any(isinstance(v, gs.StyleParams) for v in vars(ds).values())
    assert spec.params.temperature == 0.5
