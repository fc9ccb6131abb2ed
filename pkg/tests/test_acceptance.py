"""End-to-end acceptance suite.

One desk-scale pipeline run (default config) is shared by the whole module.
Each criterion prints a single PASS/FAIL line before asserting. Setting
MHRSTYLE_ACCEPTANCE_DIR to a finished run directory reuses it instead of
running the pipeline again.
"""

import csv
import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from _nets import loss_and_grads, randomized_net
from mhrstyle import gridsoccer as gs
from mhrstyle import persistence as io
from mhrstyle import pipeline
from mhrstyle import stylelab as lab
from mhrstyle import trainer as tr
from mhrstyle.config import RunConfig
from mhrstyle.numeric import finite_diff_check
from mhrstyle.policy import NetConfig, PolicyNet, sample_from_logits
from mhrstyle.routing import AdapterInventory, LoraPair, StyleVector, mix_mhr, mix_poly

pytestmark = pytest.mark.acceptance


def verdict(capsys, label, checks, started):
    ok = all(v for _, v in checks)
    detail = "; ".join(f"{k}={'ok' if v else 'MISS'}" for k, v in checks)
    with capsys.disabled():
        print(f"\n{label}: {'PASS' if ok else 'FAIL'} ({time.time() - started:.1f}s) {detail}")
    return ok


def read_json(run, *parts):
    return json.loads(run.path(*parts).read_text())


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def desk(tmp_path_factory):
    reuse = os.environ.get("MHRSTYLE_ACCEPTANCE_DIR")
    if reuse:
        out = Path(reuse)
        cfg = RunConfig.load(out / "config.json")
    else:
        out = tmp_path_factory.mktemp("desk")
        cfg = RunConfig()
        pipeline.run_all(cfg, out)
    return pipeline.Run(cfg, out)


@pytest.fixture(scope="module")
def finetuned(desk):
    return desk.checkpoint("finetuned")


# ---------------------------------------------------------------------------


def test_criterion_01_routing_equivalences(capsys):
    t0 = time.time()
    g = np.random.default_rng(1)
    worst_poly, worst_lora = 0.0, 0.0
    for _ in range(100):
        m, r = int(g.integers(1, 9)), int(g.integers(1, 5))
        d_out, d_in = int(g.integers(1, 33)), int(g.integers(1, 33))
        inv = AdapterInventory(g.standard_normal((m, d_out, r)), g.standard_normal((m, d_in, r)))
        z = g.standard_normal((m, 1))
        worst_poly = max(worst_poly, np.abs(mix_mhr(inv, z).delta() - mix_poly(inv, z[:, 0]).delta()).max())
        one = AdapterInventory(inv.A[:1], inv.B[:1])
        lora = LoraPair(inv.A[0], inv.B[0])
        worst_lora = max(worst_lora, np.abs(mix_poly(one, g.standard_normal(1)).delta() - lora.delta()).max())
    net = PolicyNet.create(NetConfig(), np.random.default_rng(2), np.random.default_rng(3))
    net.params.params["routing"] = g.standard_normal((4, net.cfg.modules, net.cfg.heads)).astype(np.float32)
    net.routing_ids = [0, 1, 2, 3]
    x = g.uniform(-1, 1, (512, net.cfg.input_dim)).astype(np.float32)
    base = net.forward(x, None)
    zero_exact = all(np.array_equal(base, net.forward(x, StyleVector(net.params["routing"][k]))) for k in range(4))
    checks = [("mhr_h1_vs_poly<=1e-6", worst_poly <= 1e-6), ("poly_m1_vs_lora<=1e-6", worst_lora <= 1e-6),
              ("zero_adapter_bit_exact", zero_exact)]
    assert verdict(capsys, "CRITERION 1 routing equivalences", checks, t0)


def test_criterion_02_gradient_check(capsys):
    t0 = time.time()
    cfg = NetConfig()
    worst = 0.0
    for k in range(10):
        net = randomized_net(cfg, seed=100 + k, rows=4, dtype=np.float64)
        g = np.random.default_rng(200 + k)
        x = g.uniform(-1, 1, (16, cfg.input_dim))
        y = g.integers(0, cfg.actions, 16)
        rows = g.integers(0, 4, 16)
        rep = finite_diff_check(loss_and_grads(net, x, y, rows), net.params, epsilon=1e-5, tolerance=1e-4,
                                max_entries_per_param=40, rng=np.random.default_rng(k))
        worst = max(worst, rep.max_rel_error)
    checks = [(f"max_rel_error={worst:.2e}<1e-4", worst < 1e-4)]
    assert verdict(capsys, "CRITERION 2 gradient correctness", checks, t0)


def test_criterion_03_freeze_contracts(capsys, desk, finetuned):
    t0 = time.time()
    base = desk.checkpoint("base")
    base_same = all(base.params[n].tobytes() == finetuned.params[n].tobytes() for n in base.params.names("base"))
    frozen = {n: finetuned.params[n].tobytes() for n in finetuned.params.names()}
    _, part, _, _ = desk.population()
    few = desk.datasets("fewshot")
    pid = part.fewshot[0]
    tr.fewshot_fit(finetuned, few[pid].subset(part.reference[pid]), desk.cfg.opt, desk.cfg.seed, "freeze-check")
    after_same = all(finetuned.params[n].tobytes() == b for n, b in frozen.items())
    checks = [("base_bits_across_finetune", base_same), ("all_bits_across_fewshot", after_same)]
    assert verdict(capsys, "CRITERION 3 freeze contracts", checks, t0)


def test_criterion_04_cloning_lift(capsys, desk):
    t0 = time.time()
    res = read_json(desk, "results", "finetune.json")
    _, part, _, _ = desk.population()
    checks = [(f"lift={res['lift_points']:.2f}pts>=2", res["lift_points"] >= 2.0),
              (f"base_mean={res['base_mean']:.3f}>1/9", res["base_mean"] > 1 / 9),
              (f"finetuned_mean={res['finetuned_mean']:.3f}>1/9", res["finetuned_mean"] > 1 / 9),
              ("256_base_64_finetune", (len(part.base), len(part.finetune)) == (256, 64))]
    assert verdict(capsys, "CRITERION 4 behavioral-cloning lift", checks, t0)


def test_base_pooled_accuracy(capsys, desk):
    t0 = time.time()
    acc = read_json(desk, "summaries", "train-base.json")["result"]["pooled_test_accuracy"]
    assert verdict(capsys, "CHECK base pooled accuracy", [(f"acc={acc:.3f}>0.25", acc > 0.25)], t0)


def test_style_swap_changes_logits(capsys, desk, finetuned):
    t0 = time.time()
    pset = pipeline.probe_set(desk)
    feats = gs.encode_batch(pset, pset.side)
    a = finetuned.logits_in_chunks(feats, StyleVector(finetuned.params["routing"][0]))
    b = finetuned.logits_in_chunks(feats, StyleVector(finetuned.params["routing"][1]))
    diff = float(np.abs(a - b).max())
    assert verdict(capsys, "CHECK style swap changes logits", [(f"max_abs_diff={diff:.3g}>0", diff > 0)], t0)


def test_criterion_05_stylometry(capsys, desk):
    t0 = time.time()
    res = read_json(desk, "results", "stylometry.json")
    seen, unseen = res["seen"], res["unseen"]
    checks = [(f"seen_top1={seen['top1']:.3f}>=0.85", seen["top1"] >= 0.85),
              ("seen_32_of_64", (seen["queries"], seen["universe"]) == (32, 64)),
              (f"unseen_top1={unseen['top1']:.3f}>=0.75", unseen["top1"] >= 0.75),
              ("unseen_16_queries", unseen["queries"] == 16)]
    assert verdict(capsys, "CRITERION 5 stylometry", checks, t0)


def test_closed_loop_recovery(capsys, desk, finetuned):
    """Actions sampled from a player's own row are fitted back to that row."""
    t0 = time.time()
    pset = pipeline.probe_set(desk)
    states = gs.encode_batch(pset, pset.side)
    legal = gs.to_canonical(gs.successors(pset), pset.side).legal
    ids = list(finetuned.routing_ids)
    rows = finetuned.params["routing"].astype(np.float64)
    results = []
    for k, pid in enumerate(ids[:5]):
        logits = finetuned.logits_in_chunks(states, StyleVector(finetuned.params["routing"][k]))
        u = np.random.default_rng(k).random(len(states))
        actions = sample_from_logits(logits, 1.0, u, legal)
        fit = tr.fewshot_fit(finetuned, (states, actions), desk.cfg.opt, desk.cfg.seed, f"closed-loop/{pid}")
        cos = np.array([lab.cosine_similarity(fit.logits.astype(np.float64), r) for r in rows])
        others = np.delete(cos, k)
        results.append(float(np.mean(others < cos[k])))
    checks = [(f"player{n}_beats={f:.3f}>=0.95", f >= 0.95) for n, f in enumerate(results)]
    assert verdict(capsys, "CHECK closed-loop recovery", checks, t0)


def test_criterion_06_consistency(capsys, desk):
    t0 = time.time()
    res = read_json(desk, "results", "consistency.json")
    a = desk.cfg.analysis
    checks = [(f"gap={res['gap']:.3f}>=0.2", res["gap"] >= 0.2),
              (f"p={res['mannwhitney_p']:.2e}<0.01", res["mannwhitney_p"] < 0.01),
              ("16x4_splits", (a.consistency_players, a.consistency_splits) == (16, 4)
               and res["n_within"] == 16 * 6)]
    assert verdict(capsys, "CRITERION 6 within-player consistency", checks, t0)


def test_criterion_07_merge(capsys, desk):
    t0 = time.time()
    res = read_json(desk, "results", "merge.json")
    f = res["fraction_average_beats_random"]
    checks = [(f"fraction={f:.2f}>=0.9", f >= 0.9), ("20_pairs", res["pairs"] == 20)]
    assert verdict(capsys, "CRITERION 7 merge consistency", checks, t0)


def test_criterion_08_interpolation(capsys, desk):
    t0 = time.time()
    res = read_json(desk, "results", "interpolation.json")
    w1 = res["winrate_at_1_pooled"]
    checks = [(f"winrate_at_1={w1:.3f}_within_0.5+-0.08", abs(w1 - 0.5) <= 0.08),
              (f"spearman={res['spearman']:.3f}>0.5", res["spearman"] > 0.5),
              ("10_pairs_200_games", len(res["pairs"]) == 10 and res["games_per_point"] == 200),
              ("lambda_grid", res["lambdas"] == [0.0, 0.25, 0.5, 0.75, 1.0])]
    assert verdict(capsys, "CRITERION 8 interpolation", checks, t0)


def test_criterion_09_steering(capsys, desk, finetuned):
    t0 = time.time()
    res = read_json(desk, "results", "steering.json")
    checks = [("32_players", res["players"] == 32), ("threshold_1.5std", desk.cfg.analysis.steer_threshold_std == 1.5)]
    for attr in ("aggression", "kick_rate"):
        r = res["attributes"][attr]
        if "skipped" in r:
            checks.append((f"{attr}_selection_nonempty", False))
            continue
        checks.append((f"{attr}_increased={r['fraction_increased']:.2f}>=0.8", r["fraction_increased"] >= 0.8))
        checks.append((f"{attr}_on={r['mean_on_target']:.3f}>off={r['mean_abs_off_target']:.3f}",
                       r["mean_on_target"] > r["mean_abs_off_target"]))
    rows = [StyleVector(z) for z in finetuned.params["routing"]]
    same = lab.style_delta(rows, rows)
    a = np.arange(32, dtype=np.float64).reshape(8, 4) / 4
    b = -np.arange(32, dtype=np.float64).reshape(8, 4) / 8
    two = lab.style_delta([a], [a, b])
    checks.append(("X=P_gives_zero", not np.any(same.delta)))
    checks.append(("two_point_exact", np.array_equal(two.delta, (a - b) / 2)))
    assert verdict(capsys, "CRITERION 9 steering", checks, t0)


def test_criterion_10_cluster_recovery(capsys, desk):
    t0 = time.time()
    res = read_json(desk, "report", "summary.json")["cluster_recovery"]
    checks = [(f"ari={res['ari']:.3f}>=0.5", res["ari"] >= 0.5),
              ("k=true_clusters", res["k"] == desk.cfg.population.n_clusters)]
    assert verdict(capsys, "CRITERION 10 ground-truth style recovery", checks, t0)


SMALL = {
    "population": {"n_base": 24, "n_finetune": 8, "n_fewshot": 2, "n_clusters": 4, "min_games": 10,
                   "max_games": 30, "reference_games": 10, "query_games": 10},
    "net": {"width": 16, "blocks": 2, "hidden": 32, "rank": 2, "modules": 4, "heads": 2},
    "opt": {"base_epochs": 2, "finetune_epochs": 2, "fewshot_epochs": 2},
}


def test_criterion_11_determinism_and_persistence(capsys, desk, finetuned, tmp_path):
    t0 = time.time()
    cfg = RunConfig.from_dict(SMALL)
    stages = ["gen-population", "gen-data", "train-base", "finetune"]
    for name in ("a", "b"):
        pipeline.run_all(cfg, tmp_path / name, stages)
    same = all((tmp_path / "a" / "checkpoints" / f).read_bytes() == (tmp_path / "b" / "checkpoints" / f).read_bytes()
               for f in ("base.json", "base.bin", "finetuned.json", "finetuned.bin"))
    io.save_checkpoint(finetuned, tmp_path / "copy")
    back = io.load_checkpoint(tmp_path / "copy")
    round_trip = all(back.params[n].tobytes() == finetuned.params[n].tobytes() for n in finetuned.params.names())
    round_trip &= back.routing_ids == finetuned.routing_ids
    roc_ok = True
    for name in ("roc_seen.csv", "roc_unseen.csv"):
        pts = np.array([[float(r["fpr"]), float(r["tpr"])] for r in read_csv(desk.path("results", name))])
        roc_ok &= bool(np.all(np.diff(pts, axis=0) >= 0))
        roc_ok &= bool(np.array_equal(pts[0], [0, 0]) and np.array_equal(pts[-1], [1, 1]))
    checks = [("retrain_byte_identical", same), ("checkpoint_round_trip", round_trip),
              ("roc_monotone_anchored", roc_ok)]
    assert verdict(capsys, "CRITERION 11 determinism and persistence", checks, t0)
