"""Desk-scale experiment stages, each reading and writing a run directory.

Layout under ``out``::

    config.json  population.json
    data/{main,fewshot,seen_query}.{json,bin}
    checkpoints/{base,finetuned}.{json,bin}
    vectors/{fewshot,consistency,merge}.{json,bin}
    curves/*.csv  results/*.{json,csv}  summaries/<command>.json
    report/*.csv  report/summary.json
"""

from __future__ import annotations

import logging
import time
from pathlib import Path

import numpy as np
from scipy import stats

from . import gridsoccer as gs
from . import persistence as io
from . import population as pop
from . import rng as rngmod
from . import stylelab as lab
from . import trainer as tr
from .config import RunConfig
from .errors import ArgumentError, MissingArtifact
from .gridsoccer import StyleParams
from .routing import RoutingTensor, StyleVector

log = logging.getLogger(__name__)
SUMMARY_SCHEMA = 1


class Run:
    def __init__(self, cfg: RunConfig, out):
        self.cfg = cfg
        self.out = Path(out)

    def path(self, *parts) -> Path:
        return self.out.joinpath(*parts)

    def summary(self, command: str, payload: dict, started: float) -> dict:
        doc = {"schema_version": SUMMARY_SCHEMA, "command": command, "seed": self.cfg.seed,
               "status": "ok", "elapsed_seconds": round(time.time() - started, 3), "result": payload}
        io.write_json(self.path("summaries", f"{command}.json"), doc)
        return doc

    # -- upstream artifacts -------------------------------------------------

    def population(self):
        doc = io.read_json(self.path("population.json"))
        players = [pop.PlayerSpec(p["player_id"], StyleParams(**p["params"]), p["cluster"]) for p in doc["players"]]
        part = doc["partition"]
        partition = pop.PopulationPartition(
            part["base"], part["finetune"], part["fewshot"],
            {int(k): np.array(v) for k, v in part["reference"].items()},
            {int(k): np.array(v) for k, v in part["query"].items()})
        return players, partition, {int(k): v for k, v in doc["game_counts"].items()}, doc["seen_query_players"]

    def datasets(self, name: str) -> dict:
        return io.load_datasets(self.path("data", name))

    def checkpoint(self, name: str):
        return io.load_checkpoint(self.path("checkpoints", name))

    def vectors(self, name: str) -> dict:
        return {v.player_id: v for v in io.load_vectors(self.path("vectors", name))}

    def result(self, name: str) -> dict:
        return io.read_json(self.path("results", f"{name}.json"))


def _by_id(players):
    return {p.player_id: p for p in players}


# ---------------------------------------------------------------------------


def gen_population(run: Run) -> dict:
    t0 = time.time()
    cfg = run.cfg
    pc = cfg.population
    players = pop.sample_population(pc.n_players, pc.n_clusters, cfg.seed, pc)
    partition = pop.make_partition(players, pc, cfg.seed)
    counts = pop.game_counts(players, cfg.seed, pc)
    g = rngmod.stream(cfg.seed, "seen-query-players")
    n_seen = min(cfg.analysis.seen_queries, len(partition.finetune))
    seen = sorted(int(i) for i in g.choice(partition.finetune, n_seen, replace=False))
    run.out.mkdir(parents=True, exist_ok=True)
    run.path("config.json").write_text(cfg.to_json() + "\n")
    io.write_json(run.path("population.json"), {
        "players": [{"player_id": p.player_id, "params": p.params.to_dict(), "cluster": p.cluster} for p in players],
        "partition": {"base": partition.base, "finetune": partition.finetune, "fewshot": partition.fewshot,
                      "reference": {str(k): v for k, v in partition.reference.items()},
                      "query": {str(k): v for k, v in partition.query.items()}},
        "game_counts": {str(k): v for k, v in counts.items()},
        "seen_query_players": seen,
    })
    return run.summary("gen-population", {"players": len(players), "base": len(partition.base),
                                          "finetune": len(partition.finetune), "fewshot": len(partition.fewshot),
                                          "clusters": pc.n_clusters}, t0)


def _generate_chunked(jobs, seed, stream_name, chunk=64):
    out = {}
    for c in range(0, len(jobs), chunk):
        out.update(pop.generate_many(jobs[c:c + chunk], seed, stream_name))
    return out


def gen_data(run: Run) -> dict:
    t0 = time.time()
    cfg = run.cfg
    players, part, counts, seen = run.population()
    by = _by_id(players)
    opps = pop.choose_opponents(players, cfg.seed, cfg.population.n_opponents)
    main = _generate_chunked([(by[i], opps[i], counts[i]) for i in part.base + part.finetune], cfg.seed, "games")
    n_few = cfg.population.reference_games + cfg.population.query_games
    few = _generate_chunked([(by[i], opps[i], n_few) for i in part.fewshot], cfg.seed, "games")
    query = _generate_chunked([(by[i], opps[i], cfg.population.query_games) for i in seen], cfg.seed, "query")
    io.save_datasets(run.path("data", "main"), main)
    io.save_datasets(run.path("data", "fewshot"), few)
    io.save_datasets(run.path("data", "seen_query"), query)
    samples = {k: int(sum(len(d) for d in v.values())) for k, v in
               (("main", main), ("fewshot", few), ("seen_query", query))}
    return run.summary("gen-data", {"samples": samples, "games": int(sum(counts[i] for i in part.base + part.finetune))}, t0)


def train_base(run: Run) -> dict:
    t0 = time.time()
    players, part, _, _ = run.population()
    main = run.datasets("main")
    net, report = tr.train_base([main[i] for i in part.base], run.cfg.net, run.cfg.opt, run.cfg.seed)
    digest = io.save_checkpoint(net, run.path("checkpoints", "base"))
    io.write_csv(run.path("curves", "base.csv"), report.curve, ["epoch", "split", "loss", "accuracy"])
    return run.summary("train-base", {**report.summary, "best_epoch": report.best_epoch,
                                      "epochs_run": report.epochs_run, "checkpoint_sha256": digest}, t0)


def finetune(run: Run) -> dict:
    t0 = time.time()
    players, part, _, _ = run.population()
    main = run.datasets("main")
    base = run.checkpoint("base")
    ft_sets = [main[i] for i in part.finetune]
    net, report = tr.finetune_mhr(base, ft_sets, run.cfg.opt, run.cfg.seed)
    digest = io.save_checkpoint(net, run.path("checkpoints", "finetuned"))
    io.write_csv(run.path("curves", "finetune.csv"), report.curve, ["epoch", "split", "loss", "accuracy"])
    e_base = tr.eval_per_player(base, ft_sets, "test", use_routing=False)
    e_ft = tr.eval_per_player(net, ft_sets, "test")
    rows = [{"player_id": i, "games": main[i].n_games, "base_accuracy": e_base.per_player[i],
             "finetuned_accuracy": e_ft.per_player[i]} for i in part.finetune]
    io.write_csv(run.path("results", "per_player_accuracy.csv"), rows)
    res = {"base_mean": e_base.mean, "finetuned_mean": e_ft.mean, "base_min": e_base.minimum,
           "base_max": e_base.maximum, "finetuned_min": e_ft.minimum, "finetuned_max": e_ft.maximum,
           "lift_points": 100 * (e_ft.mean - e_base.mean), "best_epoch": report.best_epoch,
           "epochs_run": report.epochs_run, "checkpoint_sha256": digest}
    io.write_json(run.path("results", "finetune.json"), res)
    return run.summary("finetune", res, t0)


def fewshot(run: Run) -> dict:
    t0 = time.time()
    players, part, _, seen = run.population()
    net = run.checkpoint("finetuned")
    few = run.datasets("fewshot")
    query = run.datasets("seen_query")
    sets, names = [], []
    for i in seen:
        sets.append(query[i])
        names.append(f"seen-query/{i}")
    for i in part.fewshot:
        sets.append(few[i].subset(part.reference[i]))
        names.append(f"reference/{i}")
    for i in part.fewshot:
        sets.append(few[i].subset(part.query[i]))
        names.append(f"query/{i}")
    vecs = tr.fewshot_fit_many(net, sets, names, run.cfg.opt, run.cfg.seed)
    io.save_vectors(run.path("vectors", "fewshot"), vecs)
    # few-shot conditioned model vs base on the held-out query games
    base = run.checkpoint("base")
    byname = {v.player_id: v for v in vecs}
    rows = []
    for i in part.fewshot:
        qd = few[i].subset(part.query[i])
        acc_fs = float(np.mean(net.logits_in_chunks(qd.states, byname[f"reference/{i}"]).argmax(1) == qd.actions))
        acc_b = float(np.mean(base.logits_in_chunks(qd.states, None).argmax(1) == qd.actions))
        rows.append({"player_id": i, "fewshot_accuracy": acc_fs, "base_accuracy": acc_b})
    io.write_csv(run.path("results", "fewshot_accuracy.csv"), rows)
    res = {"fits": len(vecs), "fewshot_mean_accuracy": float(np.mean([r["fewshot_accuracy"] for r in rows])),
           "base_mean_accuracy": float(np.mean([r["base_accuracy"] for r in rows]))}
    io.write_json(run.path("results", "fewshot.json"), res)
    return run.summary("fewshot", res, t0)


def _strip(vecs: dict, prefix: str) -> list[StyleVector]:
    return [StyleVector(v.logits, int(k.split("/")[1])) for k, v in vecs.items() if k.startswith(prefix + "/")]


def _roc_rows(roc):
    return [{"fpr": float(f), "tpr": float(t)} for f, t in roc]


def stylometry(run: Run) -> dict:
    t0 = time.time()
    net = run.checkpoint("finetuned")
    vecs = run.vectors("fewshot")
    universe = RoutingTensor(net.params["routing"], tuple(net.routing_ids))
    seen_q = _strip(vecs, "seen-query")
    r_seen = lab.stylometry_identify(seen_q, universe)
    refs = _strip(vecs, "reference")
    uni2 = RoutingTensor(np.concatenate([universe.rows, np.stack([r.logits for r in refs])]),
                         universe.player_ids + tuple(r.player_id for r in refs))
    r_unseen = lab.stylometry_identify(_strip(vecs, "query"), uni2)
    out = {}
    for name, r in (("seen", r_seen), ("unseen", r_unseen)):
        out[name] = {"top1": r.top1, "top5": r.topk(5), "queries": len(r.true_ids), "universe": len(r.universe_ids),
                     "per_query": [{"player_id": t, "predicted": p, "rank": int(k)}
                                   for t, p, k in zip(r.true_ids, r.predicted, r.ranks)]}
        io.write_csv(run.path("results", f"roc_{name}.csv"), _roc_rows(r.roc), ["fpr", "tpr"])
    io.write_json(run.path("results", "stylometry.json"), out)
    return run.summary("stylometry", {k: {"top1": v["top1"], "top5": v["top5"], "universe": v["universe"]}
                                      for k, v in out.items()}, t0)


def consistency(run: Run) -> dict:
    t0 = time.time()
    a = run.cfg.analysis
    players, part, _, _ = run.population()
    net = run.checkpoint("finetuned")
    few = run.datasets("fewshot")
    chosen = part.fewshot[:a.consistency_players]
    sets, names = [], []
    for i in chosen:
        ds = few[i]
        for s in range(a.consistency_splits):
            sets.append(ds.subset(np.arange(s, ds.n_games, a.consistency_splits)))
            names.append(f"split/{i}/{s}")
    vecs = tr.fewshot_fit_many(net, sets, names, run.cfg.opt, run.cfg.seed)
    io.save_vectors(run.path("vectors", "consistency"), vecs)
    split_vecs: dict = {}
    for v in vecs:
        split_vecs.setdefault(int(v.player_id.split("/")[1]), []).append(v)
    res = lab.consistency_within(split_vecs)
    rows = [{"kind": "within", "cosine": float(c)} for c in res.within] + \
           [{"kind": "cross", "cosine": float(c)} for c in res.cross]
    io.write_csv(run.path("results", "consistency_cosines.csv"), rows, ["kind", "cosine"])
    out = {"mean_within": res.mean_within, "mean_cross": res.mean_cross,
           "gap": res.mean_within - res.mean_cross, "mannwhitney_p": res.mannwhitney_p,
           "n_within": int(len(res.within)), "n_cross": int(len(res.cross))}
    io.write_json(run.path("results", "consistency.json"), out)
    return run.summary("consistency", out, t0)


def merge_check(run: Run) -> dict:
    t0 = time.time()
    a = run.cfg.analysis
    players, part, _, _ = run.population()
    net = run.checkpoint("finetuned")
    few = run.datasets("fewshot")
    refs = {v.player_id: v for v in _strip(run.vectors("fewshot"), "reference")}
    g = rngmod.stream(run.cfg.seed, "merge-pairs")
    all_pairs = [(x, y) for k, x in enumerate(part.fewshot) for y in part.fewshot[k + 1:]]
    pick = g.choice(len(all_pairs), size=min(a.merge_pairs, len(all_pairs)), replace=False)
    pairs = [all_pairs[k] for k in sorted(pick)]
    sets, names = [], []
    for x, y in pairs:
        sets.append(pop.merge_balanced(few[x].subset(part.reference[x]), few[y].subset(part.reference[y])))
        names.append(f"merge/{x}/{y}")
    merged = tr.fewshot_fit_many(net, sets, names, run.cfg.opt, run.cfg.seed)
    io.save_vectors(run.path("vectors", "merge"), merged)
    Z = net.params["routing"]
    rand_rows = rngmod.stream(run.cfg.seed, "merge-random-rows").integers(0, len(Z), len(pairs))
    rows = []
    for (x, y), mv, rr in zip(pairs, merged, rand_rows):
        m = lab.merge_consistency(mv, refs[x], refs[y], Z[rr])
        rows.append({"player_a": x, "player_b": y, "cos_to_average": m.cos_to_average,
                     "cos_to_random": m.cos_to_random, "cos_to_a": m.cos_to_each[0], "cos_to_b": m.cos_to_each[1],
                     "random_row_player": net.routing_ids[rr]})
    io.write_csv(run.path("results", "merge_cosines.csv"), rows)
    wins = [r["cos_to_average"] > r["cos_to_random"] for r in rows]
    out = {"pairs": len(rows), "fraction_average_beats_random": float(np.mean(wins)),
           "mean_cos_to_average": float(np.mean([r["cos_to_average"] for r in rows])),
           "mean_cos_to_random": float(np.mean([r["cos_to_random"] for r in rows]))}
    io.write_json(run.path("results", "merge.json"), out)
    return run.summary("merge-check", out, t0)


def probe_set(run: Run) -> gs.StateBatch:
    return gs.generate_probe_set(run.cfg.analysis.probe_size)


def probe(run: Run) -> dict:
    t0 = time.time()
    players, part, _, _ = run.population()
    by = _by_id(players)
    net = run.checkpoint("finetuned")
    pset = probe_set(run)
    styles = {pid: net.params["routing"][k] for k, pid in enumerate(net.routing_ids)}
    model_prof = lab.profile_many(net, styles, pset)
    rows = []
    for pid in net.routing_ids:
        sp = gs.probe_attributes(gs.scripted_chooser(by[pid].params), pset)
        for source, prof in (("model", model_prof[pid]), ("scripted", sp)):
            rows.append({"player_id": pid, "cluster": by[pid].cluster, "source": source,
                         **dict(zip(gs.ATTRIBUTES, prof.as_array().tolist()))})
    base_prof = lab.profile_model(run.checkpoint("base"), None, pset)
    rows.append({"player_id": "base", "cluster": -1, "source": "model",
                 **dict(zip(gs.ATTRIBUTES, base_prof.as_array().tolist()))})
    io.write_csv(run.path("results", "attribute_profiles.csv"), rows,
                 ["player_id", "cluster", "source", *gs.ATTRIBUTES])
    # selection purity against the ground-truth chase weight of each cluster
    centres = {}
    for p in players:
        centres.setdefault(p.cluster, []).append(p.params.chase_weight)
    cmean = {c: float(np.mean(v)) for c, v in centres.items()}
    high = {c for c, v in cmean.items() if v > np.median(list(cmean.values()))}
    try:
        sel = lab.select_top_attribute_players(model_prof, "aggression", run.cfg.analysis.steer_threshold_std)
        purity = float(np.mean([by[i].cluster in high for i in sel]))
    except ArgumentError:
        sel, purity = [], None
    vals = np.array([model_prof[i].as_array() for i in net.routing_ids])
    out = {"probe_size": len(pset), "probe_version": gs.PROBE_VERSION,
           "attribute_mean": dict(zip(gs.ATTRIBUTES, vals.mean(0).tolist())),
           "attribute_std": dict(zip(gs.ATTRIBUTES, vals.std(0).tolist())),
           "aggression_selection": sel, "aggression_selection_purity": purity}
    io.write_json(run.path("results", "probe.json"), out)
    return run.summary("probe", out, t0)


def _load_profiles(run: Run) -> dict:
    import csv
    path = run.path("results", "attribute_profiles.csv")
    if not path.exists():
        raise MissingArtifact(f"missing artifact {path}; run `probe` first")
    out = {}
    with path.open() as f:
        for r in csv.DictReader(f):
            if r["source"] == "model" and r["player_id"] != "base":
                out[int(r["player_id"])] = gs.AttributeProfile(*(float(r[a]) for a in gs.ATTRIBUTES))
    return out


def steer(run: Run, strength: float | None = None) -> dict:
    t0 = time.time()
    a = run.cfg.analysis
    strength = a.steer_strength if strength is None else strength
    net = run.checkpoint("finetuned")
    profiles = _load_profiles(run)
    pset = probe_set(run)
    ids = list(net.routing_ids)
    Z = {pid: StyleVector(net.params["routing"][k], pid) for k, pid in enumerate(ids)}
    vals = np.array([profiles[i].as_array() for i in ids])
    std = vals.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    g = rngmod.stream(run.cfg.seed, "steer-players")
    targets = [ids[k] for k in sorted(g.choice(len(ids), size=min(a.steer_players, len(ids)), replace=False))]
    rows, per_attr = [], {}
    for attr in a.steer_attributes:
        ai = gs.ATTRIBUTES.index(attr)
        try:
            sel = lab.select_top_attribute_players(profiles, attr, a.steer_threshold_std)
        except ArgumentError as e:
            per_attr[attr] = {"selected": [], "skipped": str(e)}
            continue
        delta = lab.style_delta([Z[i] for i in sel], list(Z.values()), attr)
        steered = {i: lab.steer(Z[i], delta, strength) for i in targets}
        after = lab.profile_many(net, steered, pset)
        on, off, inc = [], [], []
        for i in targets:
            change = (after[i].as_array() - profiles[i].as_array()) / std
            on.append(change[ai])
            off.append(np.mean(np.abs(np.delete(change, ai))))
            inc.append(after[i].as_array()[ai] > profiles[i].as_array()[ai])
            for aj, name in enumerate(gs.ATTRIBUTES):
                rows.append({"steer_attribute": attr, "player_id": i, "attribute": name,
                             "before": float(profiles[i].as_array()[aj]), "after": float(after[i].as_array()[aj]),
                             "normalized_change": float(change[aj])})
        per_attr[attr] = {"selected": sel, "k": delta.k, "fraction_increased": float(np.mean(inc)),
                          "mean_on_target": float(np.mean(on)), "mean_abs_off_target": float(np.mean(off)),
                          "delta_norm": float(np.linalg.norm(delta.delta))}
    io.write_csv(run.path("results", "steering.csv"), rows)
    out = {"strength": strength, "players": len(targets), "attributes": per_attr}
    io.write_json(run.path("results", "steering.json"), out)
    return run.summary("steer", out, t0)


def interpolate(run: Run, n_games: int | None = None) -> dict:
    t0 = time.time()
    a = run.cfg.analysis
    n_games = a.interp_games if n_games is None else n_games
    net = run.checkpoint("finetuned")
    ids = list(net.routing_ids)
    g = rngmod.stream(run.cfg.seed, "round-robin-pool")
    pool = [ids[k] for k in sorted(g.choice(len(ids), size=min(a.round_robin_pool, len(ids)), replace=False))]
    styles = {pid: StyleVector(net.params["routing"][ids.index(pid)], pid) for pid in pool}
    strength = lab.round_robin(net, styles, a.round_robin_games, run.cfg.seed)
    ranked = sorted(pool, key=lambda p: (strength[p], p))
    half = len(ranked) // 2
    weak, strong = ranked[:half], ranked[half:]
    combos = [(w, s) for w in weak for s in strong]
    pick = rngmod.stream(run.cfg.seed, "interp-pairs").choice(len(combos), size=min(a.interp_pairs, len(combos)),
                                                              replace=False)
    pairs = [combos[k] for k in sorted(pick)]
    curves = lab.interpolate_many(net, [(styles[w], styles[s]) for w, s in pairs], a.interp_lambdas, n_games,
                                  run.cfg.seed, [f"interpolate/{w}/{s}" for w, s in pairs])
    rows = []
    for (w, s), curve in zip(pairs, curves):
        for lam, wr in zip(a.interp_lambdas, curve):
            rows.append({"weak": w, "strong": s, "lambda": float(lam), "win_rate": float(wr),
                         "weak_strength": strength[w], "strong_strength": strength[s]})
    io.write_csv(run.path("results", "interpolation.csv"), rows)
    lam_all = np.repeat(np.asarray(a.interp_lambdas)[None, :], len(pairs), axis=0).ravel()
    rho = float(stats.spearmanr(lam_all, curves.ravel()).statistic)
    last = curves[:, -1]
    out = {"pairs": [list(p) for p in pairs], "games_per_point": n_games, "lambdas": list(a.interp_lambdas),
           "mean_curve": curves.mean(axis=0).tolist(), "winrate_at_1_pooled": float(last.mean()),
           "winrate_at_1_max_abs_dev": float(np.max(np.abs(last - 0.5))), "spearman": rho,
           "strength": {str(k): v for k, v in strength.items()}}
    io.write_json(run.path("results", "interpolation.json"), out)
    return run.summary("interpolate", out, t0)


def cluster_recovery(run: Run) -> dict:
    """K-means on the equal-budget few-shot fits against true cluster labels."""
    from sklearn.cluster import KMeans
    from sklearn.metrics import adjusted_rand_score

    players, _, _, _ = run.population()
    by = _by_id(players)
    vecs = run.vectors("fewshot")
    fits = _strip(vecs, "seen-query") + _strip(vecs, "reference")
    X = np.stack([v.logits.reshape(-1) for v in fits]).astype(np.float64)
    labels = [by[v.player_id].cluster for v in fits]
    k = run.cfg.population.n_clusters
    km = KMeans(n_clusters=k, n_init=10, random_state=rngmod.derive_key(run.cfg.seed, "kmeans") % (2**31))
    pred = km.fit_predict(X)
    return {"ari": float(adjusted_rand_score(labels, pred)), "k": k, "players": len(labels)}


REPORT_CSVS = ("cosine_hist_consistency.csv", "cosine_hist_merge.csv", "winrate_vs_lambda.csv",
               "steering_deltas.csv", "roc_seen.csv", "roc_unseen.csv", "attribute_profiles.csv")


def _hist_rows(values: dict, bins=np.linspace(-1, 1, 41)):
    rows = []
    for kind, v in values.items():
        counts, edges = np.histogram(v, bins=bins)
        rows += [{"kind": kind, "bin_lo": float(lo), "bin_hi": float(hi), "count": int(c)}
                 for lo, hi, c in zip(edges[:-1], edges[1:], counts)]
    return rows


def report(run: Run) -> dict:
    import csv
    import shutil

    t0 = time.time()
    rd = run.path("report")
    rd.mkdir(parents=True, exist_ok=True)

    def read_csv(name):
        p = run.path("results", name)
        if not p.exists():
            raise MissingArtifact(f"missing artifact {p}")
        with p.open() as f:
            return list(csv.DictReader(f))

    cons = read_csv("consistency_cosines.csv")
    io.write_csv(rd / "cosine_hist_consistency.csv",
                 _hist_rows({k: [float(r["cosine"]) for r in cons if r["kind"] == k] for k in ("within", "cross")}))
    merge = read_csv("merge_cosines.csv")
    io.write_csv(rd / "cosine_hist_merge.csv",
                 _hist_rows({"merged_vs_average": [float(r["cos_to_average"]) for r in merge],
                             "merged_vs_population": [float(r["cos_to_random"]) for r in merge]}))
    for src, dst in (("interpolation.csv", "winrate_vs_lambda.csv"), ("steering.csv", "steering_deltas.csv"),
                     ("roc_seen.csv", "roc_seen.csv"), ("roc_unseen.csv", "roc_unseen.csv"),
                     ("attribute_profiles.csv", "attribute_profiles.csv")):
        p = run.path("results", src)
        if not p.exists():
            raise MissingArtifact(f"missing artifact {p}")
        shutil.copyfile(p, rd / dst)
    summary = {name: run.result(name) for name in
               ("finetune", "fewshot", "stylometry", "consistency", "merge", "probe", "steering", "interpolation")}
    summary["stylometry"] = {k: {kk: vv for kk, vv in v.items() if kk != "per_query"}
                             for k, v in summary["stylometry"].items()}
    summary["cluster_recovery"] = cluster_recovery(run)
    base_sum = io.read_json(run.path("summaries", "train-base.json"))["result"]
    summary["train_base"] = base_sum
    io.write_json(rd / "summary.json", summary)
    return run.summary("report", {"csvs": list(REPORT_CSVS), "cluster_recovery": summary["cluster_recovery"]}, t0)


STAGES = {
    "gen-population": gen_population,
    "gen-data": gen_data,
    "train-base": train_base,
    "finetune": finetune,
    "fewshot": fewshot,
    "stylometry": stylometry,
    "consistency": consistency,
    "merge-check": merge_check,
    "probe": probe,
    "steer": steer,
    "interpolate": interpolate,
    "report": report,
}


def run_all(cfg: RunConfig, out, stages=None) -> dict:
    run = Run(cfg, out)
    results = {}
    for name in stages or STAGES:
        log.info("stage %s", name)
        results[name] = STAGES[name](run)
    return results
