"""Checkpoint, style-vector and dataset files.

Every binary artifact is a pair ``<stem>.json`` (manifest: format version,
metadata, tensor index ``name -> shape, offset, dtype`` and the blob's
SHA-256) and ``<stem>.bin`` (concatenated little-endian arrays).
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import MissingArtifact
from .numeric import ParamStore
from .policy import NetConfig, PolicyNet
from .population import PlayerDataset
from .routing import StyleVector

FORMAT_VERSION = 1
_DTYPES = {"f4": "<f4", "f8": "<f8", "i8": "<i8", "u1": "u1", "i4": "<i4"}


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serialisable: {type(o)}")


def save_tensors(stem, tensors: dict, meta: dict | None = None) -> str:
    """Write ``stem.json`` + ``stem.bin``; returns the blob hash."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    index, chunks, offset = {}, [], 0
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        code = {np.dtype("float32"): "f4", np.dtype("float64"): "f8", np.dtype("int64"): "i8",
                np.dtype("int32"): "i4", np.dtype("uint8"): "u1"}[arr.dtype]
        raw = np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()
        index[name] = {"shape": list(arr.shape), "offset": offset, "nbytes": len(raw), "dtype": code}
        chunks.append(raw)
        offset += len(raw)
    blob = b"".join(chunks)
    digest = hashlib.sha256(blob).hexdigest()
    stem.with_suffix(".bin").write_bytes(blob)
    _dump_json(stem.with_suffix(".json"), {"format_version": FORMAT_VERSION, "meta": meta or {},
                                           "tensors": index, "blob_sha256": digest})
    return digest


def load_tensors(stem) -> tuple[dict, dict]:
    stem = Path(stem)
    man_path, bin_path = stem.with_suffix(".json"), stem.with_suffix(".bin")
    if not man_path.exists() or not bin_path.exists():
        raise MissingArtifact(f"missing artifact {stem} (.json/.bin)")
    manifest = json.loads(man_path.read_text())
    blob = bin_path.read_bytes()
    if hashlib.sha256(blob).hexdigest() != manifest["blob_sha256"]:
        raise MissingArtifact(f"artifact {stem} is corrupt (hash mismatch)")
    out = {}
    for name, ent in manifest["tensors"].items():
        a = np.frombuffer(blob, dtype=_DTYPES[ent["dtype"]], count=int(np.prod(ent["shape"], dtype=np.int64)),
                          offset=ent["offset"])
        out[name] = a.reshape(ent["shape"]).astype(a.dtype.newbyteorder("="))
    return out, manifest["meta"]


def save_checkpoint(net: PolicyNet, stem, extra: dict | None = None) -> str:
    meta = {"kind": "checkpoint", "net_config": net.cfg.to_dict(),
            "groups": net.params.groups, "routing_player_ids": list(net.routing_ids)}
    if extra:
        meta["extra"] = extra
    return save_tensors(stem, net.params.params, meta)


def load_checkpoint(stem) -> PolicyNet:
    tensors, meta = load_tensors(stem)
    cfg = NetConfig(**meta["net_config"])
    store = ParamStore()
    for name, arr in tensors.items():
        store.add(name, arr, meta["groups"][name])
    return PolicyNet(cfg, store, [_id(i) for i in meta["routing_player_ids"]])


def _id(i):
    return tuple(i) if isinstance(i, list) else i


def save_vectors(stem, vectors: list[StyleVector], meta: dict | None = None) -> str:
    rows = np.stack([v.logits for v in vectors]) if vectors else np.zeros((0, 0, 0), np.float32)
    m = {"kind": "style_vectors", "ids": [v.player_id for v in vectors]}
    m.update(meta or {})
    return save_tensors(stem, {"rows": rows.astype(np.float32)}, m)


def load_vectors(stem) -> list[StyleVector]:
    t, meta = load_tensors(stem)
    return [StyleVector(t["rows"][i], _id(pid)) for i, pid in enumerate(meta["ids"])]


ROW_DTYPE = np.dtype([("x", "<f4", (20,)), ("action", "u1"), ("game", "<u2")])


def save_datasets(stem, datasets: dict, meta: dict | None = None) -> str:
    """Packed (features, action, game) rows plus a per-player header table."""
    players, chunks, offset = [], [], 0
    for pid, ds in datasets.items():
        rows = np.empty(len(ds), dtype=ROW_DTYPE)
        rows["x"], rows["action"], rows["game"] = ds.states, ds.actions, ds.game
        players.append({"player_id": pid, "n_games": ds.n_games, "split": list(ds.split),
                        "row_offset": offset, "rows": len(ds)})
        chunks.append(rows)
        offset += len(ds)
    packed = np.concatenate(chunks) if chunks else np.empty(0, ROW_DTYPE)
    m = {"kind": "datasets", "players": players, "row_layout": "x:<f4[20],action:u1,game:<u2"}
    m.update(meta or {})
    return save_tensors(stem, {"rows": packed.view(np.uint8)}, m)


def load_datasets(stem) -> dict:
    t, meta = load_tensors(stem)
    packed = t["rows"].view(ROW_DTYPE)
    out = {}
    for ent in meta["players"]:
        r = packed[ent["row_offset"]:ent["row_offset"] + ent["rows"]]
        out[_id(ent["player_id"])] = PlayerDataset(
            _id(ent["player_id"]), np.array(r["x"], dtype=np.float32), r["action"].astype(np.int64),
            r["game"].astype(np.int64), ent["n_games"], tuple(ent["split"]))
    return out


def write_csv(path, rows: list[dict], columns: list[str] | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = columns or (list(rows[0]) if rows else [])
    with path.open("w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=columns)
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k)) for k in columns})


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _dump_json(path, obj)


def read_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(f"missing artifact {path}")
    return json.loads(path.read_text())


def write_trajectory_csv(path, result, game: int = 0) -> None:
    """Per-ply log of one recorded game: ply, side, raw cells, raw action."""
    sel = result.traj_game == game
    rows = [{"ply": int(p), "side": "LR"[int(p) % 2], "lx": int(c[0]), "ly": int(c[1]), "rx": int(c[2]),
             "ry": int(c[3]), "bx": int(c[4]), "by": int(c[5]), "action": int(a)}
            for p, c, a in zip(result.traj_ply[sel], result.traj_cells[sel], result.traj_raw[sel])]
    write_csv(path, rows, ["ply", "side", "lx", "ly", "rx", "ry", "bx", "by", "action"])
