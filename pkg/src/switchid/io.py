"""File formats: trajectory, label and estimate CSVs plus JSON artifacts.

Numbers are written with 17 significant digits so every float survives a
round trip bit-exactly and repeated runs produce identical bytes.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import MissingArtifact, SchemaMismatch
from .gmm import GmmModel, Labeling
from .pendulum import Trajectory
from .sysid import SwitchedModel
from .tree import DecisionTree

TRAJECTORY_COLUMNS = ("t", "phi1", "omega1", "omega2", "u", "class")
LABEL_COLUMNS = ("index", "label", "p1", "p2")
ESTIMATE_COLUMNS = ("t", "phi1_hat", "omega1_hat", "omega2_hat", "cost", "iters", "class_k")

MANIFEST_NAME = "manifest.json"


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path, required) -> tuple[list, np.ndarray]:
    """Header and float table; ``required`` columns must be present."""
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(f"missing file {path}")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaMismatch(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaMismatch(f"{path} lacks columns {missing}")
    try:
        table = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(header))
    except ValueError as exc:
        raise SchemaMismatch(f"{path} has malformed rows: {exc}") from exc
    return header, table


def write_trajectory(path, traj: Trajectory, with_class: bool = True) -> Path:
    """One row per recorded state; the last row repeats the final input slot as 0.

    Row ``i`` holds ``states[i]`` and, for ``i < n``, ``inputs[i]`` and the
    class of sample ``i``.  The terminal row has no sample; its ``u`` is
    written as 0 and its class as -1.
    """
    n = len(traj)
    t = traj.time
    u = np.append(traj.inputs, 0.0)
    cols = TRAJECTORY_COLUMNS if with_class and traj.classes is not None else TRAJECTORY_COLUMNS[:-1]
    rows = []
    for i in range(n + 1):
        row = [t[i], *traj.states[i], u[i]]
        if len(cols) == 6:
            row.append(int(traj.classes[i]) if i < n else -1)
        rows.append(row)
    return write_csv(path, cols, rows)


def read_trajectory(path, tag: str = "drop-down", meta: dict | None = None) -> Trajectory:
    header, table = read_csv(path, TRAJECTORY_COLUMNS[:-1])
    if table.shape[0] < 2:
        raise SchemaMismatch(f"{path} needs at least two rows")
    col = {h: table[:, i] for i, h in enumerate(header)}
    t = col["t"]
    steps = np.diff(t)
    dt = float(t[1] - t[0])
    if not dt > 0 or not np.allclose(steps, dt, rtol=1e-9, atol=1e-12):
        raise SchemaMismatch(f"{path} is not uniformly sampled")
    states = np.column_stack([col["phi1"], col["omega1"], col["omega2"]])
    inputs = col["u"][:-1]
    classes = col["class"][:-1].astype(int) if "class" in col else None
    return Trajectory(states, inputs, dt, tag, classes, None, meta or {})


def write_labels(path, lab: Labeling) -> Path:
    rows = ((i, int(lab.labels[i]), lab.posteriors[i, 0], lab.posteriors[i, 1]) for i in range(len(lab)))
    return write_csv(path, LABEL_COLUMNS, rows)


def read_labels(path) -> Labeling:
    header, table = read_csv(path, LABEL_COLUMNS)
    col = {h: table[:, i] for i, h in enumerate(header)}
    idx = col["index"].astype(int)
    if not np.array_equal(idx, np.arange(idx.size)):
        raise SchemaMismatch(f"{path} indices are not 0..n-1")
    labels = col["label"].astype(int)
    if not np.all(np.isin(labels, (1, 2))):
        raise SchemaMismatch(f"{path} contains labels other than 1 and 2")
    return Labeling(labels, np.column_stack([col["p1"], col["p2"]]))


def write_estimates(path, t, estimates, costs, iters, classes) -> Path:
    rows = (
        (t[k], *estimates[k], costs[k], int(iters[k]), int(classes[k]))
        for k in range(len(t))
    )
    return write_csv(path, ESTIMATE_COLUMNS, rows)


def read_estimates(path) -> dict:
    header, table = read_csv(path, ESTIMATE_COLUMNS)
    return {h: table[:, i] for i, h in enumerate(header)}


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=1, sort_keys=True, allow_nan=True) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


def read_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(f"missing file {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaMismatch(f"{path} is not valid JSON: {exc}") from exc


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    return v


def _typed(path, kind: str, build):
    d = read_json(path)
    if d.get("kind") != kind:
        raise SchemaMismatch(f"{path} is not a {kind} artifact")
    try:
        return build(d["data"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaMismatch(f"malformed {kind} artifact {path}: {exc}") from exc


def save_gmm(path, m: GmmModel) -> Path:
    return write_json(path, {"kind": "gmm", "data": m.to_dict()})


def load_gmm(path) -> GmmModel:
    return _typed(path, "gmm", GmmModel.from_dict)


def save_tree(path, t: DecisionTree) -> Path:
    return write_json(path, {"kind": "tree", "data": t.to_dict()})


def load_tree(path) -> DecisionTree:
    return _typed(path, "tree", DecisionTree.from_dict)


def save_model(path, m: SwitchedModel) -> Path:
    return write_json(path, {"kind": "switched-model", "data": m.to_dict()})


def load_model(path) -> SwitchedModel:
    return _typed(path, "switched-model", SwitchedModel.from_dict)


def save_dataset(directory, trajs, params: dict, extra: dict | None = None) -> Path:
    """Write one CSV per trajectory plus a manifest; returns the manifest path."""
    directory = Path(directory)
    entries = []
    for i, tr in enumerate(trajs):
        name = f"{tr.experiment_tag}_{i:03d}.csv"
        write_trajectory(directory / name, tr)
        entries.append({"file": name, "tag": tr.experiment_tag, "samples": len(tr), "meta": tr.meta})
    counts = {}
    for e in entries:
        counts[e["tag"]] = counts.get(e["tag"], 0) + e["samples"]
    manifest = {
        "kind": "dataset",
        "params": params,
        "dt": trajs[0].dt if trajs else None,
        "files": entries,
        "total_samples": sum(e["samples"] for e in entries),
        "samples_per_tag": counts,
    }
    if extra:
        manifest.update(extra)
    return write_json(directory / MANIFEST_NAME, manifest)


def load_dataset(directory) -> tuple[list, dict]:
    directory = Path(directory)
    manifest = read_json(directory / MANIFEST_NAME)
    if manifest.get("kind") != "dataset":
        raise SchemaMismatch(f"{directory / MANIFEST_NAME} is not a dataset manifest")
    trajs = []
    for e in manifest["files"]:
        tr = read_trajectory(directory / e["file"], e.get("tag", "drop-down"), e.get("meta", {}))
        if len(tr) != e["samples"]:
            raise SchemaMismatch(f"{e['file']} has {len(tr)} samples, manifest says {e['samples']}")
        trajs.append(tr)
    return trajs, manifest
