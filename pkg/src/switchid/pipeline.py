"""Pipeline stages with file-based hand-off.

Each stage reads its inputs from the run directory, writes its artifact and
a metrics JSON, and returns the metrics.  Layout of a run directory::

    data/            trajectory CSVs + manifest.json        (simulate)
    labels.csv gmm.json                                     (cluster)
    tree.json                                               (classify)
    model.json                                              (identify)
    validation/rollout.csv                                  (validate)
    observer/estimates.csv observer/truth.csv               (estimate)
    metrics/<stage>.json  summary.json  figures/*.png
"""
from __future__ import annotations

import logging
import math
from pathlib import Path

import numpy as np

from . import gmm, io, plotting
from .config import RunConfig
from .errors import MissingArtifact
from .experiments import holdout_set, release, training_set
from .mhe import NoiseWeights, run_observer
from .pendulum import C1, C2, STATE_NAMES, NoiseSpec, Trajectory, sticking_condition_batch
from .sysid import CandidateLibrary, fit_switched_model, one_step_rmse, rmse, simulate_identified
from .tree import fit_tree

log = logging.getLogger(__name__)

STAGES = ("simulate", "cluster", "classify", "identify", "validate", "estimate")

DATA_DIR = "data"
LABELS = "labels.csv"
GMM = "gmm.json"
TREE = "tree.json"
MODEL = "model.json"
ROLLOUT = "validation/rollout.csv"
ESTIMATES = "observer/estimates.csv"
OBSERVER_TRUTH = "observer/truth.csv"

# fraction of the initial error the observer must stay below after settling
SETTLE_FRACTION = 0.05
SETTLE_TIME = 1.0


def _need(out: Path, rel: str, producer: str) -> Path:
    path = out / rel
    if not path.exists():
        raise MissingArtifact(f"{rel} not found in {out}; run the '{producer}' stage first")
    return path


def _write_metrics(out: Path, stage: str, metrics: dict) -> dict:
    io.write_json(out / "metrics" / f"{stage}.json", metrics)
    return metrics


def _dataset(out: Path):
    _need(out, f"{DATA_DIR}/{io.MANIFEST_NAME}", "simulate")
    return io.load_dataset(out / DATA_DIR)


def _split_features(trajs) -> np.ndarray:
    return np.vstack([t.split_features() for t in trajs])


def _true_classes(trajs):
    if any(t.classes is None for t in trajs):
        return None
    return np.concatenate([t.classes for t in trajs])


def library_from(cfg: RunConfig) -> CandidateLibrary:
    return CandidateLibrary.default(include_constant=cfg.sysid.include_constant, blocks=tuple(cfg.sysid.blocks))


def simulate(cfg: RunConfig, out) -> dict:
    out = Path(out)
    trajs = training_set(cfg.pendulum, cfg.data)
    io.save_dataset(out / DATA_DIR, trajs, cfg.pendulum.to_dict(), {"seed": cfg.data.seed})
    per_tag = {}
    for t in trajs:
        per_tag[t.experiment_tag] = per_tag.get(t.experiment_tag, 0) + len(t)
    classes = _true_classes(trajs)
    total = int(sum(per_tag.values()))
    return _write_metrics(out, "simulate", {
        "total_samples": total,
        "samples_per_tag": per_tag,
        "true_class_fraction_c1": float(np.mean(classes == C1)),
        "seed": cfg.data.seed,
    })


def cluster(cfg: RunConfig, out) -> dict:
    out = Path(out)
    trajs, _ = _dataset(out)
    F = np.vstack([t.cluster_features() for t in trajs])
    c = cfg.clustering
    model, lab = gmm.fit(F, seed=c.seed, tol=c.tol, max_iters=c.max_iters)
    io.write_labels(out / LABELS, lab)
    io.save_gmm(out / GMM, model)
    hist = np.asarray(model.loglik_history)
    metrics = {
        "samples": int(F.shape[0]),
        "n_iters": model.n_iters,
        "final_loglik": model.final_loglik,
        "min_loglik_increment": float(np.diff(hist).min()) if hist.size > 1 else 0.0,
        "fraction_c1": float(np.mean(lab.labels == C1)),
    }
    truth = _true_classes(trajs)
    if truth is not None:
        agree = float(np.mean(lab.labels == truth))
        metrics["agreement"] = max(agree, 1.0 - agree)
        metrics["agreement_same_order"] = agree
    return _write_metrics(out, "cluster", metrics)


def classify(cfg: RunConfig, out) -> dict:
    out = Path(out)
    trajs, _ = _dataset(out)
    lab = io.read_labels(_need(out, LABELS, "cluster"))
    X = _split_features(trajs)
    if X.shape[0] != len(lab):
        raise MissingArtifact(f"{LABELS} has {len(lab)} rows but the dataset has {X.shape[0]} samples; rerun 'cluster'")
    t = cfg.tree
    tree = fit_tree(X, lab.labels, t.max_depth, t.min_samples_leaf)
    io.save_tree(out / TREE, tree)
    Fh, Ch = holdout_set(cfg.pendulum, cfg.data)
    metrics = {
        "nodes": tree.n_nodes,
        "depth": tree.depth,
        "train_agreement_with_labels": float(np.mean(tree.predict(X) == lab.labels)),
        "holdout_samples": int(Fh.shape[0]),
        "holdout_accuracy": float(np.mean(tree.predict(Fh) == Ch)),
    }
    truth = _true_classes(trajs)
    if truth is not None:
        ref = fit_tree(X, truth, t.max_depth, t.min_samples_leaf)
        metrics["holdout_accuracy_true_labels"] = float(np.mean(ref.predict(Fh) == Ch))
    return _write_metrics(out, "classify", metrics)


def identify(cfg: RunConfig, out) -> dict:
    out = Path(out)
    trajs, _ = _dataset(out)
    lab = io.read_labels(_need(out, LABELS, "cluster"))
    tree = io.load_tree(_need(out, TREE, "classify"))
    s = cfg.sysid
    model = fit_switched_model(
        trajs, lab, tree, library_from(cfg), s.alpha_c1, s.alpha_c2, s.refit,
        tuple(s.alpha_grid), s.folds, s.penalty_center, s.rule,
    )
    io.save_model(out / MODEL, model)
    per_class = {}
    X = _split_features(trajs)
    Xn = np.vstack([tr.x_next for tr in trajs])
    for c in (C1, C2):
        m = lab.labels == c
        pred = model.predict(X[m, :3], X[m, 3], np.full(int(m.sum()), c))
        per_class[f"C{c}"] = rmse(pred, Xn[m]).tolist()
    return _write_metrics(out, "identify", {
        "alpha_c1": model.xi_c1.alpha.tolist(),
        "alpha_c2": model.xi_c2.alpha.tolist(),
        "nonzeros_c1": model.xi_c1.sparsity,
        "nonzeros_c2": model.xi_c2.sparsity,
        "one_step_rmse_by_label": per_class,
        "one_step_rmse_tree_classes": one_step_rmse(model, trajs).tolist(),
    })


def validate(cfg: RunConfig, out) -> dict:
    out = Path(out)
    model = io.load_model(_need(out, MODEL, "identify"))
    v = cfg.validation
    truth = release(cfg.pendulum, v.deflection, v.omega2, v.duration, model.dt)
    n = len(truth)
    pred, cls = simulate_identified(model, truth.states[0], truth.inputs)
    t = truth.time
    rows = []
    for k in range(n + 1):
        ct = truth.classes[k] if k < n else -1
        cm = cls[k] if k < n else -1
        rows.append((t[k], *truth.states[k], *pred[k], ct, cm))
    header = ["t"] + [f"{s}_true" for s in STATE_NAMES] + [f"{s}_model" for s in STATE_NAMES] + ["class_true", "class_model"]
    io.write_csv(out / ROLLOUT, header, rows)
    err = rmse(pred, truth.states)
    return _write_metrics(out, "validate", {
        "initial_state": truth.states[0].tolist(),
        "duration": v.duration,
        "rollout_rmse": dict(zip(STATE_NAMES, err.tolist())),
        "class_agreement": float(np.mean(cls == truth.classes)),
    })


def observer_weights(cfg: RunConfig) -> NoiseWeights:
    o = cfg.observer
    R = o.R if o.R is not None else max(cfg.data.noise_std[0] ** 2, 1e-12)
    return NoiseWeights(np.asarray(o.Q, dtype=float), R, np.asarray(o.P0, dtype=float))


def settle_metrics(err_norm: np.ndarray, e0: float, dt: float) -> dict:
    """Observer error summary relative to the initial error ``e0``.

    ``err_norm[k]`` is the error of the estimate at time ``(k + 1) dt``.
    """
    t = (np.arange(err_norm.size) + 1) * dt
    after = t >= SETTLE_TIME - 1e-12
    absolute = {
        "initial_error_norm": float(e0),
        "max_error_norm": float(err_norm.max()),
        "max_error_norm_after_settle_time": float(err_norm[after].max()) if after.any() else None,
        "settle_fraction": SETTLE_FRACTION,
        "settle_time": SETTLE_TIME,
    }
    if not e0 > 0:
        # no initial error to measure against
        return {**absolute, "max_relative_error_after_settle_time": None,
                "final_relative_error": None, "last_time_above_fraction": None}
    rel = err_norm / e0
    above = np.flatnonzero(rel >= SETTLE_FRACTION)
    # None: still above the threshold at the end of the run
    settle = float(t[above[-1]]) if above.size else 0.0
    if above.size and above[-1] == rel.size - 1:
        settle = None
    return {
        **absolute,
        "max_relative_error_after_settle_time": float(rel[after].max()) if after.any() else None,
        "final_relative_error": float(rel[-1]),
        "last_time_above_fraction": settle,
    }


def estimate(cfg: RunConfig, out) -> dict:
    out = Path(out)
    model = io.load_model(_need(out, MODEL, "identify"))
    o = cfg.observer
    noise = NoiseSpec(tuple(cfg.data.noise_std), o.noise_seed)
    if o.source == "model":
        truth = model_release(model, o.deflection, o.omega2, o.duration, noise)
    else:
        truth = release(cfg.pendulum, o.deflection, o.omega2, o.duration, model.dt, noise)
    n = len(truth)
    guess = truth.clean_states[0] + np.asarray(o.x0_offset, dtype=float)
    run = run_observer(
        model, truth.states[:n, 0], truth.inputs, o.horizon, observer_weights(cfg), guess,
        arrival=o.arrival, max_refreezes=o.max_refreezes, max_inner=o.max_inner, step_tol=o.step_tol,
    )
    t = truth.time[1:]
    io.write_estimates(out / ESTIMATES, t, run.estimates, run.costs, run.iterations, run.classes)
    io.write_trajectory(out / OBSERVER_TRUTH, _clean(truth))
    err = run.estimates - truth.clean_states[1:]
    en = np.linalg.norm(err, axis=1)
    metrics = settle_metrics(en, float(np.linalg.norm(np.asarray(o.x0_offset, dtype=float))), model.dt)
    metrics.update({
        "steps": n,
        "final_error": err[-1].tolist(),
        "rmse_after_settle_time": dict(zip(STATE_NAMES, rmse(run.estimates[t >= SETTLE_TIME], truth.clean_states[1:][t >= SETTLE_TIME]).tolist())),
        "class_agreement": float(np.mean(run.classes == truth.classes)),
        "mean_iterations": float(run.iterations.mean()),
    })
    return _write_metrics(out, "estimate", metrics)


def model_release(model, deflection: float, omega2: float, duration: float, noise: NoiseSpec) -> Trajectory:
    """Unforced release simulated by the identified model, noise as for the plant."""
    n = int(round(duration / model.dt))
    inputs = np.zeros(n)
    clean, classes = simulate_identified(model, (math.pi - deflection, 0.0, omega2), inputs)
    recorded = clean
    if any(s > 0 for s in noise.std):
        rng = np.random.default_rng(noise.seed)
        recorded = clean + rng.standard_normal(clean.shape) * np.asarray(noise.std)
    return Trajectory(recorded, inputs, model.dt, "drop-down", classes, clean, {"source": "model"})


def _clean(tr: Trajectory) -> Trajectory:
    return Trajectory(tr.clean_states, tr.inputs, tr.dt, tr.experiment_tag, tr.classes, None, tr.meta)


def figures(cfg: RunConfig, out) -> list:
    """Render the report figures from the artifacts on disk."""
    out = Path(out)
    fig = out / "figures"
    made = []
    trajs, _ = _dataset(out)
    lab = io.read_labels(_need(out, LABELS, "cluster"))
    first = trajs[0]
    made.append(plotting.clusters_figure(
        fig / "clusters.png", first.time, first.states, lab.labels[: len(first)], first.classes,
        title=f"{first.experiment_tag} run 0: clustered vs true regime"))
    made.append(plotting.loglik_figure(fig / "em_loglik.png", io.load_gmm(out / GMM).loglik_history,
                                       title="EM log-likelihood"))
    tree = io.load_tree(_need(out, TREE, "classify"))
    p = cfg.pendulum
    made.append(plotting.surface_figure(
        fig / "switching_surface.png", tree, lambda X, U: sticking_condition_batch(p, X, U),
        (math.pi - 0.7, math.pi + 0.7), (-8.0, 8.0)))
    _, tab = io.read_csv(_need(out, ROLLOUT, "validate"), ["t"])
    made.append(plotting.states_figure(
        fig / "validation.png", tab[:, 0], {"simulator": tab[:, 1:4], "identified model": tab[:, 4:7]},
        tab[:-1, 7], title="free-running identified model"))
    est = io.read_estimates(_need(out, ESTIMATES, "estimate"))
    tr = io.read_trajectory(_need(out, OBSERVER_TRUTH, "estimate"))
    X = np.column_stack([est["phi1_hat"], est["omega1_hat"], est["omega2_hat"]])
    made.append(plotting.states_figure(
        fig / "observer.png", tr.time, {"truth": tr.states, "estimate": np.vstack([[np.nan] * 3, X])},
        tr.classes, title="moving-horizon estimates"))
    en = np.linalg.norm(X - tr.states[1:], axis=1)
    made.append(plotting.error_figure(
        fig / "observer_error.png", tr.time[1:], en,
        SETTLE_FRACTION * np.linalg.norm(cfg.observer.x0_offset) or None, title="observer error norm"))
    return [str(m.relative_to(out)) for m in made]


def run_stage(stage: str, cfg: RunConfig, out) -> dict:
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}")
    return globals()[stage](cfg, out)


def run_all(cfg: RunConfig, out) -> dict:
    """Every stage in order, then figures and ``summary.json``."""
    out = Path(out)
    summary = {"config": cfg.to_dict(), "stages": {}}
    for stage in STAGES:
        log.info("stage %s", stage)
        try:
            summary["stages"][stage] = run_stage(stage, cfg, out)
        except Exception as exc:
            exc.stage = stage
            raise
    summary["figures"] = figures(cfg, out)
    io.write_json(out / "summary.json", summary)
    return summary
