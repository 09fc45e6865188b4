"""Seeded experiment design for training, hold-out and evaluation data."""
from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from .pendulum import (
    NoiseSpec,
    PendulumParams,
    StepSpec,
    Trajectory,
    generate_dropdown,
    generate_torque_steps,
    sticking_condition_batch,
)


def breakaway_torque(p: PendulumParams) -> float:
    """Smallest constant torque that keeps the wheel slipping at any angle.

    The sticking test is ``|c (d1 w1 - a sin phi) + M| < rS`` with
    ``c = theta2 / (theta1 + theta2)``; for ``|M| >= c a + rS`` it fails for
    every angle at rest.
    """
    return p.coupling * p.a + p.rS


def default_torque_range(p: PendulumParams) -> tuple[float, float]:
    """Step levels 10% above breakaway (plus a 0.01 N m spread).

    Torque runs that never stick keep the torque-driven samples in one
    regime, which keeps the sticking cluster compact.
    """
    lo = 1.1 * p.coupling * p.a + p.rS
    return lo, lo + 0.01


def _initial_state(rng: np.random.Generator, deflection, omega2_range) -> tuple:
    d = rng.uniform(*deflection) * (1.0 if rng.random() < 0.5 else -1.0)
    return (math.pi - d, 0.0, float(rng.uniform(*omega2_range)))


def training_set(p: PendulumParams, data, seed: int | None = None) -> list[Trajectory]:
    """Drop-down releases followed by torque-step runs, all from ``data`` (a DataConfig).

    Every random draw comes from one generator seeded with ``seed``
    (default ``data.seed``); per-experiment noise and step seeds are drawn
    from it too.
    """
    seed = data.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    amp = data.torque_amplitude or default_torque_range(p)
    step = StepSpec(tuple(amp), tuple(data.dwell))
    out = []
    for _ in range(data.n_dropdown):
        x0 = _initial_state(rng, data.deflection, data.omega2_range)
        noise = NoiseSpec(tuple(data.noise_std), int(rng.integers(2**31)))
        out.append(generate_dropdown(p, x0, data.n_steps, data.dt, noise))
    for _ in range(data.n_torque):
        x0 = _initial_state(rng, data.deflection, data.omega2_range)
        s = int(rng.integers(2**31))
        noise = NoiseSpec(tuple(data.noise_std), int(rng.integers(2**31)))
        out.append(generate_torque_steps(p, x0, data.n_steps, data.dt, step, s, noise))
    return out


def holdout_set(p: PendulumParams, data, n_samples: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Fresh ``(features, true classes)`` for judging the switching surface.

    Uses the training design with a different seed and evenly spaced
    samples across all experiments; the class is the analytic sticking test
    on the recorded features.
    """
    n_samples = data.holdout_samples if n_samples is None else n_samples
    n_exp = max(2, math.ceil(2 * n_samples / data.n_steps))
    n_drop = n_exp // 2 if data.n_dropdown else 0
    n_torque = n_exp - n_drop if data.n_torque else 0
    if n_drop + n_torque == 0:
        n_drop = n_exp
    ho = replace(data, n_dropdown=max(n_drop, 0), n_torque=n_torque, seed=data.seed + 7919)
    F = np.vstack([t.split_features() for t in training_set(p, ho)])
    F = F[np.linspace(0, F.shape[0] - 1, min(n_samples, F.shape[0])).astype(int)]
    return F, sticking_condition_batch(p, F[:, :3], F[:, 3])


def release(p: PendulumParams, deflection: float, omega2: float, duration: float, dt: float,
            noise: NoiseSpec | None = None) -> Trajectory:
    """Unforced release from ``(pi - deflection, 0, omega2)``."""
    n = int(round(duration / dt))
    return generate_dropdown(p, (math.pi - deflection, 0.0, omega2), n, dt, noise)
