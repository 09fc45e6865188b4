"""Inertia wheel pendulum with a sticking/slipping wheel.

Ground-truth plant used to generate training and validation data.  The
state is ``x = (phi1, omega1, omega2)``: pendulum angle, pendulum angular
velocity and wheel velocity relative to the pendulum.  The input is the
motor torque ``u = M``.

Class labels are the integers :data:`C1` (wheel sticks) and :data:`C2`
(wheel slips).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import NonFinite

C1 = 1
C2 = 2
CLASSES = (C1, C2)

STATE_NAMES = ("phi1", "omega1", "omega2")


def _sign(v: float) -> float:
    if v > 0.0:
        return 1.0
    if v < 0.0:
        return -1.0
    return 0.0


@dataclass(frozen=True)
class PendulumParams:
    """Physical parameters.

    The defaults are not measured values.  They give a release from
    ``(pi - 0.45, 0, 0)`` a few dozen stick/slip alternations before the wheel
    finally sticks, and keep the sticking band ``|phi1 - pi| < ~0.33`` wide
    enough that the two regimes are well populated.  ``thetac`` defaults to
    the reduced inertia ``theta1*theta2/(theta1 + theta2)``.  The Stribeck
    exponent uses ``|omega2|`` by default; the literal signed exponent grows
    without bound for negative wheel speeds.
    """

    a: float = 3.0
    theta1: float = 0.012
    theta2: float = 5e-5
    thetac: float = 0.012 * 5e-5 / (0.012 + 5e-5)
    d1: float = 0.002
    d2: float = 3e-4
    rC: float = 0.0005
    rS: float = 0.004
    omega20: float = 0.1
    stribeck_abs_exponent: bool = True

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name != "stribeck_abs_exponent" and not math.isfinite(v):
                raise ValueError(f"parameter {f.name} must be finite, got {v}")
        if self.theta1 <= 0 or self.theta2 <= 0 or self.thetac <= 0:
            raise ValueError("inertias must be positive")
        if self.d1 < 0 or self.d2 < 0:
            raise ValueError("damping coefficients must be non-negative")
        if not (self.rS >= self.rC >= 0):
            raise ValueError("friction levels must satisfy rS >= rC >= 0")
        if self.omega20 <= 0:
            raise ValueError("omega20 must be positive")

    @property
    def coupling(self) -> float:
        """Inertia ratio theta2 / (theta1 + theta2) of the sticking condition."""
        return self.theta2 / (self.theta1 + self.theta2)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "PendulumParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown pendulum parameters: {sorted(unknown)}")
        return cls(**d)


def sticking_condition(p: PendulumParams, x, u: float) -> int:
    """Return C1 when the static friction can hold the wheel, else C2."""
    required = p.coupling * (p.d1 * x[1] - p.a * math.sin(x[0])) + u
    return C1 if abs(required) < p.rS else C2


def sticking_condition_batch(p: PendulumParams, X: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Vectorised :func:`sticking_condition` over rows of ``X``."""
    X = np.asarray(X, dtype=float)
    required = p.coupling * (p.d1 * X[:, 1] - p.a * np.sin(X[:, 0])) + np.asarray(U, dtype=float)
    return np.where(np.abs(required) < p.rS, C1, C2)


def stribeck_torque(p: PendulumParams, omega2: float) -> float:
    """Friction torque on the slipping wheel.

    The exponent is used as printed, ``exp(-omega2/omega20)``, unless
    ``p.stribeck_abs_exponent`` selects the symmetric ``exp(-|omega2|/omega20)``.
    """
    s = _sign(omega2)
    if s == 0.0:
        return 0.0
    arg = -abs(omega2) / p.omega20 if p.stribeck_abs_exponent else -omega2 / p.omega20
    return p.rC * s + (p.rS - p.rC) * math.exp(arg) * s


def _field(p: PendulumParams, phi1: float, omega1: float, omega2: float, u: float, c: int):
    s = math.sin(phi1)
    if c == C1:
        return omega1, (p.a * s - p.d1 * omega1) / p.theta1, 0.0
    ms = stribeck_torque(p, omega2)
    return (
        omega1,
        (p.a * s - p.d1 * omega1 + p.d2 * omega2 - u + ms) / p.theta1,
        -p.a / p.theta1 * s + p.d1 / p.theta1 * omega1 + (u - ms - p.d2 * omega2) / p.thetac,
    )


def vector_field(p: PendulumParams, x, u: float, c: int) -> np.ndarray:
    """Continuous-time right-hand side for class ``c``."""
    if c not in CLASSES:
        raise ValueError(f"unknown class {c!r}")
    return np.array(_field(p, float(x[0]), float(x[1]), float(x[2]), float(u), c))


def _rk4(p, x0, x1, x2, u, dt, c):
    k1 = _field(p, x0, x1, x2, u, c)
    h = 0.5 * dt
    k2 = _field(p, x0 + h * k1[0], x1 + h * k1[1], x2 + h * k1[2], u, c)
    k3 = _field(p, x0 + h * k2[0], x1 + h * k2[1], x2 + h * k2[2], u, c)
    k4 = _field(p, x0 + dt * k3[0], x1 + dt * k3[1], x2 + dt * k3[2], u, c)
    w = dt / 6.0
    n0 = x0 + w * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    n1 = x1 + w * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    if c == C1:
        # sticking freezes the wheel bit-exactly
        n2 = x2
    else:
        n2 = x2 + w * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    return n0, n1, n2


def step(p: PendulumParams, x, u: float, dt: float) -> tuple[np.ndarray, int]:
    """Advance one sampling interval with the class frozen at its start."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    c = sticking_condition(p, x, u)
    nxt = _rk4(p, float(x[0]), float(x[1]), float(x[2]), float(u), float(dt), c)
    if not all(math.isfinite(v) for v in nxt):
        raise NonFinite(f"state diverged stepping from {tuple(x)} with u={u}")
    return np.array(nxt), c


def mechanical_energy(p: PendulumParams, x) -> float:
    """Kinetic plus potential energy of pendulum and wheel."""
    phi1, omega1, omega2 = float(x[0]), float(x[1]), float(x[2])
    return (
        0.5 * p.theta1 * omega1 ** 2
        + 0.5 * p.theta2 * (omega1 + omega2) ** 2
        + p.a * math.cos(phi1)
    )


@dataclass(frozen=True)
class NoiseSpec:
    """Additive Gaussian noise on recorded states, one std per channel."""

    std: tuple = (1e-4, 1e-3, 1e-2)
    seed: int = 0

    def __post_init__(self):
        if len(self.std) != 3 or any(s < 0 for s in self.std):
            raise ValueError("noise std must be three non-negative values")


NO_NOISE = NoiseSpec(std=(0.0, 0.0, 0.0))


@dataclass(frozen=True)
class StepSpec:
    """Random torque step sequence.

    Each step holds a torque of magnitude uniform in ``amplitude`` with a
    random sign for a dwell time uniform in ``dwell`` (seconds).
    """

    amplitude: tuple = (0.0, 0.02)
    dwell: tuple = (0.2, 1.0)

    def __post_init__(self):
        lo, hi = self.amplitude
        if lo < 0 or hi < lo:
            raise ValueError("amplitude range must satisfy 0 <= low <= high")
        dlo, dhi = self.dwell
        if dlo <= 0 or dhi < dlo:
            raise ValueError("dwell range must satisfy 0 < low <= high")


@dataclass(frozen=True)
class Trajectory:
    """Sampled experiment.

    ``states`` holds the ``n + 1`` recorded (possibly noisy) states, so sample
    ``i`` is the tuple ``(states[i], inputs[i], states[i + 1])``.  ``classes``
    holds the ground-truth class of each sample and ``clean_states`` the
    noise-free simulation, both ``None`` for data loaded without them.
    """

    states: np.ndarray
    inputs: np.ndarray
    dt: float
    experiment_tag: str = "drop-down"
    classes: np.ndarray | None = None
    clean_states: np.ndarray | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        inputs = np.asarray(self.inputs, dtype=float)
        if states.ndim != 2 or states.shape[1] != 3:
            raise ValueError("states must have shape (n + 1, 3)")
        if inputs.shape != (states.shape[0] - 1,):
            raise ValueError("need exactly one input per sample")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "states", _frozen(states))
        object.__setattr__(self, "inputs", _frozen(inputs))
        if self.classes is not None:
            classes = np.asarray(self.classes, dtype=int)
            if classes.shape != inputs.shape:
                raise ValueError("need exactly one class per sample")
            object.__setattr__(self, "classes", _frozen(classes))
        if self.clean_states is not None:
            clean = np.asarray(self.clean_states, dtype=float)
            if clean.shape != states.shape:
                raise ValueError("clean_states must match states")
            object.__setattr__(self, "clean_states", _frozen(clean))

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def x(self) -> np.ndarray:
        return self.states[:-1]

    @property
    def x_next(self) -> np.ndarray:
        return self.states[1:]

    @property
    def time(self) -> np.ndarray:
        return np.arange(self.states.shape[0]) * self.dt

    def cluster_features(self) -> np.ndarray:
        """Rows ``(phi1, omega1, omega2, M, phi1', omega1', omega2')``."""
        return np.column_stack([self.x, self.inputs, self.x_next])

    def split_features(self) -> np.ndarray:
        """Rows ``(phi1, omega1, omega2, M)``."""
        return np.column_stack([self.x, self.inputs])


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def simulate(p: PendulumParams, x0, inputs, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free simulation; returns ``(states[n+1, 3], classes[n])``."""
    inputs = np.asarray(inputs, dtype=float)
    n = inputs.shape[0]
    states = np.empty((n + 1, 3))
    classes = np.empty(n, dtype=int)
    x0_, x1_, x2_ = (float(v) for v in x0)
    states[0] = (x0_, x1_, x2_)
    for k in range(n):
        u = float(inputs[k])
        c = sticking_condition(p, (x0_, x1_), u)
        x0_, x1_, x2_ = _rk4(p, x0_, x1_, x2_, u, dt, c)
        if not (math.isfinite(x0_) and math.isfinite(x1_) and math.isfinite(x2_)):
            raise NonFinite(f"simulation diverged at step {k}")
        states[k + 1] = (x0_, x1_, x2_)
        classes[k] = c
    return states, classes


def _record(p, x0, inputs, dt, noise: NoiseSpec | None, tag: str, meta: dict) -> Trajectory:
    clean, classes = simulate(p, x0, inputs, dt)
    recorded = clean
    if noise is not None and any(s > 0 for s in noise.std):
        rng = np.random.default_rng(noise.seed)
        recorded = clean + rng.standard_normal(clean.shape) * np.asarray(noise.std)
    return Trajectory(recorded, inputs, dt, tag, classes, clean, meta)


def generate_dropdown(
    p: PendulumParams, x0, n_steps: int, dt: float, noise: NoiseSpec | None = None
) -> Trajectory:
    """Unactuated release from ``x0``."""
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    meta = {"x0": [float(v) for v in x0], "noise_seed": None if noise is None else noise.seed}
    return _record(p, x0, np.zeros(n_steps), dt, noise, "drop-down", meta)


def torque_step_inputs(n_steps: int, dt: float, spec: StepSpec, seed: int) -> np.ndarray:
    """Piecewise-constant random torque sequence of length ``n_steps``."""
    rng = np.random.default_rng(seed)
    u = np.empty(n_steps)
    k = 0
    while k < n_steps:
        dwell = max(1, int(round(rng.uniform(*spec.dwell) / dt)))
        level = rng.uniform(*spec.amplitude) * (1.0 if rng.random() < 0.5 else -1.0)
        u[k:k + dwell] = level
        k += dwell
    return u


def generate_torque_steps(
    p: PendulumParams,
    x0,
    n_steps: int,
    dt: float,
    step_spec: StepSpec,
    seed: int,
    noise: NoiseSpec | None = None,
) -> Trajectory:
    """Release from ``x0`` under a seeded random torque step sequence."""
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    inputs = torque_step_inputs(n_steps, dt, step_spec, seed)
    meta = {
        "x0": [float(v) for v in x0],
        "seed": int(seed),
        "noise_seed": None if noise is None else noise.seed,
    }
    tag = "torque-steps" if np.any(inputs != 0) else "drop-down"
    return _record(p, x0, inputs, dt, noise, tag, meta)
