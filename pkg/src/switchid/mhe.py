"""Moving-horizon state estimation over an identified switched model.

Only the pendulum angle is measured.  Each window holds ``N + 1``
measurement/input pairs ``(y_i, u_i)`` for ``i = k-N..k`` and the decision
variables are the states ``x_{k-N}..x_{k+1}``.  The estimate reported for
step ``k`` is the last of them, ``x_{k+1}``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .errors import IllConditioned, NonFinite
from .sysid import SwitchedModel

log = logging.getLogger(__name__)

ARRIVAL_MODES = ("filtered", "smoothed")


def _cholesky(a: np.ndarray, name: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"{name} must be symmetric positive definite") from exc


@dataclass(frozen=True)
class NoiseWeights:
    """Process covariance ``Q``, measurement variance ``R`` and initial prior covariance ``P``."""

    Q: np.ndarray
    R: float
    P: np.ndarray

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float)
        P = np.array(self.P, dtype=float)
        if Q.ndim == 1:
            Q = np.diag(Q)
        if P.ndim == 1:
            P = np.diag(P)
        if Q.shape != (3, 3) or P.shape != (3, 3):
            raise ValueError("Q and P must be 3x3")
        for name, m in (("Q", Q), ("P", P)):
            if not np.allclose(m, m.T, rtol=0, atol=1e-15 * max(1.0, np.abs(m).max())):
                raise ValueError(f"{name} must be symmetric")
            _cholesky(m, name)
        if not float(self.R) > 0:
            raise ValueError("R must be positive")
        Q.flags.writeable = False
        P.flags.writeable = False
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "R", float(self.R))

    @classmethod
    def default(cls, R: float = 1e-8) -> "NoiseWeights":
        return cls(np.diag([1e-8, 1e-5, 1e-3]), R, np.diag([1e-2, 1e-1, 1.0]))

    def scaled(self, c: float) -> "NoiseWeights":
        """Weights whose inverse covariances are multiplied by ``c``."""
        return NoiseWeights(self.Q / c, self.R / c, self.P / c)


@dataclass(frozen=True)
class MheProblem:
    """One window of the estimator.

    ``prior`` and ``prior_cov`` describe the belief about the first state of
    the window.  ``ys``/``us`` hold at most ``horizon + 1`` samples.
    ``guess`` optionally warm-starts the solver with ``len(ys) + 1`` states.
    """

    model: SwitchedModel
    horizon: int
    weights: NoiseWeights
    prior: np.ndarray
    prior_cov: np.ndarray
    ys: tuple = ()
    us: tuple = ()
    guess: np.ndarray | None = field(default=None, compare=False)
    arrival: str = "filtered"
    max_refreezes: int = 5
    max_inner: int = 50
    step_tol: float = 1e-9

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if len(self.ys) != len(self.us):
            raise ValueError("measurement and input buffers differ in length")
        if len(self.ys) > self.horizon + 1:
            raise ValueError("window holds more than horizon + 1 samples")
        if self.arrival not in ARRIVAL_MODES:
            raise ValueError(f"arrival must be one of {ARRIVAL_MODES}")
        object.__setattr__(self, "prior", np.asarray(self.prior, dtype=float).reshape(3))
        object.__setattr__(self, "prior_cov", np.asarray(self.prior_cov, dtype=float).reshape(3, 3))
        object.__setattr__(self, "ys", tuple(float(v) for v in self.ys))
        object.__setattr__(self, "us", tuple(float(v) for v in self.us))

    @property
    def full(self) -> bool:
        return len(self.ys) == self.horizon + 1

    def push(self, y: float, u: float) -> "MheProblem":
        """Append a sample to a window that is not yet full (start-up phase)."""
        if self.full:
            raise ValueError("window is full; use advance")
        return replace(self, ys=self.ys + (float(y),), us=self.us + (float(u),), guess=None)


@dataclass(frozen=True)
class MheSolution:
    states: np.ndarray
    cost: float
    iterations: int
    active_classes: np.ndarray
    converged: bool = True
    refreezes: int = 0

    @property
    def estimate(self) -> np.ndarray:
        return self.states[-1]


class _Residuals:
    """Whitened residual vector and its Jacobian for a fixed class sequence."""

    def __init__(self, p: MheProblem):
        self.p = p
        self.m = len(p.ys)
        self.y = np.asarray(p.ys)
        self.u = np.asarray(p.us)
        self.Lp = _cholesky(p.prior_cov, "prior covariance")
        self.Lq = _cholesky(p.weights.Q, "Q")
        self.Lp_inv = solve_triangular(self.Lp, np.eye(3), lower=True)
        self.Lq_inv = solve_triangular(self.Lq, np.eye(3), lower=True)
        self.sr = 1.0 / np.sqrt(p.weights.R)
        self.n_res = 3 + self.m + 3 * self.m
        self.n_var = 3 * (self.m + 1)

    def classes(self, X: np.ndarray) -> np.ndarray:
        return self.p.model.classify(X[:-1], self.u)

    def residual(self, X: np.ndarray, classes: np.ndarray) -> np.ndarray:
        m = self.m
        r = np.empty(self.n_res)
        r[:3] = self.Lp_inv @ (X[0] - self.p.prior)
        r[3:3 + m] = (self.y - X[:m, 0]) * self.sr
        w = X[1:] - self.p.model.predict(X[:-1], self.u, classes)
        r[3 + m:] = (w @ self.Lq_inv.T).ravel()
        return r

    def jacobian(self, X: np.ndarray, classes: np.ndarray) -> np.ndarray:
        m = self.m
        J = np.zeros((self.n_res, self.n_var))
        J[:3, :3] = self.Lp_inv
        J[3 + np.arange(m), 3 * np.arange(m)] = -self.sr
        A = self.p.model.jacobian(X[:-1], self.u, classes)
        base = 3 + m
        for i in range(m):
            rows = slice(base + 3 * i, base + 3 * i + 3)
            J[rows, 3 * i:3 * i + 3] = -self.Lq_inv @ A[i]
            J[rows, 3 * i + 3:3 * i + 6] = self.Lq_inv
        return J


def mhe_cost(p: MheProblem, states, classes=None) -> float:
    """Weighted least-squares cost of a candidate state sequence.

    Classes come from the model's tree at each ``(x_i, u_i)`` unless given.
    """
    X = np.asarray(states, dtype=float)
    if X.shape != (len(p.ys) + 1, 3):
        raise ValueError(f"expected {len(p.ys) + 1} states, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise NonFinite("state sequence contains non-finite values")
    res = _Residuals(p)
    if classes is None:
        classes = res.classes(X)
    r = res.residual(X, classes)
    return float(r @ r)


def cost_gradient(p: MheProblem, states, classes) -> np.ndarray:
    """Gradient of :func:`mhe_cost` with the class sequence held fixed."""
    X = np.asarray(states, dtype=float)
    res = _Residuals(p)
    return 2.0 * res.jacobian(X, classes).T @ res.residual(X, classes)


def rollout_guess(p: MheProblem) -> np.ndarray:
    """Initial iterate: the model propagated from the prior."""
    X = np.empty((len(p.ys) + 1, 3))
    X[0] = p.prior
    for i, u in enumerate(p.us):
        X[i + 1] = p.model.predict(X[i:i + 1], [u])[0]
    return X


def _levenberg_marquardt(res: _Residuals, X0: np.ndarray, classes: np.ndarray,
                         max_iter: int, step_tol: float):
    """Damped Gauss-Newton with frozen classes; returns ``(X, cost, iters, converged, costs)``."""
    shape = X0.shape
    z = X0.ravel().copy()
    r = res.residual(X0, classes)
    cost = float(r @ r)
    costs = [cost]
    mu = None
    nu = 2.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        J = res.jacobian(z.reshape(shape), classes)
        H = J.T @ J
        g = J.T @ r
        if mu is None:
            mu = 1e-9 * max(float(np.max(np.diag(H))), 1.0)
        while True:
            try:
                factor = cho_factor(H + mu * np.eye(H.shape[0]))
                break
            except np.linalg.LinAlgError:
                mu *= 10.0
                if mu > 1e30:
                    raise IllConditioned("normal equations not factorable at maximal damping")
        delta = -cho_solve(factor, g)
        z_new = z + delta
        r_new = res.residual(z_new.reshape(shape), classes)
        cost_new = float(r_new @ r_new)
        step = float(np.linalg.norm(delta))
        if np.isfinite(cost_new) and cost_new <= cost:
            z, r, cost = z_new, r_new, cost_new
            costs.append(cost)
            mu = max(mu / 3.0, 1e-300)
            nu = 2.0
        else:
            mu *= nu
            nu *= 2.0
        if step < step_tol:
            converged = True
            break
    return z.reshape(shape), cost, it, converged, costs


def solve(p: MheProblem) -> MheSolution:
    """Minimise :func:`mhe_cost` over the window.

    The class sequence is frozen from the current iterate, the smooth
    problem is solved, and the classes are re-evaluated; this repeats at most
    ``max_refreezes`` times and the iterate with the lowest switched cost
    wins.
    """
    if len(p.ys) == 0:
        raise ValueError("window holds no measurements")
    res = _Residuals(p)
    X = rollout_guess(p) if p.guess is None else np.array(p.guess, dtype=float)
    if X.shape != (res.m + 1, 3):
        raise ValueError("warm start has the wrong shape")
    classes = res.classes(X)
    best = None
    total = 0
    converged = False
    for refreeze in range(p.max_refreezes + 1):
        X, cost, iters, converged, _ = _levenberg_marquardt(res, X, classes, p.max_inner, p.step_tol)
        total += iters
        if not np.all(np.isfinite(X)):
            raise NonFinite("estimator iterate became non-finite")
        new_classes = res.classes(X)
        consistent = np.array_equal(new_classes, classes)
        switched = cost if consistent else float(np.sum(res.residual(X, new_classes) ** 2))
        if best is None or switched < best[1]:
            best = (X.copy(), switched, classes.copy(), refreeze)
        if consistent:
            break
        classes = new_classes
    X, cost, classes, refreeze = best
    if not converged:
        log.debug("estimator stopped at the iteration limit (cost %.3e)", cost)
    return MheSolution(X, cost, total, classes, converged, refreeze)


def _propagate(model: SwitchedModel, x: np.ndarray, u: float, P: np.ndarray, Q: np.ndarray):
    c = model.classify(x[None, :], [u])
    A = model.jacobian(x[None, :], [u], c)[0]
    x_next = model.predict(x[None, :], [u], c)[0]
    P_next = A @ P @ A.T + Q
    return x_next, 0.5 * (P_next + P_next.T)


def _measurement_update(x: np.ndarray, P: np.ndarray, y: float, R: float):
    s = P[0, 0] + R
    k = P[:, 0] / s
    x_post = x + k * (y - x[0])
    I_KH = np.eye(3)
    I_KH[:, 0] -= k
    # Joseph form keeps P symmetric positive definite
    P_post = I_KH @ P @ I_KH.T + R * np.outer(k, k)
    return x_post, 0.5 * (P_post + P_post.T)


def advance(p: MheProblem, sol: MheSolution, new_y: float, new_u: float) -> MheProblem:
    """Slide a full window by one sample and update the arrival prior.

    The prior covariance gets an extended Kalman filter measurement update
    with the sample leaving the window, followed by a time update through the
    model linearised at the updated state.  In ``filtered`` mode the prior
    mean follows the same filter; in ``smoothed`` mode it is taken from the
    window solution.
    """
    if not p.full:
        raise ValueError("advance needs a full window; use push during start-up")
    x_post, P_post = _measurement_update(p.prior, p.prior_cov, p.ys[0], p.weights.R)
    x_pred, P_pred = _propagate(p.model, x_post, p.us[0], P_post, p.weights.Q)
    prior = x_pred if p.arrival == "filtered" else sol.states[1].copy()
    # warm start: drop the first state, extend by one model step
    guess = np.vstack([sol.states[1:], p.model.predict(sol.states[-1:], [new_u])])
    return replace(
        p,
        prior=prior,
        prior_cov=P_pred,
        ys=p.ys[1:] + (float(new_y),),
        us=p.us[1:] + (float(new_u),),
        guess=guess,
    )


@dataclass(frozen=True)
class ObserverRun:
    """Per-step outputs of :func:`run_observer`; row ``k`` estimates ``x_{k+1}``."""

    estimates: np.ndarray
    costs: np.ndarray
    iterations: np.ndarray
    classes: np.ndarray
    min_prior_eig: np.ndarray


def run_observer(model: SwitchedModel, measurements, inputs, horizon: int, weights: NoiseWeights,
                 x0_guess, arrival: str = "filtered", **solver) -> ObserverRun:
    """Run the estimator over a measurement sequence.

    Until the window is full a full-information problem over all samples so
    far is solved with ``x0_guess`` as prior; afterwards the window slides.
    """
    ys = np.asarray(measurements, dtype=float).reshape(-1)
    us = np.asarray(inputs, dtype=float).reshape(-1)
    if ys.shape != us.shape:
        raise ValueError("measurements and inputs differ in length")
    if ys.shape[0] < horizon + 1:
        raise ValueError(f"need at least {horizon + 1} measurements")
    n = ys.shape[0]
    est = np.empty((n, 3))
    costs = np.empty(n)
    iters = np.empty(n, dtype=int)
    cls = np.empty(n, dtype=int)
    min_eig = np.empty(n)
    p = MheProblem(model, horizon, weights, x0_guess, weights.P, arrival=arrival, **solver)
    sol = None
    for k in range(n):
        if p.full:
            p = advance(p, sol, ys[k], us[k])
        else:
            guess = None if sol is None else np.vstack([sol.states, model.predict(sol.states[-1:], [us[k]])])
            p = replace(p.push(ys[k], us[k]), guess=guess)
        sol = solve(p)
        est[k] = sol.estimate
        costs[k] = sol.cost
        iters[k] = sol.iterations
        cls[k] = sol.active_classes[-1]
        min_eig[k] = float(np.linalg.eigvalsh(p.prior_cov)[0])
    return ObserverRun(est, costs, iters, cls, min_eig)
