"""Sparse discrete-time identification of the two regime models.

Each regime is modelled as ``x_{k+1} = Xi @ psi(x_k, u_k)`` with a fixed
candidate library ``psi`` and a sparse coefficient matrix ``Xi`` found by
l1-penalised least squares (coordinate descent with soft thresholding).
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyClass, NonFinite, RankDeficient, SchemaMismatch
from .gmm import Labeling
from .pendulum import C1, C2, STATE_NAMES, Trajectory
from .tree import DecisionTree

log = logging.getLogger(__name__)

_OPS = ("x", "x2", "sin", "cos", "sign", "u", "const")

DEFAULT_ALPHA_GRID = (1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1)

# "identity" penalises the deviation of Xi from the map x_{k+1} = x_k,
# "zero" penalises Xi itself
PENALTY_CENTERS = ("identity", "zero")


@dataclass(frozen=True)
class CandidateLibrary:
    """Ordered regressor terms ``(op, state_index)``.

    ``op`` is one of ``x``, ``x2``, ``sin``, ``cos``, ``sign`` (applied to
    state ``state_index``), ``u`` (the input) or ``const``.
    """

    terms: tuple

    def __post_init__(self):
        if len(self.terms) == 0:
            raise ValueError("library needs at least one term")
        for op, idx in self.terms:
            if op not in _OPS:
                raise ValueError(f"unknown library op {op!r}")
            if op in ("x", "x2", "sin", "cos", "sign") and idx not in (0, 1, 2):
                raise ValueError(f"state index {idx} out of range for {op}")

    @classmethod
    def default(cls, include_constant: bool = False, blocks=("x", "x2", "sin", "cos", "sign", "u")):
        terms = []
        for op in blocks:
            if op == "u":
                terms.append(("u", None))
            else:
                terms.extend((op, i) for i in range(3))
        if include_constant:
            terms.append(("const", None))
        return cls(tuple(terms))

    @classmethod
    def linear(cls) -> "CandidateLibrary":
        return cls(tuple(("x", i) for i in range(3)) + (("u", None),))

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    @property
    def names(self) -> list:
        out = []
        for op, i in self.terms:
            s = STATE_NAMES[i] if i is not None else None
            out.append({
                "x": s, "x2": f"{s}^2", "sin": f"sin({s})", "cos": f"cos({s})",
                "sign": f"sign({s})", "u": "u", "const": "1",
            }[op])
        return out

    def evaluate(self, X, U) -> np.ndarray:
        """Regressor matrix with one row per sample, shape ``(n, n_terms)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        U = np.asarray(U, dtype=float).reshape(-1)
        out = np.empty((X.shape[0], self.n_terms))
        for k, (op, i) in enumerate(self.terms):
            if op == "x":
                out[:, k] = X[:, i]
            elif op == "x2":
                out[:, k] = X[:, i] ** 2
            elif op == "sin":
                out[:, k] = np.sin(X[:, i])
            elif op == "cos":
                out[:, k] = np.cos(X[:, i])
            elif op == "sign":
                out[:, k] = np.sign(X[:, i])
            elif op == "u":
                out[:, k] = U
            else:
                out[:, k] = 1.0
        return out

    def state_jacobian(self, X) -> np.ndarray:
        """``d psi / d x`` per sample, shape ``(n, n_terms, 3)``; sign terms count as flat."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        J = np.zeros((X.shape[0], self.n_terms, 3))
        for k, (op, i) in enumerate(self.terms):
            if op == "x":
                J[:, k, i] = 1.0
            elif op == "x2":
                J[:, k, i] = 2.0 * X[:, i]
            elif op == "sin":
                J[:, k, i] = np.cos(X[:, i])
            elif op == "cos":
                J[:, k, i] = -np.sin(X[:, i])
        return J

    def identity_map(self) -> np.ndarray:
        """Coefficients ``(3, n_terms)`` of ``x_{k+1} = x_k`` in this library.

        Rows whose linear state term is absent stay zero.
        """
        out = np.zeros((3, self.n_terms))
        for k, (op, i) in enumerate(self.terms):
            if op == "x":
                out[i, k] = 1.0
        return out

    def to_list(self) -> list:
        return [[op, i] for op, i in self.terms]

    @classmethod
    def from_list(cls, items) -> "CandidateLibrary":
        return cls(tuple((op, None if i is None else int(i)) for op, i in items))


def evaluate_library(lib: CandidateLibrary, x, u: float) -> np.ndarray:
    return lib.evaluate(np.asarray(x, dtype=float)[None, :], [u])[0]


@dataclass(frozen=True)
class DataMatrices:
    X: np.ndarray
    X_next: np.ndarray
    U: np.ndarray
    cls: int

    def __post_init__(self):
        if not (self.X.shape[0] == self.X_next.shape[0] == self.U.shape[0]):
            raise ValueError("X, X', U must have equal row counts")

    def __len__(self) -> int:
        return self.X.shape[0]


def _label_array(labels) -> np.ndarray:
    if isinstance(labels, Labeling):
        return labels.labels
    return np.asarray(labels)


def partition_data(trajs, labels) -> tuple[DataMatrices, DataMatrices]:
    """Split all samples of ``trajs`` into per-class data matrices, keeping order."""
    trajs = [trajs] if isinstance(trajs, Trajectory) else list(trajs)
    labels = _label_array(labels)
    X = np.vstack([t.x for t in trajs])
    Xn = np.vstack([t.x_next for t in trajs])
    U = np.concatenate([t.inputs for t in trajs])[:, None]
    if labels.shape[0] != X.shape[0]:
        raise ValueError(f"{labels.shape[0]} labels for {X.shape[0]} samples")
    out = []
    for c in (C1, C2):
        sel = labels == c
        if not np.any(sel):
            raise EmptyClass(f"class C{c} received no samples")
        out.append(DataMatrices(X[sel], Xn[sel], U[sel], c))
    return out[0], out[1]


@dataclass(frozen=True)
class CoefficientMatrix:
    """Fitted regime model; ``alpha`` holds the penalty of each state row."""

    xi: np.ndarray
    cls: int
    alpha: np.ndarray
    refit: bool = False
    sweeps: int = 0
    converged: bool = True
    center: str = "identity"

    def __post_init__(self):
        object.__setattr__(self, "alpha", _row_alphas(self.alpha, np.shape(self.xi)[0]))

    @property
    def sparsity(self) -> int:
        return int(np.count_nonzero(self.xi))

    def to_dict(self) -> dict:
        return {
            "class": self.cls,
            "alpha": self.alpha.tolist(),
            "refit": self.refit,
            "xi": self.xi.tolist(),
            "nonzeros": self.sparsity,
            "sweeps": self.sweeps,
            "converged": self.converged,
            "penalty_center": self.center,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CoefficientMatrix":
        return cls(np.asarray(d["xi"], dtype=float), int(d["class"]), d["alpha"],
                   bool(d.get("refit", False)), int(d.get("sweeps", 0)), bool(d.get("converged", True)),
                   str(d.get("penalty_center", "identity")))


def _soft(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _polish(G: np.ndarray, B: np.ndarray, g: np.ndarray, half: np.ndarray):
    """Exact lasso solution on the current support and signs, or ``None``.

    Solves the stationarity equations ``G_SS g_S = B_S - half * sign(g_S)``
    and accepts the result only if the signs are kept and every inactive
    coordinate satisfies ``|B_j - G_jS g_S| <= half``.
    """
    out = np.zeros_like(g)
    for m in range(g.shape[1]):
        h = half[m]
        sup = np.flatnonzero(g[:, m])
        if sup.size:
            sgn = np.sign(g[sup, m])
            try:
                sol = np.linalg.solve(G[np.ix_(sup, sup)], B[sup, m] - h * sgn)
            except np.linalg.LinAlgError:
                return None
            if not np.all(np.sign(sol) == sgn):
                return None
            out[sup, m] = sol
        corr = B[:, m] - G[:, sup] @ out[sup, m]
        off = np.ones(g.shape[0], dtype=bool)
        off[sup] = False
        if np.any(np.abs(corr[off]) > h * (1.0 + 1e-9) + 1e-12 * np.abs(B[:, m]).max()):
            return None
    return out


def _objective(G, b, half, x) -> float:
    return float(0.5 * x @ G @ x - b @ x + half * np.abs(x).sum())


def _active_set(G: np.ndarray, b: np.ndarray, half: float, x: np.ndarray, max_iter: int = 1000):
    """Feature-sign search for ``min 0.5 x'Gx - b'x + half |x|_1``.

    Alternates between solving the stationarity equations for a guessed
    support and sign pattern, a line search that stops at sign changes, and
    activating the most violating zero coordinate.  Terminates in finitely
    many steps in exact arithmetic; returns ``(x, ok)``.
    """
    x = x.copy()
    tol = 1e-12 * max(np.abs(b).max(), 1.0) + 1e-9 * half
    for _ in range(max_iter):
        grad = G @ x - b
        nz = x != 0
        theta = np.sign(x)
        if np.all(np.abs(grad[nz] + half * theta[nz]) <= tol):
            viol = np.where(nz, -np.inf, np.abs(grad) - half)
            j = int(np.argmax(viol))
            if viol[j] <= tol:
                return x, True
            theta[j] = -np.sign(grad[j])
        act = np.flatnonzero(theta)
        try:
            target = np.linalg.solve(G[np.ix_(act, act)], b[act] - half * theta[act])
        except np.linalg.LinAlgError:
            return x, False
        start = x[act]
        step = target - start
        # candidate stopping points: the target and every sign change on the way
        cross = (start != 0) & (np.sign(start) != np.sign(target))
        ts = [1.0] + [float(t) for t in -start[cross] / step[cross] if 0.0 < t < 1.0]
        best_x, best_f = None, np.inf
        for t in ts:
            cand = x.copy()
            cand[act] = start + t * step
            if t < 1.0:
                hit = act[np.isclose(cand[act], 0.0, atol=1e-15 * (1.0 + np.abs(start)))]
                cand[hit] = 0.0
            f = _objective(G, b, half, cand)
            if f < best_f:
                best_x, best_f = cand, f
        if best_f > _objective(G, b, half, x) + tol * (1.0 + np.abs(x).sum()):
            return x, False
        x = best_x
    return x, False


def lasso_gram(G: np.ndarray, B: np.ndarray, alpha, init=None,
               tol: float = 1e-10, max_sweeps: int = 10000, polish_every: int = 10,
               active_set: bool = True):
    """Lasso ``min ||y - Z g||^2 + alpha ||g||_1`` for every column of ``Y``.

    Works on the Gram matrix ``G = Z^T Z`` and ``B = Z^T Y``.  Unless
    ``active_set`` is off, an exact active-set solve supplies the starting
    point; cyclic coordinate descent with soft thresholding then runs until
    no coefficient moves by more than ``tol``.  Every ``polish_every``
    sweeps the current support is tried in the exact stationarity
    equations.  ``alpha`` is a scalar or one value per column.  Returns
    ``(g, sweeps, converged)``.
    """
    g = np.zeros_like(B) if init is None else np.array(init, dtype=float)
    diag = np.diag(G).copy()
    half = 0.5 * np.broadcast_to(np.asarray(alpha, dtype=float), (B.shape[1],))
    if active_set:
        for m in range(B.shape[1]):
            if half[m] > 0:
                g[:, m], _ = _active_set(G, B[:, m], half[m], g[:, m])
    active = np.flatnonzero(diag > 0)
    for sweep in range(1, max_sweeps + 1):
        delta = 0.0
        for j in active:
            old = g[j].copy()
            rho = B[j] - G[j] @ g + diag[j] * old
            g[j] = _soft(rho, half) / diag[j]
            d = np.max(np.abs(g[j] - old))
            if d > delta:
                delta = d
        if delta < tol:
            return g, sweep, True
        if sweep % polish_every == 0:
            exact = _polish(G, B, g, half)
            if exact is not None:
                return exact, sweep, True
    return g, max_sweeps, False


def _scales(Psi: np.ndarray) -> np.ndarray:
    return np.sqrt(np.mean(Psi ** 2, axis=0))


def _row_alphas(alpha, m: int = 3) -> np.ndarray:
    a = np.array(np.broadcast_to(np.asarray(alpha, dtype=float), (m,)))
    if not np.all(np.isfinite(a)) or np.any(a < 0):
        raise ValueError("alpha must be finite and non-negative")
    return a


def _solve(Psi: np.ndarray, Y: np.ndarray, alpha, refit: bool, init=None,
           tol: float = 1e-10, max_sweeps: int = 10000):
    """Standardised fit; returns ``(coef[p, m], sweeps, converged, gamma)``.

    ``alpha`` is a scalar or one penalty per column of ``Y``; columns with
    zero penalty are solved by least squares.
    """
    alpha = _row_alphas(alpha, Y.shape[1])
    s = _scales(Psi)
    live = s > 0
    Z = Psi[:, live] / s[live]
    G = Z.T @ Z
    B = Z.T @ Y
    coef = np.zeros((Psi.shape[1], Y.shape[1]))
    gamma = np.zeros((G.shape[0], Y.shape[1]))
    sweeps, ok = 0, True
    ols = alpha == 0
    if ols.any():
        lam = 1e-12 * np.trace(G) / max(G.shape[0], 1)
        w = np.linalg.eigvalsh(G)
        if w[0] <= 1e-13 * w[-1]:
            raise RankDeficient(f"regressor Gram matrix is singular (eigenvalues {w[0]:.3e}..{w[-1]:.3e})")
        gamma[:, ols] = np.linalg.solve(G + lam * np.eye(G.shape[0]), B[:, ols])
    pen = ~ols
    if pen.any():
        start = None if init is None else np.asarray(init, dtype=float)[:, pen]
        gamma[:, pen], sweeps, ok = lasso_gram(G, B[:, pen], alpha[pen], start, tol, max_sweeps)
        if not ok:
            log.warning("coordinate descent hit %d sweeps without converging", max_sweeps)
        if refit:
            for m in np.flatnonzero(pen):
                sup = np.flatnonzero(gamma[:, m])
                if sup.size:
                    gamma[sup, m] = np.linalg.lstsq(Z[:, sup], Y[:, m], rcond=None)[0]
    coef[live] = gamma / s[live, None]
    return coef, sweeps, ok, gamma


def _center(lib: CandidateLibrary, center: str) -> np.ndarray:
    if center == "identity":
        return lib.identity_map()
    if center == "zero":
        return np.zeros((3, lib.n_terms))
    raise ValueError(f"penalty center must be one of {PENALTY_CENTERS}")


def sparse_fit(dm: DataMatrices, lib: CandidateLibrary, alpha, refit: bool = False,
               tol: float = 1e-10, max_sweeps: int = 10000, center: str = "identity") -> CoefficientMatrix:
    """l1-penalised regression of the successor states on the library.

    ``alpha`` weights the l1 norm of the coefficients of the column-scaled
    regressors (each column divided by its root mean square); ``alpha = 0``
    is ordinary least squares.  With ``center="identity"`` the penalty acts
    on ``Xi - Xi_id`` where ``Xi_id`` is the identity map, i.e. the state
    increments ``x_{k+1} - x_k`` are regressed; ``center="zero"`` penalises
    ``Xi`` directly.  ``alpha`` may be a scalar or one value per state row;
    the rows are independent problems.
    """
    alpha = _row_alphas(alpha)
    if len(dm) < lib.n_terms:
        warnings.warn(f"only {len(dm)} samples for {lib.n_terms} regressors", RuntimeWarning)
    Psi = lib.evaluate(dm.X, dm.U)
    base = _center(lib, center)
    coef, sweeps, ok, _ = _solve(Psi, dm.X_next - Psi @ base.T, alpha, refit, tol=tol, max_sweeps=max_sweeps)
    return CoefficientMatrix(coef.T + base, dm.cls, alpha, refit and bool(np.any(alpha > 0)), sweeps, ok, center)


def lasso_certificate(dm: DataMatrices, lib: CandidateLibrary, cm: CoefficientMatrix) -> float:
    """Largest violation of the lasso optimality conditions (scaled coordinates).

    Zero coefficients need ``|z_j^T r| <= alpha/2`` and nonzero ones
    ``z_j^T r = alpha/2 sign(g_j)``.
    """
    Psi = lib.evaluate(dm.X, dm.U)
    base = _center(lib, cm.center)
    s = _scales(Psi)
    live = s > 0
    Z = Psi[:, live] / s[live]
    gamma = (cm.xi - base)[:, live].T * s[live, None]
    R = dm.X_next - Psi @ base.T - Z @ gamma
    corr = Z.T @ R
    half = 0.5 * cm.alpha[None, :]
    viol = np.where(gamma == 0, np.maximum(np.abs(corr) - half, 0.0), np.abs(corr - half * np.sign(gamma)))
    return float(viol.max())


ALPHA_RULES = ("one-se", "min")


def cv_errors(dm: DataMatrices, lib: CandidateLibrary, alpha, refit: bool = False, folds: int = 5,
              center: str = "identity") -> np.ndarray:
    """Held-out one-step mean squared error per fold and state row.

    The data are cut into ``folds`` contiguous blocks; each block is
    predicted by a model fitted on the others.  Returns ``(folds, 3)``.
    """
    Psi = lib.evaluate(dm.X, dm.U)
    Y = dm.X_next - Psi @ _center(lib, center).T
    n = Psi.shape[0]
    if folds < 2 or n < folds:
        raise ValueError("need at least two folds and one sample per fold")
    bounds = np.linspace(0, n, folds + 1).astype(int)
    out = np.empty((folds, Y.shape[1]))
    for f in range(folds):
        test = np.zeros(n, dtype=bool)
        test[bounds[f]:bounds[f + 1]] = True
        coef, *_ = _solve(Psi[~test], Y[~test], alpha, refit)
        out[f] = np.mean((Psi[test] @ coef - Y[test]) ** 2, axis=0)
    return out


def select_alpha(dm: DataMatrices, lib: CandidateLibrary, grid=DEFAULT_ALPHA_GRID,
                 refit: bool = False, folds: int = 5, center: str = "identity",
                 rule: str = "one-se") -> tuple[np.ndarray, dict]:
    """Pick ``alpha = g * N`` from ``grid`` for each state row by blocked CV.

    With ``rule="min"`` each row takes the grid value with the lowest mean
    held-out error.  With ``rule="one-se"`` it takes the largest grid value
    whose mean error is within one standard error of that minimum, which
    keeps terms that only fit a handful of atypical samples out of the
    model.  Returns the per-row alphas and ``{g: mean error per row}``.
    """
    if rule not in ALPHA_RULES:
        raise ValueError(f"rule must be one of {ALPHA_RULES}")
    grid = sorted(float(g) for g in grid)
    if not grid or grid[0] < 0:
        raise ValueError("alpha grid must be non-empty and non-negative")
    n = len(dm)
    errs = np.array([cv_errors(dm, lib, g * n, refit, folds, center) for g in grid])
    mean = errs.mean(axis=1)
    se = errs.std(axis=1, ddof=1) / np.sqrt(folds)
    chosen = np.empty(mean.shape[1])
    for r in range(mean.shape[1]):
        i = int(np.argmin(mean[:, r]))
        limit = mean[i, r] + (se[i, r] if rule == "one-se" else 0.0)
        chosen[r] = max(g for g, e in zip(grid, mean[:, r]) if e <= limit)
    scores = {g: mean[k].tolist() for k, g in enumerate(grid)}
    return chosen * n, scores


@dataclass(frozen=True)
class SwitchedModel:
    """Two identified regime models joined by the learned switching tree."""

    library: CandidateLibrary
    xi_c1: CoefficientMatrix
    xi_c2: CoefficientMatrix
    tree: DecisionTree
    dt: float
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        n = self.library.n_terms
        if self.xi_c1.xi.shape != (3, n) or self.xi_c2.xi.shape != (3, n):
            raise ValueError("coefficient matrices must match the library size")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    def coefficients(self, c: int) -> np.ndarray:
        return self.xi_c1.xi if c == C1 else self.xi_c2.xi

    def classify(self, X, U) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.tree.predict(np.column_stack([X, np.asarray(U, dtype=float).reshape(-1)]))

    def predict(self, X, U, classes=None) -> np.ndarray:
        """One-step predictions; classes from the tree unless given."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        U = np.asarray(U, dtype=float).reshape(-1)
        if classes is None:
            classes = self.classify(X, U)
        Psi = self.library.evaluate(X, U)
        out = np.where(
            (np.asarray(classes) == C1)[:, None],
            Psi @ self.xi_c1.xi.T,
            Psi @ self.xi_c2.xi.T,
        )
        return out

    def jacobian(self, X, U, classes) -> np.ndarray:
        """``d f / d x`` per sample, shape ``(n, 3, 3)``."""
        J = self.library.state_jacobian(X)
        xi = np.where((np.asarray(classes) == C1)[:, None, None], self.xi_c1.xi[None], self.xi_c2.xi[None])
        return np.einsum("nij,njk->nik", xi, J)

    def to_dict(self) -> dict:
        return {
            "library": self.library.to_list(),
            "library_names": self.library.names,
            "dt": self.dt,
            "xi_c1": self.xi_c1.to_dict(),
            "xi_c2": self.xi_c2.to_dict(),
            "tree": self.tree.to_dict(),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SwitchedModel":
        try:
            return cls(
                CandidateLibrary.from_list(d["library"]),
                CoefficientMatrix.from_dict(d["xi_c1"]),
                CoefficientMatrix.from_dict(d["xi_c2"]),
                DecisionTree.from_dict(d["tree"]),
                float(d["dt"]),
                d.get("meta", {}),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaMismatch(f"malformed model artifact: {exc}") from exc


def fit_switched_model(trajs, labels, tree: DecisionTree, lib: CandidateLibrary | None = None,
                       alpha_c1: float | None = None, alpha_c2: float | None = None,
                       refit: bool = False, grid=DEFAULT_ALPHA_GRID, folds: int = 5,
                       center: str = "identity", rule: str = "one-se") -> SwitchedModel:
    """Identify both regime models and bundle them with ``tree``.

    An alpha left as ``None`` is chosen by :func:`select_alpha`.
    """
    trajs = [trajs] if isinstance(trajs, Trajectory) else list(trajs)
    lib = CandidateLibrary.default() if lib is None else lib
    dm1, dm2 = partition_data(trajs, labels)
    meta = {"n_samples": {"C1": len(dm1), "C2": len(dm2)}, "cv_scores": {}}
    fits = []
    for dm, alpha in ((dm1, alpha_c1), (dm2, alpha_c2)):
        key = f"C{dm.cls}"
        if alpha is None:
            alpha, scores = select_alpha(dm, lib, grid, refit, folds, center, rule)
            meta["cv_scores"][key] = {repr(g): s for g, s in scores.items()}
        fits.append(sparse_fit(dm, lib, alpha, refit=refit, center=center))
    dts = {t.dt for t in trajs}
    if len(dts) != 1:
        raise ValueError("all trajectories must share one sampling time")
    return SwitchedModel(lib, fits[0], fits[1], tree, dts.pop(), meta)


def simulate_identified(m: SwitchedModel, x0, inputs) -> tuple[np.ndarray, np.ndarray]:
    """Free-running rollout; returns ``(states[n+1, 3], classes[n])``."""
    inputs = np.asarray(inputs, dtype=float).reshape(-1)
    n = inputs.shape[0]
    states = np.empty((n + 1, 3))
    classes = np.empty(n, dtype=int)
    states[0] = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(states[0])):
        raise NonFinite("initial state must be finite")
    for k in range(n):
        x = states[k:k + 1]
        c = m.classify(x, inputs[k:k + 1])
        states[k + 1] = m.predict(x, inputs[k:k + 1], c)[0]
        classes[k] = c[0]
        if not np.all(np.isfinite(states[k + 1])):
            raise NonFinite(f"identified model diverged at step {k}")
    return states, classes


def one_step_rmse(m: SwitchedModel, trajs, classes=None) -> np.ndarray:
    """Per-state RMSE of one-step predictions over ``trajs``."""
    trajs = [trajs] if isinstance(trajs, Trajectory) else list(trajs)
    X = np.vstack([t.x for t in trajs])
    U = np.concatenate([t.inputs for t in trajs])
    Xn = np.vstack([t.x_next for t in trajs])
    pred = m.predict(X, U, classes)
    return np.sqrt(np.mean((pred - Xn) ** 2, axis=0))


def rmse(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.sqrt(np.mean((a - b) ** 2, axis=0))

