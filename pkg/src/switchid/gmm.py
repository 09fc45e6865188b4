"""Two-component Gaussian mixture fitted by expectation maximisation.

Used to split sample tuples ``(x_i, u_i, x_{i+1})`` into the sticking and
slipping regimes without access to the true switching condition.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateData, EmptyComponent, SingularCovariance
from .pendulum import C1, C2

LOG_2PI = math.log(2.0 * math.pi)
REG_SCALE = 1e-6


@dataclass(frozen=True)
class GmmModel:
    """Mixture parameters.

    ``mu`` and ``sigma`` live in the standardised coordinates
    ``(xi - center) / scale``; densities are reported in the original
    coordinates, i.e. including the Jacobian of the standardisation.
    Component 0 is class C1 and component 1 is class C2.
    """

    pi: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    center: np.ndarray | None = None
    scale: np.ndarray | None = None
    n_iters: int = 0
    final_loglik: float = float("nan")
    loglik_history: tuple = ()
    seed: int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float)
        mu = np.asarray(self.mu, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        if pi.shape != (2,) or mu.ndim != 2 or mu.shape[0] != 2:
            raise ValueError("GmmModel holds exactly two components")
        d = mu.shape[1]
        if sigma.shape != (2, d, d):
            raise ValueError("sigma must have shape (2, d, d)")
        if abs(pi.sum() - 1.0) > 1e-12 or np.any(pi < 0) or np.any(pi > 1):
            raise ValueError(f"mixing coefficients {pi} are not a distribution")
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        center = np.zeros(d) if self.center is None else np.asarray(self.center, dtype=float)
        scale = np.ones(d) if self.scale is None else np.asarray(self.scale, dtype=float)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "scale", scale)

    @property
    def dim(self) -> int:
        return self.mu.shape[1]

    def transform(self, data) -> np.ndarray:
        return (np.atleast_2d(np.asarray(data, dtype=float)) - self.center) / self.scale

    def swapped(self) -> "GmmModel":
        """Same mixture with component indices exchanged."""
        return replace(self, pi=self.pi[::-1].copy(), mu=self.mu[::-1].copy(), sigma=self.sigma[::-1].copy())

    def posteriors(self, data) -> np.ndarray:
        return e_step(self, data)

    def predict(self, data) -> np.ndarray:
        return labels_from_posteriors(e_step(self, data))

    def to_dict(self) -> dict:
        return {
            "n_components": 2,
            "pi": self.pi.tolist(),
            "mu": self.mu.tolist(),
            "sigma": [s.ravel().tolist() for s in self.sigma],
            "center": self.center.tolist(),
            "scale": self.scale.tolist(),
            "seed": self.seed,
            "n_iters": self.n_iters,
            "final_loglik": self.final_loglik,
            "loglik_history": list(self.loglik_history),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GmmModel":
        mu = np.asarray(d["mu"], dtype=float)
        dim = mu.shape[1]
        sigma = np.asarray(d["sigma"], dtype=float).reshape(2, dim, dim)
        return cls(
            pi=np.asarray(d["pi"], dtype=float),
            mu=mu,
            sigma=sigma,
            center=d.get("center"),
            scale=d.get("scale"),
            n_iters=int(d.get("n_iters", 0)),
            final_loglik=float(d.get("final_loglik", float("nan"))),
            loglik_history=tuple(d.get("loglik_history", ())),
            seed=d.get("seed"),
            meta=d.get("meta", {}),
        )


@dataclass(frozen=True)
class Labeling:
    labels: np.ndarray
    posteriors: np.ndarray

    def __len__(self) -> int:
        return self.labels.shape[0]


def labels_from_posteriors(post: np.ndarray) -> np.ndarray:
    # ties go to C1, argmax returns the first maximum
    return np.where(np.argmax(post, axis=1) == 0, C1, C2)


def _component_logpdf(z: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    try:
        L = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance("covariance is not positive definite") from exc
    diff = np.linalg.solve(L, (z - mu).T)
    maha = np.einsum("ij,ij->j", diff, diff)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return -0.5 * (z.shape[1] * LOG_2PI + logdet + maha)


def _weighted_logpdf(m: GmmModel, data) -> np.ndarray:
    """``log(pi_j) + log N(xi | mu_j, Sigma_j)`` per sample and component."""
    z = m.transform(data)
    out = np.empty((z.shape[0], 2))
    jac = -np.sum(np.log(m.scale))
    with np.errstate(divide="ignore"):
        log_pi = np.log(m.pi)
    for j in range(2):
        out[:, j] = log_pi[j] + _component_logpdf(z, m.mu[j], m.sigma[j]) + jac
    return out


def log_likelihood(m: GmmModel, data) -> float:
    """Total log-likelihood of ``data`` under the mixture."""
    return float(np.sum(logsumexp(_weighted_logpdf(m, data), axis=1)))


def e_step(m: GmmModel, data) -> np.ndarray:
    """Posterior class probabilities, shape ``(n, 2)``."""
    w = _weighted_logpdf(m, data)
    return np.exp(w - logsumexp(w, axis=1, keepdims=True))


def default_regularization(data) -> float:
    data = np.atleast_2d(np.asarray(data, dtype=float))
    return REG_SCALE * float(np.mean(np.var(data, axis=0)))


def m_step(posteriors, data, reg: float | None = None) -> GmmModel:
    """Closed-form parameter update from responsibilities.

    Covariance eigenvalues are floored at ``reg`` (by default ``1e-6`` times
    the mean per-feature variance).  Clipping, rather than adding ``reg * I``,
    is the exact maximiser of the expected complete-data log-likelihood
    under the constraint ``Sigma >= reg * I``, so every EM iteration keeps
    the log-likelihood non-decreasing.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    post = np.asarray(posteriors, dtype=float)
    n, d = data.shape
    if reg is None:
        reg = default_regularization(data)
    nk = post.sum(axis=0)
    if np.any(nk < 1e-10 * n):
        raise EmptyComponent(f"component responsibility underflow: {nk}")
    mu = (post.T @ data) / nk[:, None]
    sigma = np.empty((2, d, d))
    for j in range(2):
        diff = data - mu[j]
        s = (post[:, j, None] * diff).T @ diff / nk[j]
        sigma[j] = floor_eigenvalues(0.5 * (s + s.T), reg)
    pi = nk / n
    pi = pi / pi.sum()
    return GmmModel(pi=pi, mu=mu, sigma=sigma)


def floor_eigenvalues(s: np.ndarray, floor: float) -> np.ndarray:
    """Symmetric matrix with eigenvalues ``max(lambda_i, floor)``."""
    w, v = np.linalg.eigh(s)
    if np.all(w >= floor):
        return s
    out = (v * np.maximum(w, floor)) @ v.T
    return 0.5 * (out + out.T)


def standardization(data) -> tuple[np.ndarray, np.ndarray]:
    data = np.asarray(data, dtype=float)
    center = data.mean(axis=0)
    scale = data.std(axis=0)
    scale[scale == 0] = 1.0
    return center, scale


def _kmeanspp(z: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    first = z[rng.integers(z.shape[0])]
    d2 = np.sum((z - first) ** 2, axis=1)
    if d2.sum() == 0:
        raise DegenerateData("all samples are identical")
    second = z[rng.choice(z.shape[0], p=d2 / d2.sum())]
    return np.vstack([first, second])


def kmeans_init(data, seed: int = 0, max_iters: int = 100, reg: float | None = None) -> GmmModel:
    """Two-means clustering (k-means++ seeding) turned into a mixture.

    Clustering runs on standardised features; the returned means and
    covariances are in the coordinates of ``data``.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if data.shape[0] < 2 or np.all(data == data[0]):
        raise DegenerateData("k-means initialisation needs two distinct samples")
    center, scale = standardization(data)
    z = (data - center) / scale
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp(z, rng)
    assign = None
    for _ in range(max_iters):
        dist = ((z[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_assign = np.argmin(dist, axis=1)
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(2):
            if np.any(assign == j):
                centroids[j] = z[assign == j].mean(axis=0)
    post = np.zeros((data.shape[0], 2))
    post[np.arange(data.shape[0]), assign] = 1.0
    if reg is None:
        reg = default_regularization(data)
    model = m_step(post, data, reg)
    return replace(model, seed=seed)


def canonical_order(model: GmmModel, raw, post: np.ndarray, wheel_cols=(2, 6)) -> bool:
    """Whether component 0 already is the sticking class.

    The sticking component is the one whose samples change the wheel
    velocity least on average (responsibility weighted ``|omega2' - omega2|``).
    """
    raw = np.asarray(raw, dtype=float)
    dw = np.abs(raw[:, wheel_cols[1]] - raw[:, wheel_cols[0]])
    nk = post.sum(axis=0)
    mean_dw = (post * dw[:, None]).sum(axis=0) / np.where(nk > 0, nk, 1.0)
    return bool(mean_dw[0] <= mean_dw[1])


def fit(
    data,
    seed: int = 0,
    tol: float = 1e-7,
    max_iters: int = 500,
    standardize: bool = True,
    canonicalize: bool = True,
) -> tuple[GmmModel, Labeling]:
    """EM from a k-means start until the relative log-likelihood change is below ``tol``."""
    raw = np.atleast_2d(np.asarray(data, dtype=float))
    if raw.shape[0] == 0:
        raise ValueError("cannot fit a mixture to empty data")
    if standardize:
        center, scale = standardization(raw)
    else:
        center, scale = np.zeros(raw.shape[1]), np.ones(raw.shape[1])
    z = (raw - center) / scale
    reg = default_regularization(z)
    model = kmeans_init(z, seed=seed, reg=reg)
    # log-likelihoods are reported in raw coordinates
    jac = -z.shape[0] * float(np.sum(np.log(scale)))
    history = [log_likelihood(model, z) + jac]
    n_iters = 0
    for n_iters in range(1, max_iters + 1):
        post = e_step(model, z)
        model = m_step(post, z, reg)
        history.append(log_likelihood(model, z) + jac)
        if abs(history[-1] - history[-2]) < tol * abs(history[-2]):
            break
    model = replace(model, center=center, scale=scale)
    post = e_step(model, raw)
    meta = {"regularization": reg, "canonical_rule": "C1 = smaller mean |omega2' - omega2|"}
    if canonicalize and not canonical_order(model, raw, post):
        model = model.swapped()
        post = post[:, ::-1].copy()
        meta["swapped"] = True
    model = replace(
        model,
        n_iters=n_iters,
        final_loglik=history[-1],
        loglik_history=tuple(history),
        seed=seed,
        meta=meta,
    )
    return model, Labeling(labels_from_posteriors(post), post)
