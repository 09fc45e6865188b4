"""Reference log-likelihood for test_gmm.py: per-sample densities summed in 40-digit arithmetic."""
import numpy as np
from mpmath import exp, log, matrix, mp, mpf, pi

mp.dps = 40


def instance():
    # same construction as test_gmm.random_instance
    rng = np.random.default_rng(2024)
    data = rng.normal(size=(10, 7))
    mu = rng.normal(size=(2, 7))
    A = rng.normal(size=(2, 7, 7)) * 0.5
    sigma = A @ A.transpose(0, 2, 1) + np.eye(7)
    w = np.array([0.3, 0.7])
    return data, w, mu, sigma


def density(x, m, s):
    x, m, S = matrix(x.tolist()), matrix(m.tolist()), matrix(s.tolist())
    d = x - m
    q = (d.T * S ** -1 * d)[0]
    return exp(-q / 2) / ((2 * pi) ** mpf(3.5) * mp.sqrt(mp.det(S)))


data, w, mu, sigma = instance()
total = mpf(0)
for x in data:
    total += log(sum(mpf(float(w[j])) * density(x, mu[j], sigma[j]) for j in range(2)))
print("log-likelihood:", total)
print("peak of a standard 7-d Gaussian:", log((2 * pi) ** mpf(-3.5)))
