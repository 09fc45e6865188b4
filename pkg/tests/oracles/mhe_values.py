"""Reference window cost for test_mhe.py, summed term by term in 40-digit arithmetic."""
from mpmath import matrix, mp, mpf

mp.dps = 40
A = matrix([[1, "0.005", 0], ["-0.1", "0.99", "0.01"], ["0.05", "0.02", "0.95"]])
B = matrix([0, "0.2", "-0.5"])
Q = matrix([["1e-4", "1e-5", 0], ["1e-5", "2e-3", "1e-4"], [0, "1e-4", "5e-2"]])
R = mpf("1e-3")
P = matrix([["1e-2", 0, "1e-3"], [0, "1e-1", 0], ["1e-3", 0, 1]])
prior = matrix(["0.1", "-0.2", "0.3"])
ys = [mpf("0.11"), mpf("0.09"), mpf("0.12")]
us = [mpf("0.1"), mpf("-0.2"), mpf("0.05")]
X = [matrix(r) for r in (["0.1", "-0.25", "0.35"], ["0.098", "-0.2", "0.3"],
                         ["0.097", "-0.22", "0.31"], ["0.095", "-0.21", "0.33"])]

d = X[0] - prior
cost = (d.T * P ** -1 * d)[0]
for i in range(3):
    cost += (ys[i] - X[i][0]) ** 2 / R
    w = X[i + 1] - (A * X[i] + B * us[i])
    cost += (w.T * Q ** -1 * w)[0]
print("window cost:", cost)
