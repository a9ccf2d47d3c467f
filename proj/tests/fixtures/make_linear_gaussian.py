"""Regenerates the linear-Gaussian filter fixture.

Writes linear_gaussian_obs.csv (observations) and
linear_gaussian_beliefs.csv (textbook Kalman filter beliefs, computed here
with numpy only). The matching scenario is linear_gaussian.json.
"""
import json
import os

import numpy as np

here = os.path.dirname(os.path.abspath(__file__))
with open(os.path.join(here, "linear_gaussian.json")) as f:
    sc = json.load(f)

A = np.array(sc["process"]["drift"]["params"]["A"], dtype=float)
dt = float(sc["process"]["dt"])
Q = np.array(sc["process"]["g_inv"], dtype=float) * dt
C = np.array(sc["potential"]["params"]["C"], dtype=float)
Rn = np.array(sc["potential"]["params"]["sigma_nu"], dtype=float)
m0 = np.array(sc["initial"]["mean"], dtype=float)
P0 = np.array(sc["initial"]["cov"], dtype=float)
horizon = int(sc["horizon"])
F = np.eye(len(m0)) + A * dt

rng = np.random.default_rng(7)
x = m0 + np.linalg.cholesky(P0) @ rng.standard_normal(len(m0))
obs = []
for t in range(horizon + 1):
    if t > 0:
        x = F @ x + np.linalg.cholesky(Q) @ rng.standard_normal(len(m0))
    if t % 7 != 3 and t <= horizon - 5:
        y = C @ x + np.linalg.cholesky(Rn) @ rng.standard_normal(C.shape[0])
        obs.append((t, y))

with open(os.path.join(here, "linear_gaussian_obs.csv"), "w") as f:
    f.write("step," + ",".join(f"y{i + 1}" for i in range(C.shape[0])) + "\n")
    for t, y in obs:
        f.write(f"{t}," + ",".join(repr(float(v)) for v in y) + "\n")

ys = dict(obs)
mean, P = m0.copy(), P0.copy()
rows = []
for t in range(horizon + 1):
    if t > 0:
        mean = F @ mean
        P = F @ P @ F.T + Q
    ll = 0.0
    if t in ys:
        innov = ys[t] - C @ mean
        S = C @ P @ C.T + Rn
        K = P @ C.T @ np.linalg.inv(S)
        k = len(innov)
        ll = -0.5 * (k * np.log(2 * np.pi) + np.log(np.linalg.det(S)) + innov @ np.linalg.solve(S, innov))
        mean = mean + K @ innov
        P = P - K @ C @ P
    rows.append((t, mean.copy(), P.copy(), ll))

m = len(m0)
with open(os.path.join(here, "linear_gaussian_beliefs.csv"), "w") as f:
    head = ["step"] + [f"mean{i + 1}" for i in range(m)]
    head += [f"cov{i + 1}{j + 1}" for i in range(m) for j in range(m)] + ["loglik"]
    f.write(",".join(head) + "\n")
    for t, mu, cov, ll in rows:
        cells = [str(t)] + ["%.17g" % v for v in mu] + ["%.17g" % v for v in cov.flatten()] + ["%.17g" % ll]
        f.write(",".join(cells) + "\n")
