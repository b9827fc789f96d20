"""Compiled chain loops for the low-dimensional models.

These loops run the same splitting as the reference step kernels in
:mod:`ccadl.samplers` and consume the same random streams in the same order,
so a chain is reproduced (to rounding) whichever engine runs it.  Only the
Gaussian Normal-Gamma model and the injected-noise quadratic model are
compiled; everything else goes through the reference kernels.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .models import GaussianModel, QuadraticNoiseModel

CHUNK = 1 << 15

_METHOD = {"sgld": 0, "sghmc": 1, "sgnht": 2, "ccadl": 3}
_COV = {"none": 0, "diagonal": 1, "full": 2, "exact": 3}

OK, NEED_NOISE, ABORT, DIVERGED = 0, 1, 2, 3


def supports(model, config) -> bool:
    if config.method not in _METHOD:
        return False
    if type(model) is GaussianModel:
        return config.covariance in ("none", "diagonal", "full")
    if type(model) is QuadraticNoiseModel:
        return config.covariance in ("none", "exact")
    return False


@njit(cache=True)
def _gaussian_grad(theta, x, idx, N, per):
    mu = theta[0]
    gamma = theta[1]
    n = idx.shape[0]
    s0 = 0.0
    s1 = 0.0
    for i in range(n):
        r = x[idx[i]] - mu
        per[i, 0] = gamma * r
        per[i, 1] = 0.5 / gamma - 0.5 * r * r
        s0 += per[i, 0]
        s1 += per[i, 1]
    scale = N / n
    g = np.empty(2)
    g[0] = -scale * s0 + gamma * mu
    g[1] = -scale * s1 + (1.0 - 0.5 / gamma + 0.5 * mu * mu)
    return g


@njit(cache=True)
def _subset(u, N, perm, idx):
    for j in range(N):
        perm[j] = j
    for j in range(u.shape[0]):
        k = j + int(u[j] * (N - j))
        tmp = perm[j]
        perm[j] = perm[k]
        perm[k] = tmp
        idx[j] = perm[j]


@njit(cache=True)
def _observe(per, est, t, full):
    n, d = per.shape
    mean = np.zeros(d)
    for i in range(n):
        for a in range(d):
            mean[a] += per[i, a]
    for a in range(d):
        mean[a] /= n
    k = 1.0 / t
    if full:
        V = np.zeros((d, d))
        for i in range(n):
            for a in range(d):
                for b in range(d):
                    V[a, b] += (per[i, a] - mean[a]) * (per[i, b] - mean[b])
        new = np.empty((d, d))
        for a in range(d):
            for b in range(d):
                new[a, b] = (1.0 - k) * est[a, b] + k * (V[a, b] / (n - 1))
        for a in range(d):
            for b in range(d):
                est[a, b] = 0.5 * (new[a, b] + new[b, a])
    else:
        for a in range(d):
            v = 0.0
            for i in range(n):
                r = per[i, a] - mean[a]
                v += r * r
            est[a, 0] = (1.0 - k) * est[a, 0] + k * (v / (n - 1))


@njit(cache=True)
def _loop(kind, method, cov, theta, p, xi, h, A, beta, mu, M,
          x, N, n, replace, prec, nc, nq,
          est, est_t, batch_buf, noise, noise_pos, step0, nsteps, thin, max_retries,
          out_theta, out_xi, out_temp, counters):
    d = theta.shape[0]
    minv = 1.0 / M
    sqrtm = np.sqrt(M)
    perm = np.empty(max(N, 1), dtype=np.int64)
    idx = np.empty(max(n, 1), dtype=np.int64)
    per = np.empty((max(n, 1), d))
    sigma = np.zeros((d, d))
    sigma_diag = np.zeros(d)
    root = np.zeros((d, d))
    amp = np.sqrt(2.0 * A * h / beta)
    c = np.sqrt(2.0 * h / beta)
    done = 0
    status = OK
    while done < nsteps:
        if noise_pos + max_retries * d > noise.shape[0]:
            status = NEED_NOISE
            break
        row = batch_buf[done]
        if kind == 0:
            if replace:
                for j in range(n):
                    idx[j] = int(row[j] * N)
            else:
                _subset(row, N, perm, idx)

        if method == 0:
            # sgld: gradient at the current position, noise on positions
            if kind == 0:
                g = _gaussian_grad(theta, x, idx, N, per)
            else:
                g = prec * theta + np.sqrt((nc + nq * theta * theta) * M) * row
            drift = theta - g * h
            ok = False
            for attempt in range(max_retries):
                cand = drift + c * noise[noise_pos:noise_pos + d]
                noise_pos += d
                if kind == 1 or (np.isfinite(cand[0]) and np.isfinite(cand[1]) and cand[1] > 0):
                    ok = True
                    counters[0] += attempt
                    break
            if not ok:
                status = ABORT
                break
            theta[:] = cand
        else:
            theta += minv * p * h
            if kind == 0:
                g = _gaussian_grad(theta, x, idx, N, per)
            else:
                g = prec * theta + np.sqrt((nc + nq * theta * theta) * M) * row

            use_sigma = False
            full = False
            if method != 2 and cov != 0:
                use_sigma = True
                if cov == 3:
                    sigma_diag[:] = nc + nq * theta * theta
                else:
                    est_t += 1
                    _observe(per[:n], est, est_t, cov == 2)
                    s = N * N / n
                    if cov == 2:
                        full = True
                        for a in range(d):
                            for b in range(d):
                                sigma[a, b] = s * est[a, b]
                    else:
                        for a in range(d):
                            sigma_diag[a] = s * est[a, 0]

            if method == 1:
                drift = p - g * h - A * p * h
                if use_sigma and full:
                    w, Q = np.linalg.eigh(A * np.eye(d) - 0.5 * h * sigma)
                    for a in range(d):
                        if w[a] < 0:
                            counters[1] += 1
                            w[a] = 0.0
                    root[:, :] = (Q * np.sqrt(w)) @ Q.T
                elif use_sigma:
                    for a in range(d):
                        b_ = A - 0.5 * h * sigma_diag[a]
                        if b_ < 0:
                            counters[1] += 1
                            b_ = 0.0
                        root[a, a] = np.sqrt(b_)
            else:
                drift = p - g * h - xi * p * h
                if use_sigma:
                    if full:
                        drift = drift - 0.5 * h * beta * (sigma @ p) * h
                    else:
                        drift = drift - 0.5 * h * beta * (sigma_diag * p) * h

            ok = False
            for attempt in range(max_retries):
                r = noise[noise_pos:noise_pos + d]
                noise_pos += d
                if method == 1:
                    if use_sigma and full:
                        cand = drift + c * (root @ (sqrtm * r))
                    elif use_sigma:
                        cand = drift + c * np.diag(root) * sqrtm * r
                    else:
                        cand = drift + c * np.sqrt(A) * sqrtm * r
                else:
                    cand = drift + amp * sqrtm * r
                if kind == 1:
                    ok = True
                else:
                    nxt = theta[1] + minv[1] * cand[1] * h
                    ok = np.isfinite(theta[0] + minv[0] * cand[0] * h) and np.isfinite(nxt) and nxt > 0
                if ok:
                    counters[0] += attempt
                    break
            if not ok:
                status = ABORT
                break
            p[:] = cand
            if method != 1:
                ke = 0.0
                for a in range(d):
                    ke += p[a] * (minv[a] * p[a])
                xi = xi + (ke - d / beta) * h / mu

        done += 1
        finite = True
        for a in range(d):
            if not (np.isfinite(theta[a]) and np.isfinite(p[a])):
                finite = False
        if not finite:
            done -= 1
            status = DIVERGED
            break
        t = step0 + done
        if t % thin == 0:
            k = t // thin - 1
            out_theta[k] = theta
            out_xi[k] = xi
            if method != 0:
                ke = 0.0
                for a in range(d):
                    ke += p[a] * (minv[a] * p[a])
                out_temp[k] = ke / d
    return done, noise_pos, est_t, xi, status


def run(model, config, state, estimator, streams, steps, thin, log):
    from .samplers import ChainAbort, ChainDiverged

    gaussian = type(model) is GaussianModel
    d = model.dim
    M = config.mass
    theta = state.theta.astype(float).copy()
    p = state.p.astype(float).copy()
    xi = float(state.xi)
    if gaussian:
        x, N, n = model.x, model.N, model.n
        prec = nc = nq = np.zeros(d)
    else:
        x, N, n = np.zeros(1), 1, 1
        prec, nc, nq = model.precision, model.noise_const, model.noise_quad
    if estimator is not None:
        est = estimator.estimate.reshape(d, -1).copy()
        est_t = estimator.t
    else:
        est, est_t = np.zeros((d, 1)), 0
    counters = np.zeros(2, dtype=np.int64)
    noise = np.empty(0)
    noise_pos = 0
    done_total = 0
    status = OK
    while done_total < steps:
        chunk = min(CHUNK, steps - done_total)
        if gaussian:
            batch_buf = streams.minibatch.random((chunk, n))
        else:
            batch_buf = streams.minibatch.standard_normal((chunk, d))
        pos = 0
        while pos < chunk:
            if noise.shape[0] - noise_pos < config.max_support_retries * d:
                noise = np.concatenate((noise[noise_pos:], streams.noise.standard_normal(CHUNK * d)))
                noise_pos = 0
            done, noise_pos, est_t, xi, status = _loop(
                0 if gaussian else 1, _METHOD[config.method], _COV[config.covariance],
                theta, p, xi, config.h, config.A, config.beta, config.mu, M,
                x, N, n, config.replace, prec, nc, nq,
                est, est_t, batch_buf[pos:], noise, noise_pos, done_total, chunk - pos, thin,
                config.max_support_retries, log.theta, log.xi, log.temperature, counters,
            )
            pos += done
            done_total += done
            if status in (ABORT, DIVERGED):
                break
        if status in (ABORT, DIVERGED):
            break
    log.completed = done_total
    log.counters = {}
    if counters[0]:
        log.counters["support_retries"] = int(counters[0])
    if counters[1]:
        log.counters["friction_deficit"] = int(counters[1])
    if estimator is not None:
        estimator.estimate = est.reshape(estimator.estimate.shape).copy()
        estimator.t = est_t
        log.counters["clamped_variances"] = estimator.clamped
    if status == ABORT:
        exc = ChainAbort(f"{config.max_support_retries} consecutive noise draws left the model support")
        exc.log = log
        raise exc
    if status == DIVERGED:
        exc = ChainDiverged(f"{config.method} state became non-finite at step {done_total + 1}")
        exc.log = log
        raise exc
    return log
