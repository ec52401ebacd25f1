"""Independent reference implementations used only by the tests.

Everything here is deliberately written in the most literal style possible
(scalar loops, bisection, exhaustive grids) and shares no code with the
package, so agreement is evidence rather than tautology.
"""
import math

import numpy as np


# ---------------------------------------------------------------- indicators

def ema_scalar(xs, n):
    a = 2.0 / (n + 1.0)
    out = [float(xs[0])]
    for x in xs[1:]:
        out.append(a * float(x) + (1.0 - a) * out[-1])
    return out


def macd_scalar(close, fast=12, slow=26, signal=9):
    f = ema_scalar(close, fast)
    s = ema_scalar(close, slow)
    out = [math.nan] * len(close)
    for i in range(slow - 1, len(close)):
        out[i] = f[i] - s[i]
    return out


def rsi_scalar(close, period=14):
    n = len(close)
    gains, losses = [], []
    for t in range(1, n):
        d = float(close[t]) - float(close[t - 1])
        gains.append(max(d, 0.0))
        losses.append(max(-d, 0.0))
    out = [math.nan] * n
    ag = sum(gains[:period]) / period
    al = sum(losses[:period]) / period

    def value(ag, al):
        if al == 0:
            return 100.0
        return 100.0 - 100.0 / (1.0 + ag / al)

    out[period] = value(ag, al)
    for t in range(period + 1, n):
        ag = (ag * (period - 1) + gains[t - 1]) / period
        al = (al * (period - 1) + losses[t - 1]) / period
        out[t] = value(ag, al)
    return out


def cci_scalar(high, low, close, period=20):
    n = len(close)
    tp = [(float(high[i]) + float(low[i]) + float(close[i])) / 3.0 for i in range(n)]
    out = [math.nan] * n
    for t in range(period - 1, n):
        window = tp[t - period + 1 : t + 1]
        sma = sum(window) / period
        mad = sum(abs(v - sma) for v in window) / period
        out[t] = 0.0 if mad == 0 else (tp[t] - sma) / (0.015 * mad)
    return out


def adx_scalar(high, low, close, period=14):
    n = len(close)
    tr, pdm, mdm = [], [], []
    for t in range(1, n):
        h, l, c0 = float(high[t]), float(low[t]), float(close[t - 1])
        tr.append(max(h - l, abs(h - c0), abs(l - c0)))
        up = float(high[t]) - float(high[t - 1])
        dn = float(low[t - 1]) - float(low[t])
        pdm.append(up if (up > dn and up > 0) else 0.0)
        mdm.append(dn if (dn > up and dn > 0) else 0.0)

    def wilder(xs):
        sm = [sum(xs[:period]) / period]
        for x in xs[period:]:
            sm.append((sm[-1] * (period - 1) + x) / period)
        return sm

    atr, spdm, smdm = wilder(tr), wilder(pdm), wilder(mdm)
    dx = []
    for a, p, m in zip(atr, spdm, smdm):
        if a == 0:
            dx.append(0.0)
            continue
        pdi, mdi = 100.0 * p / a, 100.0 * m / a
        dx.append(0.0 if pdi + mdi == 0 else 100.0 * abs(pdi - mdi) / (pdi + mdi))
    adx = [sum(dx[:period]) / period]
    for x in dx[period:]:
        adx.append((adx[-1] * (period - 1) + x) / period)
    out = [math.nan] * n
    for j, v in enumerate(adx):
        out[2 * period - 1 + j] = v
    return out


# ------------------------------------------------------- simplex / optimizer

def project_simplex_bisection(v, tol=1e-14):
    """Projection via bisection on the shift theta with sum(max(v-theta,0))=1."""
    v = np.asarray(v, dtype=float)
    lo = v.max() - 1.0
    hi = v.max()
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        s = np.maximum(v - mid, 0.0).sum()
        if s > 1.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return np.maximum(v - 0.5 * (lo + hi), 0.0)


def simplex_grid(n, step=0.01):
    """All nonnegative integer compositions of 1/step into n parts, as weights."""
    m = round(1.0 / step)
    parts = []

    def rec(prefix, remaining, slots):
        if slots == 1:
            parts.append(prefix + [remaining])
            return
        for k in range(remaining + 1):
            rec(prefix + [k], remaining - k, slots - 1)

    rec([], m, n)
    return np.asarray(parts, dtype=float) * step


def mv_objective(w, mu, sigma, lam):
    return w @ mu - lam * w @ sigma @ w


def mv_grid_refine(mu, sigma, lam, grid):
    """Best grid point, then SLSQP restricted to the simplex from it."""
    from scipy.optimize import minimize

    vals = grid @ mu - lam * np.einsum("ij,jk,ik->i", grid, sigma, grid)
    w0 = grid[int(np.argmax(vals))]
    res = minimize(
        lambda w: -(w @ mu - lam * w @ sigma @ w),
        w0,
        jac=lambda w: -(mu - 2.0 * lam * sigma @ w),
        method="SLSQP",
        bounds=[(0.0, 1.0)] * mu.size,
        constraints=[{"type": "eq", "fun": lambda w: w.sum() - 1.0}],
        options={"maxiter": 200, "ftol": 1e-14},
    )
    best = res.x if -res.fun >= vals.max() else w0
    return best, float(mv_objective(best, mu, sigma, lam))


# ------------------------------------------------------------- differentials

def fd_param_gradients(net, x, upstream, h=1e-5):
    """Central finite differences of <upstream, net(x)> in every parameter."""
    upstream = np.asarray(upstream, dtype=float)

    def loss():
        return float((net.forward(x) * upstream).sum())

    w_grads = [np.zeros_like(w) for w in net.weights]
    b_grads = [np.zeros_like(b) for b in net.biases]
    for j, w in enumerate(net.weights):
        it = np.nditer(w, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            keep = w[idx]
            w[idx] = keep + h
            up = loss()
            w[idx] = keep - h
            down = loss()
            w[idx] = keep
            w_grads[j][idx] = (up - down) / (2 * h)
            it.iternext()
    for j, b in enumerate(net.biases):
        for idx in range(b.size):
            keep = b[idx]
            b[idx] = keep + h
            up = loss()
            b[idx] = keep - h
            down = loss()
            b[idx] = keep
            b_grads[j][idx] = (up - down) / (2 * h)
    return w_grads, b_grads


def fd_input_gradient(net, x, upstream, h=1e-5):
    x = np.asarray(x, dtype=float).copy()
    upstream = np.asarray(upstream, dtype=float)
    grad = np.zeros_like(x)
    for idx in range(x.size):
        keep = x[idx]
        x[idx] = keep + h
        up = float((net.forward(x) * upstream).sum())
        x[idx] = keep - h
        down = float((net.forward(x) * upstream).sum())
        x[idx] = keep
        grad[idx] = (up - down) / (2 * h)
    return grad


def ig_riemann_oracle(value_fn_grad, x, baseline, steps):
    """Plain loop midpoint Riemann IG; value_fn_grad maps one point to a gradient."""
    x = np.asarray(x, dtype=float)
    baseline = np.asarray(baseline, dtype=float)
    total = np.zeros_like(x)
    for i in range(steps):
        alpha = (i + 0.5) / steps
        total = total + value_fn_grad(baseline + alpha * (x - baseline))
    return (x - baseline) * total / steps


def ig_riemann_oracle_batched(grad_fn_batch, x, baseline, steps, chunk=2048):
    """Same midpoint rule as ig_riemann_oracle, accumulated over chunks.

    grad_fn_batch maps (m, d) points to (m, d) gradients, which keeps very
    fine paths (steps ~ 1e5) affordable.
    """
    x = np.asarray(x, dtype=float)
    baseline = np.asarray(baseline, dtype=float)
    total = np.zeros_like(x)
    start = 0
    while start < steps:
        idx = np.arange(start, min(start + chunk, steps))
        alphas = (idx + 0.5) / steps
        points = baseline[None, :] + alphas[:, None] * (x - baseline)[None, :]
        total = total + np.asarray(grad_fn_batch(points)).sum(axis=0)
        start += chunk
    return (x - baseline) * total / steps
