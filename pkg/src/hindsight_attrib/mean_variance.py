"""Mean-variance portfolio selection on the probability simplex.

Solves argmax_w  w'mu - lam * w'Sigma w  subject to w >= 0, sum w = 1
with projected gradient ascent.  The same solver produces the hindsight
portfolios: feed it the realized price relative as mu and a covariance
window that includes the current slot.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonFiniteInput
from .market_data import PricePanel, price_relatives, sample_covariance

logger = logging.getLogger(__name__)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {w : w >= 0, sum w = 1}.

    Sort-and-threshold in O(n log n).  Points already on the simplex are
    returned as an exact copy so the projection is idempotent bit for bit.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise DimensionMismatch(f"expected nonempty 1-d vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteInput("cannot project a vector with non-finite entries")
    if np.all(v >= 0.0) and abs(v.sum() - 1.0) <= 1e-12:
        return v.copy()
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def equal_weights(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


@dataclass
class MVProblem:
    mu: np.ndarray
    sigma: np.ndarray
    lam: float = 0.5

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        n = self.mu.size
        if self.sigma.shape != (n, n):
            raise DimensionMismatch(
                f"sigma shape {self.sigma.shape} does not match mu length {n}"
            )
        if not (np.all(np.isfinite(self.mu)) and np.all(np.isfinite(self.sigma))):
            raise NonFiniteInput("mu and sigma must be finite")

    def objective(self, w: np.ndarray) -> float:
        return float(w @ self.mu - self.lam * w @ self.sigma @ w)

    def gradient(self, w: np.ndarray) -> np.ndarray:
        return self.mu - 2.0 * self.lam * (self.sigma @ w)


@dataclass
class PortfolioWeights:
    weights: np.ndarray
    objective: float
    iterations: int
    converged: bool


def _active_set_polish(problem: MVProblem, w0: np.ndarray) -> np.ndarray | None:
    """Exact solve of the simplex QP by active-set iteration seeded at w0.

    On the tentative support S the equality-constrained maximizer solves
    2*lam*Sigma_S w = mu_S - nu, 1'w = 1.  Coordinates that go negative are
    dropped; zero coordinates whose gradient beats the shared multiplier are
    added back.  Returns None when the linear algebra degenerates.
    """
    n = w0.size
    support = w0 > 1e-9
    if not support.any():
        support[np.argmax(w0)] = True
    for _ in range(3 * n + 5):
        s = np.nonzero(support)[0]
        a = 2.0 * problem.lam * problem.sigma[np.ix_(s, s)]
        ones = np.ones(s.size)
        try:
            sol = np.linalg.solve(a, np.column_stack([problem.mu[s], ones]))
        except np.linalg.LinAlgError:
            return None
        ainv_mu, ainv_one = sol[:, 0], sol[:, 1]
        denom = ones @ ainv_one
        if not np.isfinite(denom) or denom <= 0:
            return None
        nu = (ones @ ainv_mu - 1.0) / denom
        ws = ainv_mu - nu * ainv_one
        if ws.min() < -1e-12:
            support[s[np.argmin(ws)]] = False
            if not support.any():
                return None
            continue
        w = np.zeros(n)
        w[s] = np.maximum(ws, 0.0)
        w /= w.sum()
        grad = problem.gradient(w)
        shared = grad[s].mean()
        off = ~support
        if off.any() and grad[off].max() > shared + 1e-10 * max(1.0, abs(shared)):
            support[np.argmax(np.where(off, grad, -np.inf))] = True
            continue
        return w
    return None


def solve(problem: MVProblem, tol: float = 1e-8, max_iters: int = 10000) -> PortfolioWeights:
    """Projected gradient ascent with backtracking, started at equal weights.

    Convergence is declared when the fixed-point residual
    ||w - P(w + grad)|| drops below tol.  When the line search stalls at
    floating-point resolution before that, an exact active-set polish
    finishes the job; only if that also fails is converged=False returned.
    """
    w = equal_weights(problem.mu.size)
    fw = problem.objective(w)
    step = 1.0
    it = 0
    for it in range(1, max_iters + 1):
        grad = problem.gradient(w)
        if np.linalg.norm(w - project_simplex(w + grad)) < tol:
            return PortfolioWeights(w, fw, it - 1, True)
        accepted = False
        while step >= 1e-14:
            cand = project_simplex(w + step * grad)
            fc = problem.objective(cand)
            if fc >= fw + 1e-4 * grad @ (cand - w):
                w, fw = cand, fc
                accepted = True
                step = min(step * 2.0, 1e6)
                break
            step *= 0.5
        if not accepted:
            # objective improvements fell below machine resolution
            break
    if np.linalg.norm(w - project_simplex(w + problem.gradient(w))) < tol:
        return PortfolioWeights(w, fw, it, True)
    polished = _active_set_polish(problem, w)
    if polished is not None:
        fp = problem.objective(polished)
        if np.linalg.norm(polished - project_simplex(polished + problem.gradient(polished))) < tol:
            return PortfolioWeights(polished, fp, it, True)
        if fp > fw:
            w, fw = polished, fp
    logger.warning("mean-variance solve stopped after %d iterations above tol", it)
    return PortfolioWeights(w, fw, it, False)


def hindsight_weights(
    panel: PricePanel, t: int, window: int, lam: float = 0.5
) -> PortfolioWeights:
    """Mean-variance weights computed as if slot t's relative were known.

    mu is the realized relative y(t) and the covariance window ends at t
    inclusive, so these weights see exactly one slot of future information.
    """
    mu = price_relatives(panel, t).values
    cov = sample_covariance(panel, t, window, include_current=True)
    return solve(MVProblem(mu=mu, sigma=cov.matrix, lam=lam))
