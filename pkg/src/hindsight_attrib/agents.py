"""Portfolio MDP environment and actor-critic training (A2C and PPO).

The environment walks decision slots of a panel; the state is the flattened
(N, N+K) matrix of feature columns plus the rolling covariance, and the
reward for playing weights w at slot t is ln(w . y(t)).  Policies put a
softmax head over N logits; exploration samples a Dirichlet centered on
that softmax point.  Everything is deterministic given the seed.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EpisodeFinished,
    NaNLoss,
    NotOnSimplex,
    SlotOutOfRange,
)
from .features import FeatureTensor, build_state
from .market_data import PricePanel, price_relatives, sample_covariance
from .neural import AdamState, DenseNet, adam_step, load_checkpoint, save_checkpoint

logger = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-8


def digamma(x: float) -> float:
    """Digamma via the recurrence below 10 and the asymptotic series above."""
    x = float(x)
    acc = 0.0
    while x < 10.0:
        acc -= 1.0 / x
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    series = math.log(x) - 0.5 * inv - inv2 * (
        1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 / 240.0))
    )
    return acc + series


def dirichlet_log_density(x: np.ndarray, alpha: np.ndarray) -> float:
    """Log density of a Dirichlet(alpha) evaluated at a simplex point x."""
    x = np.asarray(x, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    out = math.lgamma(float(alpha.sum()))
    for a, xi in zip(alpha, x):
        out += (a - 1.0) * math.log(xi) - math.lgamma(a)
    return out


@dataclass
class Hyperparams:
    gamma: float = 0.99
    rollout: int = 64
    entropy_coef: float = 0.01
    policy_lr: float = 1e-3
    value_lr: float = 1e-3
    clip_eps: float = 0.2
    ppo_epochs: int = 4
    kappa: float = 50.0
    hidden: tuple = (64, 64)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        d = dict(d)
        d["hidden"] = tuple(d.get("hidden", (64, 64)))
        return cls(**d)


class PortfolioEnv:
    """Episode over decision slots [t_start, t_end] of a panel.

    States are precomputed at construction; the cursor only sees slot t's
    features and a covariance window ending at t-1, never slot t's outcome.
    """

    def __init__(
        self,
        panel: PricePanel,
        features: FeatureTensor,
        window: int,
        t_start: int,
        t_end: int,
    ):
        first_ok = max(features.first_valid_slot, window + 1)
        if not first_ok <= t_start <= t_end <= panel.last_slot:
            raise SlotOutOfRange(
                f"bounds [{t_start}, {t_end}] outside feasible [{first_ok}, {panel.last_slot}]"
            )
        self.panel = panel
        self.features = features
        self.window = window
        self.t_start = t_start
        self.t_end = t_end
        self.n_assets = panel.n_assets
        self._states = {}
        self._relatives = {}
        for t in range(t_start, t_end + 1):
            cov = sample_covariance(panel, t, window)
            self._states[t] = build_state(panel, features, cov, t).ravel()
            self._relatives[t] = price_relatives(panel, t).values
        self.cursor = t_start
        self._done = False

    @property
    def state_dim(self) -> int:
        return self.n_assets * (self.n_assets + self.features.n_features)

    @property
    def n_steps(self) -> int:
        return self.t_end - self.t_start + 1

    def state_at(self, t: int) -> np.ndarray:
        if t not in self._states:
            raise SlotOutOfRange(f"slot {t} outside [{self.t_start}, {self.t_end}]")
        return self._states[t]

    def reset(self) -> np.ndarray:
        self.cursor = self.t_start
        self._done = False
        return self._states[self.t_start]

    def step(self, w: np.ndarray):
        """Apply weights at the cursor slot; returns (reward, next_state, done)."""
        if self._done:
            raise EpisodeFinished(f"episode ended at slot {self.t_end}")
        w = np.asarray(w, dtype=float)
        if w.shape != (self.n_assets,) or np.any(w < -1e-12) or abs(w.sum() - 1.0) > SIMPLEX_TOL:
            raise NotOnSimplex(f"weights sum {w.sum():.12f}, min {w.min():.3e}")
        reward = float(np.log(w @ self._relatives[self.cursor]))
        self.cursor += 1
        if self.cursor > self.t_end:
            self._done = True
            return reward, None, True
        return reward, self._states[self.cursor], False


def env_step(env: PortfolioEnv, w: np.ndarray):
    return env.step(w)


def advantage(reward, gamma, v_next, v_now):
    """One-step bootstrapped advantage r + gamma*v_next - v_now (terminal: v_next=0)."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")
    return np.asarray(reward) + gamma * np.asarray(v_next) - np.asarray(v_now)


def _alphas(policy: DenseNet, state: np.ndarray, kappa: float) -> np.ndarray:
    p = policy.forward(state)
    return np.maximum(kappa * p, 1e-6)


def sample_action(
    policy: DenseNet,
    state: np.ndarray,
    mode: str = "mean",
    rng: np.random.Generator | None = None,
    kappa: float = 50.0,
):
    """Action weights from the policy, plus the log-density of the draw.

    mean mode returns the softmax point itself (log-density 0 by convention);
    dirichlet mode samples around it with concentration kappa*softmax.
    """
    if mode == "mean":
        return policy.forward(state), 0.0
    if mode != "dirichlet":
        raise ValueError(f"unknown mode {mode!r}")
    if rng is None:
        rng = np.random.default_rng(0)
    alpha = _alphas(policy, state, kappa)
    w = rng.dirichlet(alpha)
    w = np.maximum(w, 1e-10)
    w = w / w.sum()
    return w, dirichlet_log_density(w, alpha)


@dataclass
class Trajectory:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray  # zeros row where done
    dones: np.ndarray
    logps: np.ndarray

    def __len__(self) -> int:
        return self.rewards.size


@dataclass
class AgentBundle:
    policy: DenseNet
    value: DenseNet
    algo: str
    hp: Hyperparams
    policy_opt: AdamState = field(default=None)
    value_opt: AdamState = field(default=None)

    def __post_init__(self):
        if self.policy_opt is None:
            self.policy_opt = AdamState.for_net(self.policy)
        if self.value_opt is None:
            self.value_opt = AdamState.for_net(self.value)

    def act(self, state: np.ndarray) -> np.ndarray:
        """Deterministic evaluation action (softmax mean)."""
        return self.policy.forward(state)

    def save(self, directory) -> None:
        import os

        os.makedirs(directory, exist_ok=True)
        save_checkpoint(self.policy, os.path.join(directory, "policy.json"))
        save_checkpoint(self.value, os.path.join(directory, "value.json"))
        meta = {"algo": self.algo, "hyperparams": self.hp.to_dict()}
        with open(os.path.join(directory, "agent.json"), "w") as fh:
            json.dump(meta, fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, directory) -> "AgentBundle":
        import os

        with open(os.path.join(directory, "agent.json")) as fh:
            meta = json.load(fh)
        return cls(
            policy=load_checkpoint(os.path.join(directory, "policy.json")),
            value=load_checkpoint(os.path.join(directory, "value.json")),
            algo=meta["algo"],
            hp=Hyperparams.from_dict(meta["hyperparams"]),
        )


def make_bundle(env: PortfolioEnv, algo: str, seed: int, hp: Hyperparams | None = None) -> AgentBundle:
    hp = hp or Hyperparams()
    hidden = list(hp.hidden)
    policy = DenseNet(
        [env.state_dim, *hidden, env.n_assets],
        ["tanh"] * len(hidden) + ["softmax"],
        seed=(seed, 0),
    )
    value = DenseNet([env.state_dim, *hidden, 1], ["tanh"] * len(hidden) + ["identity"], seed=(seed, 1))
    return AgentBundle(policy=policy, value=value, algo=algo.upper(), hp=hp)


def _check_finite(name: str, *arrays):
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise NaNLoss(f"{name} produced non-finite values")


def _value_targets(bundle: AgentBundle, traj: Trajectory):
    """Advantages and regression targets from the pre-update value net."""
    v_next = bundle.value.forward(traj.next_states)[:, 0]
    v_next = np.where(traj.dones, 0.0, v_next)
    v_now = bundle.value.forward(traj.states)[:, 0]
    adv = advantage(traj.rewards, bundle.hp.gamma, v_next, v_now)
    targets = traj.rewards + bundle.hp.gamma * v_next
    _check_finite("advantage", adv, targets)
    return adv, targets


def _log_density_grads(p: np.ndarray, actions: np.ndarray, kappa: float):
    """Rowwise d log Dirichlet(kappa*p)(x) / d p, plus the log-densities."""
    alpha = np.maximum(kappa * p, 1e-6)
    alpha0 = alpha.sum(axis=1)
    psi0 = np.array([digamma(a) for a in alpha0])
    psi = np.array([[digamma(a) for a in row] for row in alpha])
    g = kappa * (psi0[:, None] - psi + np.log(actions))
    logp = np.array([dirichlet_log_density(x, a) for x, a in zip(actions, alpha)])
    return g, logp


def _entropy_upstream(p: np.ndarray) -> np.ndarray:
    """d(-mean entropy)/dp for the softmax outputs."""
    return (np.log(p) + 1.0) / p.shape[0]


def _value_step(bundle: AgentBundle, states: np.ndarray, targets: np.ndarray) -> float:
    v = bundle.value.forward(states)
    err = v[:, 0] - targets
    loss = float((err * err).mean())
    w_g, b_g, _ = bundle.value.backward((2.0 * err / err.size)[:, None])
    adam_step(bundle.value, w_g, b_g, bundle.value_opt, lr=bundle.hp.value_lr)
    return loss


def a2c_update(bundle: AgentBundle, traj: Trajectory) -> dict:
    """One policy and one value step from a trajectory, advantages fixed.

    Policy loss is -mean(log pi * A) minus the entropy bonus on the softmax
    distribution; the value net regresses to the bootstrapped target.
    """
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    hp = bundle.hp
    adv, targets = _value_targets(bundle, traj)

    p = bundle.policy.forward(traj.states)
    g, logp = _log_density_grads(p, traj.actions, hp.kappa)
    n = len(traj)
    upstream = -(adv[:, None] * g) / n + hp.entropy_coef * _entropy_upstream(p)
    _check_finite("a2c policy upstream", upstream)
    w_g, b_g, _ = bundle.policy.backward(upstream)
    adam_step(bundle.policy, w_g, b_g, bundle.policy_opt, lr=hp.policy_lr)

    value_loss = _value_step(bundle, traj.states, targets)
    policy_loss = float(-(logp * adv).mean())
    _check_finite("a2c losses", np.array([policy_loss, value_loss]))
    return {"policy_loss": policy_loss, "value_loss": value_loss, "mean_adv": float(adv.mean())}


def ppo_update(
    bundle: AgentBundle, traj: Trajectory, epochs: int | None = None, clip_eps: float | None = None
) -> dict:
    """Clipped-ratio surrogate maximization over full-batch epochs.

    Ratios are taken against the log-densities stored at collection time, so
    the first epoch's ratios are 1.  Gradients flow only through transitions
    whose unclipped term attains the min.
    """
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    hp = bundle.hp
    epochs = hp.ppo_epochs if epochs is None else epochs
    clip_eps = hp.clip_eps if clip_eps is None else clip_eps
    adv, targets = _value_targets(bundle, traj)
    n = len(traj)
    stats = {}
    for epoch in range(epochs):
        p = bundle.policy.forward(traj.states)
        g, logp = _log_density_grads(p, traj.actions, hp.kappa)
        ratio = np.exp(logp - traj.logps)
        if epoch == 0:
            stats["initial_ratio_dev"] = float(np.abs(ratio - 1.0).max())
        clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
        surrogate = np.minimum(ratio * adv, clipped * adv)
        use_unclipped = ratio * adv <= clipped * adv
        dlogp = np.where(use_unclipped, ratio * adv, 0.0)
        upstream = -(dlogp[:, None] * g) / n + hp.entropy_coef * _entropy_upstream(p)
        _check_finite("ppo policy upstream", upstream)
        w_g, b_g, _ = bundle.policy.backward(upstream)
        adam_step(bundle.policy, w_g, b_g, bundle.policy_opt, lr=hp.policy_lr)
        value_loss = _value_step(bundle, traj.states, targets)
        stats = {**stats, "surrogate": float(surrogate.mean()), "value_loss": value_loss}
    _check_finite("ppo losses", np.array([stats["surrogate"], stats["value_loss"]]))
    return stats


def collect_rollout(
    env: PortfolioEnv,
    bundle: AgentBundle,
    rng: np.random.Generator,
    n_steps: int,
    state: np.ndarray,
):
    """Gather n_steps transitions, resetting the env across episode ends."""
    states, actions, rewards, nexts, dones, logps = [], [], [], [], [], []
    zero = np.zeros(env.state_dim)
    for _ in range(n_steps):
        w, logp = sample_action(bundle.policy, state, "dirichlet", rng, bundle.hp.kappa)
        reward, nxt, done = env.step(w)
        states.append(state)
        actions.append(w)
        rewards.append(reward)
        nexts.append(zero if done else nxt)
        dones.append(done)
        logps.append(logp)
        state = env.reset() if done else nxt
    traj = Trajectory(
        states=np.vstack(states),
        actions=np.vstack(actions),
        rewards=np.asarray(rewards),
        next_states=np.vstack(nexts),
        dones=np.asarray(dones, dtype=bool),
        logps=np.asarray(logps),
    )
    return traj, state


def train(
    env: PortfolioEnv,
    algo: str,
    steps: int,
    seed: int,
    hp: Hyperparams | None = None,
):
    """Train an agent for a number of environment steps.

    Returns the bundle and the learning curve, one (rollout index, mean
    reward) pair per update.  Identical seeds give identical curves.
    """
    algo = algo.upper()
    if algo not in ("A2C", "PPO"):
        raise ValueError(f"algo must be A2C or PPO, got {algo!r}")
    bundle = make_bundle(env, algo, seed, hp)
    rng = np.random.default_rng((seed, 2))
    curve = []
    state = env.reset()
    done_steps = 0
    rollout_idx = 0
    while done_steps < steps:
        n = min(bundle.hp.rollout, steps - done_steps)
        traj, state = collect_rollout(env, bundle, rng, n, state)
        if algo == "A2C":
            a2c_update(bundle, traj)
        else:
            ppo_update(bundle, traj)
        curve.append((rollout_idx, float(traj.rewards.mean())))
        done_steps += n
        rollout_idx += 1
    return bundle, curve


def save_learning_curve(curve, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rollout", "mean_reward"])
        for idx, mean_reward in curve:
            writer.writerow([idx, repr(float(mean_reward))])
