"""Dueling feedforward action-value network with double-network targets.

Q(s,a) = V(s) + (A(s,a) - mean_a' A(s,a')) by construction. Training is
one adaptive-moment gradient step on the mean squared TD error per batch;
the target network tracks the online one through soft updates. Everything
is 64-bit numpy with hand-written backprop so gradients can be checked
against finite differences.
"""
from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

CHECKPOINT_MAGIC = b"EGRLSRQ1"


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.98
    learning_rate: float = 1e-3
    soft_update_rate: float = 0.005
    batch_size: int = 128
    hidden_sizes: tuple[int, ...] = (128, 128)

    def __post_init__(self):
        if not (0.0 < self.gamma <= 1.0):
            raise ValueError("gamma must be in (0, 1]")
        if self.learning_rate <= 0 or self.soft_update_rate <= 0:
            raise ValueError("rates must be positive")
        if self.batch_size < 1 or any(h < 1 for h in self.hidden_sizes):
            raise ValueError("sizes must be positive")


class QNetwork:
    """Shared ReLU trunk splitting into a scalar value head and a
    per-action advantage head."""

    def __init__(self, input_dim: int, n_actions: int,
                 hidden_sizes: Sequence[int] = (128, 128), seed: int = 0):
        self.input_dim = input_dim
        self.n_actions = n_actions
        self.hidden_sizes = tuple(hidden_sizes)
        rng = np.random.default_rng(seed)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        prev = input_dim
        for h in self.hidden_sizes:
            self.weights.append(_fan_in_uniform(rng, prev, h))
            self.biases.append(np.zeros(h))
            prev = h
        self.w_value = _fan_in_uniform(rng, prev, 1)
        self.b_value = np.zeros(1)
        self.w_adv = _fan_in_uniform(rng, prev, n_actions)
        self.b_adv = np.zeros(n_actions)

    # -- parameter plumbing -------------------------------------------------

    def parameters(self) -> list[np.ndarray]:
        return self.weights + self.biases + [self.w_value, self.b_value,
                                             self.w_adv, self.b_adv]

    def clone(self) -> "QNetwork":
        other = QNetwork.__new__(QNetwork)
        other.input_dim = self.input_dim
        other.n_actions = self.n_actions
        other.hidden_sizes = self.hidden_sizes
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        other.w_value = self.w_value.copy()
        other.b_value = self.b_value.copy()
        other.w_adv = self.w_adv.copy()
        other.b_adv = self.b_adv.copy()
        return other

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()])

    def set_flat(self, flat: np.ndarray) -> None:
        i = 0
        for p in self.parameters():
            p[...] = flat[i:i + p.size].reshape(p.shape)
            i += p.size
        if i != flat.size:
            raise ValueError("flat vector size mismatch")

    # -- forward ------------------------------------------------------------

    def forward_batch(self, obs: np.ndarray, want_cache: bool = False):
        """obs: (B, input_dim) -> (V: (B,), A: (B, n_actions), Q, cache)."""
        h = obs
        acts = [obs]
        for w, b in zip(self.weights, self.biases):
            h = np.maximum(h @ w + b, 0.0)
            acts.append(h)
        v = (h @ self.w_value + self.b_value)[:, 0]
        a = h @ self.w_adv + self.b_adv
        q = v[:, None] + a - a.mean(axis=1, keepdims=True)
        return v, a, q, (acts if want_cache else None)

    def q_values(self, obs: np.ndarray) -> np.ndarray:
        """Q row for a single observation vector."""
        _, _, q, _ = self.forward_batch(obs[None, :])
        return q[0]


def _fan_in_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def forward(net: QNetwork, obs: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Single-observation forward pass returning (V, A, Q)."""
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape != (net.input_dim,):
        raise ValueError(f"observation must have {net.input_dim} components")
    v, a, q, _ = net.forward_batch(obs[None, :])
    return float(v[0]), a[0], q[0]


def masked_argmax(q_row: np.ndarray, mask: np.ndarray) -> int:
    """Largest valid-action Q, ties broken toward the lowest index."""
    if not mask.any():
        raise ValueError("empty valid-action mask")
    masked = np.where(mask, q_row, -np.inf)
    return int(np.argmax(masked))


def td_target(target_net: QNetwork, online_net: QNetwork, transition,
              gamma: float, mask: np.ndarray | None = None) -> float:
    """Double-network target: terminal transitions return r; otherwise
    r + gamma * Q_target(s', argmax over valid a' of Q_online(s', a'))."""
    if transition.done:
        return float(transition.reward)
    if mask is None:
        mask = transition.next_mask
    mask = np.asarray(mask, dtype=bool)
    from .env import observation_transform

    obs2 = observation_transform(
        np.concatenate([transition.next_x, transition.goal]))
    q_on = online_net.q_values(obs2)
    a_star = masked_argmax(q_on, mask)
    q_tg = target_net.q_values(obs2)
    return float(transition.reward + gamma * q_tg[a_star])


def soft_update(target_net: QNetwork, online_net: QNetwork, rho: float) -> None:
    """theta_minus += rho * (theta - theta_minus); rho = 1 is a hard sync."""
    for pt, po in zip(target_net.parameters(), online_net.parameters()):
        if rho == 1.0:
            pt[...] = po
        else:
            pt += rho * (po - pt)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

class AdamState:
    """Per-parameter first/second moment estimates."""

    def __init__(self, net: QNetwork, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in net.parameters()]
        self.v = [np.zeros_like(p) for p in net.parameters()]

    def apply(self, net: QNetwork, grads: list[np.ndarray], lr: float) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(net.parameters(), grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def td_loss_and_grads(net: QNetwork, obs: np.ndarray, actions: np.ndarray,
                      targets: np.ndarray) -> tuple[float, list[np.ndarray]]:
    """Mean squared TD error over a batch and its analytic gradients, with
    the targets held fixed (no gradient flows through the target values)."""
    batch = obs.shape[0]
    v, a, q, acts = net.forward_batch(obs, want_cache=True)
    chosen = q[np.arange(batch), actions]
    err = chosen - targets
    loss = float(np.mean(err ** 2))

    g = (2.0 / batch) * err                       # dL/dQ(s,a)
    d_v = g                                        # (B,)
    d_a = np.zeros_like(a)
    d_a[np.arange(batch), actions] = g
    d_a -= (g / net.n_actions)[:, None]            # mean-subtraction term

    h_last = acts[-1]
    gw_value = h_last.T @ d_v[:, None]
    gb_value = np.array([d_v.sum()])
    gw_adv = h_last.T @ d_a
    gb_adv = d_a.sum(axis=0)

    d_h = d_v[:, None] @ net.w_value.T + d_a @ net.w_adv.T
    gws: list[np.ndarray] = []
    gbs: list[np.ndarray] = []
    for li in range(len(net.weights) - 1, -1, -1):
        d_h = d_h * (acts[li + 1] > 0.0)
        gws.append(acts[li].T @ d_h)
        gbs.append(d_h.sum(axis=0))
        if li > 0:
            d_h = d_h @ net.weights[li].T
    gws.reverse()
    gbs.reverse()
    return loss, gws + gbs + [gw_value, gb_value, gw_adv, gb_adv]


class Trainer:
    """Owns one online/target pair and its optimizer state."""

    def __init__(self, net: QNetwork, cfg: TrainConfig):
        self.net = net
        self.target = net.clone()
        self.cfg = cfg
        self.adam = AdamState(net)
        self.skipped_batches = 0

    def compute_targets(self, rewards: np.ndarray, dones: np.ndarray,
                        next_obs: np.ndarray, next_masks: np.ndarray) -> np.ndarray:
        """Vectorized double-network targets for a batch."""
        y = rewards.astype(np.float64).copy()
        live = ~dones
        if live.any():
            o2 = next_obs[live]
            _, _, q_on, _ = self.net.forward_batch(o2)
            _, _, q_tg, _ = self.target.forward_batch(o2)
            masked = np.where(next_masks[live], q_on, -np.inf)
            a_star = np.argmax(masked, axis=1)
            y[live] += self.cfg.gamma * q_tg[np.arange(o2.shape[0]), a_star]
        return y

    def train_arrays(self, obs: np.ndarray, actions: np.ndarray,
                     rewards: np.ndarray, dones: np.ndarray,
                     next_obs: np.ndarray, next_masks: np.ndarray) -> float:
        targets = self.compute_targets(rewards, dones, next_obs, next_masks)
        loss, grads = td_loss_and_grads(self.net, obs, actions, targets)
        if not np.isfinite(loss):
            self.skipped_batches += 1
            return loss
        self.adam.apply(self.net, grads, self.cfg.learning_rate)
        soft_update(self.target, self.net, self.cfg.soft_update_rate)
        return loss


def _transitions_to_arrays(batch) -> tuple[np.ndarray, ...]:
    from .env import observation_transform

    obs = observation_transform(
        np.stack([np.concatenate([t.obs_x, t.goal]) for t in batch]))
    actions = np.array([t.action for t in batch], dtype=np.int64)
    rewards = np.array([t.reward for t in batch], dtype=np.float64)
    dones = np.array([t.done for t in batch], dtype=bool)
    next_raw = np.stack([np.concatenate([t.next_x, t.goal]) for t in batch])
    next_raw[dones] = 0.0  # terminal rows are masked out of the bootstrap
    next_obs = observation_transform(next_raw)
    next_masks = np.stack([t.next_mask for t in batch])
    return obs, actions, rewards, dones, next_obs, next_masks


def train_step(trainer: Trainer, batch: Sequence) -> float:
    """One gradient step on a batch of transitions; returns the pre-update
    batch loss. Non-finite losses skip the step."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    return trainer.train_arrays(*_transitions_to_arrays(batch))


# ---------------------------------------------------------------------------
# Checkpoints: versioned header + raw little-endian float64 parameter bytes,
# byte-for-byte deterministic for identical parameters.
# ---------------------------------------------------------------------------

def save_checkpoint(net: QNetwork, path: str) -> None:
    header = json.dumps(
        {
            "version": 1,
            "input_dim": net.input_dim,
            "n_actions": net.n_actions,
            "hidden_sizes": list(net.hidden_sizes),
        },
        sort_keys=True,
    ).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for p in net.parameters():
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_checkpoint(path: str) -> QNetwork:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError("not a checkpoint file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        meta = json.loads(fh.read(hlen).decode())
        if meta.get("version") != 1:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        net = QNetwork(meta["input_dim"], meta["n_actions"],
                       tuple(meta["hidden_sizes"]), seed=0)
        for p in net.parameters():
            raw = fh.read(p.size * 8)
            p[...] = np.frombuffer(raw, dtype="<f8").reshape(p.shape)
    return net
