"""REINFORCE with a small numpy MLP and three qubit control environments.

Environments are vectorized over the batch: every method acts on arrays whose
first axis indexes episodes. One ``numpy.random.Generator`` drives a whole
training run, so a run is a deterministic function of its seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ImpossibleBranchError
from .models import lz_eigenstates
from .qcore import BlochCoords, bloch_from_state, state_from_bloch

LOG_2PI = math.log(2 * math.pi)
POLICY_FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# multilayer perceptron
# ---------------------------------------------------------------------------

@dataclass
class Mlp:
    """Dense network, tanh on hidden layers and a linear output layer."""

    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.layer_sizes) < 2:
            raise ValueError("need input and output sizes")
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("one weight matrix and bias per layer")
        for W, b, n_in, n_out in zip(self.weights, self.biases, self.layer_sizes[:-1], self.layer_sizes[1:]):
            if W.shape != (n_out, n_in) or b.shape != (n_out,):
                raise ValueError("layer shape mismatch")

    @classmethod
    def init(cls, layer_sizes: Sequence[int], rng: np.random.Generator, output_scale: float = 0.01) -> "Mlp":
        """Glorot-uniform hidden layers; the output layer is scaled down so the initial policy is nearly flat."""
        ws, bs = [], []
        sizes = list(layer_sizes)
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            lim = math.sqrt(6.0 / (n_in + n_out))
            W = rng.uniform(-lim, lim, size=(n_out, n_in))
            if i == len(sizes) - 2:
                W *= output_scale
            ws.append(W)
            bs.append(np.zeros(n_out))
        return cls(tuple(sizes), ws, bs)

    @classmethod
    def zeros(cls, layer_sizes: Sequence[int]) -> "Mlp":
        sizes = list(layer_sizes)
        return cls(tuple(sizes), [np.zeros((o, i)) for i, o in zip(sizes[:-1], sizes[1:])], [np.zeros(o) for o in sizes[1:]])

    def params(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def with_params(self, params: Sequence[np.ndarray]) -> "Mlp":
        params = list(params)
        return Mlp(self.layer_sizes, [np.array(p) for p in params[0::2]], [np.array(p) for p in params[1::2]])


def mlp_forward(net: Mlp, x: np.ndarray, return_cache: bool = False):
    """Outputs for a batch of inputs (rows of ``x``); optionally the activations for backprop."""
    a = np.atleast_2d(np.asarray(x, dtype=float))
    acts = [a]
    n_layers = len(net.weights)
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ W.T + b
        a = np.tanh(z) if i < n_layers - 1 else z
        acts.append(a)
    return (a, acts) if return_cache else a


def mlp_backward(net: Mlp, x: np.ndarray, upstream_grad: np.ndarray, cache=None) -> list[np.ndarray]:
    """Gradients of sum(upstream_grad * output) with respect to [W1, b1, W2, b2, ...]."""
    if cache is None:
        _, cache = mlp_forward(net, x, return_cache=True)
    delta = np.atleast_2d(np.asarray(upstream_grad, dtype=float))
    grads: list[np.ndarray] = []
    for i in range(len(net.weights) - 1, -1, -1):
        a_in = cache[i]
        grads = [delta.T @ a_in, delta.sum(axis=0)] + grads
        if i > 0:
            delta = (delta @ net.weights[i]) * (1.0 - cache[i] ** 2)
    return grads


# ---------------------------------------------------------------------------
# policies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CategoricalHead:
    n_actions: int


@dataclass(frozen=True)
class GaussianHead:
    """Independent normals with means pi*tanh(net output) and learned state-independent log std."""

    n_dims: int
    log_std: np.ndarray
    mean_scale: float = math.pi

    @classmethod
    def init(cls, n_dims: int, std: float = 0.5, mean_scale: float = math.pi) -> "GaussianHead":
        return cls(n_dims, np.full(n_dims, math.log(std)), mean_scale)


@dataclass(frozen=True)
class Policy:
    net: Mlp
    head: CategoricalHead | GaussianHead

    def __post_init__(self):
        n_out = self.net.layer_sizes[-1]
        expected = self.head.n_actions if isinstance(self.head, CategoricalHead) else self.head.n_dims
        if n_out != expected:
            raise ValueError("network output size does not match the head")

    @classmethod
    def categorical(cls, layer_sizes: Sequence[int], rng: np.random.Generator) -> "Policy":
        return cls(Mlp.init(layer_sizes, rng), CategoricalHead(int(layer_sizes[-1])))

    @classmethod
    def gaussian(cls, layer_sizes: Sequence[int], rng: np.random.Generator, std: float = 0.5) -> "Policy":
        return cls(Mlp.init(layer_sizes, rng), GaussianHead.init(int(layer_sizes[-1]), std))

    def params(self) -> list[np.ndarray]:
        out = self.net.params()
        if isinstance(self.head, GaussianHead):
            out.append(self.head.log_std)
        return out

    def with_params(self, params: Sequence[np.ndarray]) -> "Policy":
        params = list(params)
        if isinstance(self.head, GaussianHead):
            return Policy(self.net.with_params(params[:-1]), replace(self.head, log_std=np.array(params[-1])))
        return Policy(self.net.with_params(params), self.head)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def action_probabilities(policy: Policy, obs: np.ndarray) -> np.ndarray:
    if not isinstance(policy.head, CategoricalHead):
        raise TypeError("probabilities are defined for categorical heads")
    return _softmax(mlp_forward(policy.net, obs))


def gaussian_mean(policy: Policy, obs: np.ndarray) -> np.ndarray:
    return policy.head.mean_scale * np.tanh(mlp_forward(policy.net, obs))


def policy_sample(policy: Policy, obs: np.ndarray, rng: np.random.Generator):
    """Sample one action per observation row; returns (actions, log_probs).

    Gaussian actions are returned unsquashed; environments wrap them into [-pi, pi).
    """
    out = mlp_forward(policy.net, obs)
    if isinstance(policy.head, CategoricalHead):
        p = _softmax(out)
        u = rng.random(p.shape[0])
        cdf = np.cumsum(p, axis=1)
        actions = np.minimum((cdf < u[:, None]).sum(axis=1), p.shape[1] - 1)
        return actions, np.log(p[np.arange(len(actions)), actions])
    head = policy.head
    mu = head.mean_scale * np.tanh(out)
    std = np.exp(head.log_std)
    actions = mu + std * rng.standard_normal(mu.shape)
    return actions, _gaussian_logp(actions, mu, head.log_std)


def _gaussian_logp(actions, mu, log_std):
    std = np.exp(log_std)
    return np.sum(-0.5 * ((actions - mu) / std) ** 2 - log_std - 0.5 * LOG_2PI, axis=-1)


def policy_log_prob(policy: Policy, obs: np.ndarray, actions: np.ndarray) -> np.ndarray:
    out = mlp_forward(policy.net, obs)
    if isinstance(policy.head, CategoricalHead):
        logp = out - out.max(axis=1, keepdims=True)
        logp = logp - np.log(np.exp(logp).sum(axis=1, keepdims=True))
        actions = np.asarray(actions, dtype=int)
        return logp[np.arange(len(actions)), actions]
    mu = policy.head.mean_scale * np.tanh(out)
    return _gaussian_logp(np.asarray(actions, dtype=float), mu, policy.head.log_std)


def policy_grad_logp(policy: Policy, obs: np.ndarray, actions: np.ndarray, weights: np.ndarray | None = None) -> list[np.ndarray]:
    """Sum over rows of weights_i * grad log pi(a_i | s_i), in the layout of ``policy.params()``."""
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    n = obs.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float).reshape(n)
    out, cache = mlp_forward(policy.net, obs, return_cache=True)
    if isinstance(policy.head, CategoricalHead):
        p = _softmax(out)
        onehot = np.zeros_like(p)
        onehot[np.arange(n), np.asarray(actions, dtype=int).reshape(n)] = 1.0
        upstream = (onehot - p) * w[:, None]
        return mlp_backward(policy.net, obs, upstream, cache)
    head = policy.head
    t = np.tanh(out)
    mu = head.mean_scale * t
    var = np.exp(2 * head.log_std)
    diff = np.asarray(actions, dtype=float).reshape(mu.shape) - mu
    upstream = (diff / var) * head.mean_scale * (1 - t * t) * w[:, None]
    grads = mlp_backward(policy.net, obs, upstream, cache)
    grads.append(np.sum((diff * diff / var - 1.0) * w[:, None], axis=0))
    return grads


# ---------------------------------------------------------------------------
# REINFORCE
# ---------------------------------------------------------------------------

@dataclass
class TrajectoryBatch:
    """N episodes of T steps. ``actions`` has shape (N, T) or (N, T, K)."""

    observations: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray

    def __post_init__(self):
        if self.rewards.ndim != 2 or self.rewards.shape[0] == 0:
            raise ValueError("batch needs at least one episode")
        if not np.all(np.isfinite(self.rewards)):
            raise ValueError("rewards must be finite")

    @property
    def n_episodes(self) -> int:
        return self.rewards.shape[0]

    @property
    def n_steps(self) -> int:
        return self.rewards.shape[1]


def reward_to_go(rewards: np.ndarray) -> np.ndarray:
    return np.flip(np.cumsum(np.flip(rewards, axis=1), axis=1), axis=1)


def advantages(G: np.ndarray) -> np.ndarray:
    """G_t - b_t with b_t the mean of G_t over the other episodes of the batch.

    Leaving the episode's own return out keeps the estimator unbiased. Returns are
    shifted by their minimum first so that identical returns give exactly zero.
    """
    N = G.shape[0]
    if N < 2:
        return G.copy()
    shifted = G - G.min(axis=0, keepdims=True)
    total = shifted.sum(axis=0, keepdims=True)
    return shifted - (total - shifted) / (N - 1)


def policy_gradient(policy: Policy, batch: TrajectoryBatch, baseline: bool = True) -> list[np.ndarray]:
    """(1/N) sum_j sum_t grad log pi(a_t|s_t) [G_t - b_t] with a leave-one-out batch baseline b_t."""
    G = reward_to_go(batch.rewards)
    adv = advantages(G) if baseline else G
    N, T = batch.rewards.shape
    obs = batch.observations.reshape(N * T, -1)
    acts = batch.actions.reshape((N * T,) + batch.actions.shape[2:])
    grads = policy_grad_logp(policy, obs, acts, adv.reshape(N * T))
    return [g / N for g in grads]


@dataclass
class Adam:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] | None = None
    v: list[np.ndarray] | None = None

    def ascend(self, params: list[np.ndarray], grads: list[np.ndarray]) -> list[np.ndarray]:
        if self.m is None:
            self.m = [np.zeros_like(g) for g in grads]
            self.v = [np.zeros_like(g) for g in grads]
        self.step += 1
        out = []
        c1 = 1 - self.beta1 ** self.step
        c2 = 1 - self.beta2 ** self.step
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            out.append(p + self.lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps))
        return out


def reinforce_update(
    policy: Policy,
    batch: TrajectoryBatch,
    learning_rate: float,
    baseline: bool = True,
    optimizer: Adam | None = None,
) -> Policy:
    """One ascent step; plain gradient ascent unless an ``Adam`` state is supplied."""
    grads = policy_gradient(policy, batch, baseline)
    params = policy.params()
    if optimizer is None:
        new = [p + learning_rate * g for p, g in zip(params, grads)]
    else:
        new = optimizer.ascend(params, grads)
    return policy.with_params(new)


# ---------------------------------------------------------------------------
# qubit helpers
# ---------------------------------------------------------------------------

def su2_exp(coeffs: np.ndarray, dt: float | np.ndarray) -> np.ndarray:
    """exp(-i dt (c_x X + c_y Y + c_z Z)) for a batch of real coefficient rows, shape (B, 2, 2)."""
    c = np.atleast_2d(np.asarray(coeffs, dtype=float))
    norm = np.linalg.norm(c, axis=1)
    ang = norm * dt
    safe = np.where(norm > 0, norm, 1.0)
    n = c / safe[:, None]
    cos, sin = np.cos(ang), np.sin(ang)
    U = np.empty((c.shape[0], 2, 2), dtype=complex)
    U[:, 0, 0] = cos - 1j * sin * n[:, 2]
    U[:, 1, 1] = cos + 1j * sin * n[:, 2]
    U[:, 0, 1] = -1j * sin * (n[:, 0] - 1j * n[:, 1])
    U[:, 1, 0] = -1j * sin * (n[:, 0] + 1j * n[:, 1])
    return U


def _apply(U: np.ndarray, psi: np.ndarray) -> np.ndarray:
    return np.einsum("bij,bj->bi", U, psi)


def bloch_vectors(psi: np.ndarray) -> np.ndarray:
    """Bloch vectors of a batch of qubit states, shape (B, 3)."""
    a, b = psi[:, 0], psi[:, 1]
    cross = np.conj(a) * b
    return np.stack([2 * cross.real, 2 * cross.imag, np.abs(a) ** 2 - np.abs(b) ** 2], axis=1)


def uniform_qubit_states(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random pure qubit states (uniform on the Bloch sphere)."""
    cos_theta = rng.uniform(-1.0, 1.0, n)
    phi = rng.uniform(0.0, 2 * math.pi, n)
    theta = np.arccos(cos_theta)
    return np.stack([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)], axis=1).astype(complex)


def log_fidelity_reward(F, cap: float = 12.0):
    """-log10(1 - F), capped."""
    F = np.asarray(F, dtype=float)
    with np.errstate(divide="ignore"):
        r = -np.log10(np.clip(1.0 - F, 0.0, None))
    return np.minimum(r, cap)


# ---------------------------------------------------------------------------
# environment: qubit state preparation with seven gates
# ---------------------------------------------------------------------------

QUBIT_PREP_GATES = ("I", "X", "Y", "Z", "-X", "-Y", "-Z")


def _gate_coeffs(actions: np.ndarray) -> np.ndarray:
    """Half-angle coefficient rows so that exp(-i dt c.sigma) = U_a."""
    table = np.array([
        [0, 0, 0],
        [0.5, 0, 0],
        [0, 0.5, 0],
        [0, 0, 0.5],
        [-0.5, 0, 0],
        [0, -0.5, 0],
        [0, 0, -0.5],
    ])
    return table[np.asarray(actions, dtype=int)]


def env_qubit_prep_step(state: BlochCoords, action: int, dt: float = math.pi / 15) -> tuple[BlochCoords, float]:
    """Apply one of the seven gates and return the new Bloch angles and the fidelity with |0>."""
    if not 0 <= int(action) < 7:
        raise ValueError("action outside 0..6")
    psi = state_from_bloch(state)
    out = su2_exp(_gate_coeffs([action]), dt)[0] @ psi
    return bloch_from_state(out), float(abs(out[0]) ** 2)


@dataclass
class QubitPrepEnv:
    """Steer any qubit state to |0> with fixed rotations of angle dt; reward is the instantaneous fidelity."""

    dt: float = math.pi / 15
    n_steps: int = 15
    observation: str = "bloch"
    n_actions: int = 7
    psi: np.ndarray | None = field(default=None, repr=False)
    t: int = 0

    def __post_init__(self):
        if self.observation not in ("bloch", "angles"):
            raise ValueError("observation must be 'bloch' or 'angles'")

    @property
    def obs_dim(self) -> int:
        return 3 if self.observation == "bloch" else 2

    def reset(self, batch_size: int, rng: np.random.Generator, initial: np.ndarray | None = None) -> np.ndarray:
        self.psi = uniform_qubit_states(batch_size, rng) if initial is None else np.array(initial, dtype=complex).reshape(-1, 2)
        self.t = 0
        return self.observe()

    def observe(self) -> np.ndarray:
        v = bloch_vectors(self.psi)
        if self.observation == "bloch":
            return v
        theta = np.arccos(np.clip(v[:, 2], -1.0, 1.0))
        phi = np.mod(np.arctan2(v[:, 1], v[:, 0]), 2 * math.pi)
        return np.stack([theta, phi], axis=1)

    def step(self, actions: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        self.psi = _apply(su2_exp(_gate_coeffs(actions), self.dt), self.psi)
        self.t += 1
        return self.observe(), self.fidelity()

    def fidelity(self) -> np.ndarray:
        return np.abs(self.psi[:, 0]) ** 2

    def final_metric(self, rewards: np.ndarray) -> np.ndarray:
        return rewards[:, -1]


# ---------------------------------------------------------------------------
# environment: counterdiabatic-like protocol with discrete increments
# ---------------------------------------------------------------------------

@dataclass
class CDProtocolEnv:
    """H_g(t) = delta X + nu(t) Z - g Y with nu linear from +2 delta to -2 delta.

    Each action a in {-n..n} changes g by a*dg before the step is applied. The only
    nonzero reward is the capped log-fidelity with the final ground state.
    Observations are the Bloch vector, t/T and g.
    """

    delta: float = 1.0
    T: float = 1.0
    n_steps: int = 50
    n: int = 4
    dg: float | None = None
    reward_cap: float = 12.0
    psi: np.ndarray | None = field(default=None, repr=False)
    g: np.ndarray | None = field(default=None, repr=False)
    t: int = 0

    def __post_init__(self):
        if self.dg is None:
            # 2n*dg spans twice the peak of the exact CD protocol
            self.dg = abs(self.cd_value_peak()) / self.n

    @property
    def n_actions(self) -> int:
        return 2 * self.n + 1

    @property
    def obs_dim(self) -> int:
        return 5

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def nu_i(self) -> float:
        return 2.0 * self.delta

    @property
    def nu_dot(self) -> float:
        return -4.0 * self.delta / self.T

    def nu(self, t: float) -> float:
        return self.nu_i + self.nu_dot * t

    def cd_value(self, t: float) -> float:
        """Exact CD amplitude g(t) = (1/2) delta nu'(t) / (delta^2 + nu(t)^2)."""
        return 0.5 * self.delta * self.nu_dot / (self.delta ** 2 + self.nu(t) ** 2)

    def cd_value_peak(self) -> float:
        return 0.5 * self.nu_dot / self.delta

    @property
    def g_initial(self) -> float:
        return self.cd_value(0.0)

    def initial_state(self) -> np.ndarray:
        return lz_eigenstates(self.delta, self.nu(0.0))[0]

    def target_state(self) -> np.ndarray:
        return lz_eigenstates(self.delta, self.nu(self.T))[0]

    def reset(self, batch_size: int, rng: np.random.Generator | None = None) -> np.ndarray:
        self.psi = np.tile(self.initial_state(), (batch_size, 1))
        self.g = np.full(batch_size, self.g_initial)
        self.t = 0
        return self.observe()

    def observe(self) -> np.ndarray:
        v = bloch_vectors(self.psi)
        B = v.shape[0]
        return np.column_stack([v, np.full(B, self.t / self.n_steps), self.g])

    def step_unitaries(self, g_values: np.ndarray, t_index: int) -> np.ndarray:
        B = len(g_values)
        coeffs = np.column_stack([np.full(B, self.delta), -np.asarray(g_values), np.full(B, self.nu(t_index * self.dt))])
        return su2_exp(coeffs, self.dt)

    def step(self, actions: np.ndarray, rng: np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray]:
        a = np.asarray(actions, dtype=int) - self.n
        self.g = self.g + a * self.dg
        self.psi = _apply(self.step_unitaries(self.g, self.t), self.psi)
        self.t += 1
        rewards = np.zeros(len(self.g))
        if self.t == self.n_steps:
            rewards = log_fidelity_reward(self.fidelity(), self.reward_cap)
        return self.observe(), rewards

    def fidelity(self) -> np.ndarray:
        return np.abs(self.psi @ self.target_state().conj()) ** 2

    def final_metric(self, rewards: np.ndarray) -> np.ndarray:
        return rewards[:, -1]

    def protocol_reward(self, g_values: Sequence[float]) -> float:
        """Final reward of an explicit protocol g_0..g_{N_T-1}."""
        psi = self.initial_state()
        for j, g in enumerate(g_values):
            psi = self.step_unitaries(np.array([g]), j)[0] @ psi
        F = abs(np.vdot(self.target_state(), psi)) ** 2
        return float(log_fidelity_reward(F, self.reward_cap))

    def cd_tracking_actions(self) -> list[int]:
        """Actions that keep g as close as the action set allows to the exact CD value at each step."""
        g = self.g_initial
        out = []
        for j in range(self.n_steps):
            a = int(np.clip(round((self.cd_value(j * self.dt) - g) / self.dg), -self.n, self.n))
            g += a * self.dg
            out.append(a + self.n)
        return out

    def cd_baseline_reward(self) -> float:
        """Reward of the discretized CD protocol reachable with the action set."""
        g = self.g_initial
        gs = []
        for a in self.cd_tracking_actions():
            g += (a - self.n) * self.dg
            gs.append(g)
        return self.protocol_reward(gs)

    def cd_sampled_reward(self) -> float:
        """Reward of the exact CD amplitude sampled at the step start times (no action quantization)."""
        return self.protocol_reward([self.cd_value(j * self.dt) for j in range(self.n_steps)])


def env_cd_protocol_step(env: CDProtocolEnv, psi: np.ndarray, g: float, action: int, t_index: int):
    """Single-episode step: returns (g', unitary applied, new state, reward)."""
    if not -env.n <= action <= env.n:
        raise ValueError("action outside -n..n")
    g_new = g + action * env.dg
    U = env.step_unitaries(np.array([g_new]), t_index)[0]
    psi_new = U @ psi
    reward = 0.0
    if t_index == env.n_steps - 1:
        reward = float(log_fidelity_reward(abs(np.vdot(env.target_state(), psi_new)) ** 2, env.reward_cap))
    return g_new, U, psi_new, reward


# ---------------------------------------------------------------------------
# environment: qubit with ancilla read-out, emission and entangling noise
# ---------------------------------------------------------------------------

def control_unitary(alpha, beta, gamma) -> np.ndarray:
    """exp(-i gamma Z/2) exp(-i beta Y/2) exp(-i alpha X/2) for arrays of angles, shape (B, 2, 2)."""
    alpha, beta, gamma = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (alpha, beta, gamma))
    zeros = np.zeros_like(alpha)
    Ux = su2_exp(np.column_stack([alpha / 2, zeros, zeros]), 1.0)
    Uy = su2_exp(np.column_stack([zeros, beta / 2, zeros]), 1.0)
    Uz = su2_exp(np.column_stack([zeros, zeros, gamma / 2]), 1.0)
    return Uz @ Uy @ Ux


_XX = np.array([[0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0], [1, 0, 0, 0]], dtype=complex)
_YY = np.array([[0, 0, 0, -1], [0, 0, 1, 0], [0, 1, 0, 0], [-1, 0, 0, 0]], dtype=complex)
_ZZ = np.diag([1, -1, -1, 1]).astype(complex)


def entangling_factors(a: float, b: float, c: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """exp(-i a XX), exp(-i b YY), exp(-i c ZZ) on qubit (x) ancilla; each squares to the identity generator."""
    eye = np.eye(4, dtype=complex)
    return tuple(math.cos(t) * eye - 1j * math.sin(t) * P for t, P in ((a, _XX), (b, _YY), (c, _ZZ)))


def entangling_unitary(a: float, b: float, c: float) -> np.ndarray:
    fx, fy, fz = entangling_factors(a, b, c)
    return fz @ fy @ fx


def wrap_angle(x):
    return np.mod(np.asarray(x) + math.pi, 2 * math.pi) - math.pi


def feedback_target(theta: float = math.pi / 4, phi: float = math.pi / 3) -> np.ndarray:
    return np.array([math.cos(theta / 2), np.exp(1j * phi) * math.sin(theta / 2)], dtype=complex)


@dataclass
class FeedbackEnv:
    """Qubit (x) ancilla environment with binary observations and a binary terminal reward.

    Observation layout: [time one-hot (T) | ancilla outcomes (T) | photon detector (T)].
    Ancilla entries are +1 for |0> and -1 for |1>; photon entries are +1 without and -1
    with a detected emission; both start at +1.
    """

    p_emit: float = 0.0
    p_ent: float = 0.0
    n_steps: int = 5
    theta: float = math.pi / 4
    phi: float = math.pi / 3
    noise_seed: int = 0
    joint: np.ndarray | None = field(default=None, repr=False)
    obs: np.ndarray | None = field(default=None, repr=False)
    t: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_emit <= 1.0 or not 0.0 <= self.p_ent:
            raise ValueError("noise probabilities out of range")
        rng = np.random.default_rng(self.noise_seed)
        self.noise_angles = tuple(float(v) for v in rng.uniform(-self.p_ent * math.pi, self.p_ent * math.pi, 3))
        self.U_ent = entangling_unitary(*self.noise_angles)
        self.target = feedback_target(self.theta, self.phi)

    n_actions = 3

    @property
    def obs_dim(self) -> int:
        return 3 * self.n_steps

    def reset(self, batch_size: int, rng: np.random.Generator | None = None) -> np.ndarray:
        self.joint = np.zeros((batch_size, 4), dtype=complex)
        self.joint[:, 2] = 1.0  # |1>_q |0>_a
        self.obs = np.zeros((batch_size, 3 * self.n_steps))
        self.obs[:, self.n_steps:] = 1.0
        self.obs[:, 0] = 1.0
        self.t = 0
        return self.obs.copy()

    def step(self, actions: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        ang = wrap_angle(np.atleast_2d(actions))
        B = self.joint.shape[0]
        Uq = control_unitary(ang[:, 0], ang[:, 1], ang[:, 2])
        psi = self.joint.reshape(B, 2, 2)
        psi = np.einsum("bij,bja->bia", Uq, psi).reshape(B, 4)
        psi = psi @ self.U_ent.T
        photon = np.ones(B)
        if self.p_emit > 0:
            emit = rng.random(B) < self.p_emit
            if np.any(emit):
                psi[emit] = _emit(psi[emit])
                photon[emit] = -1.0
        psi, outcome = _measure_and_reset_ancilla(psi, rng)
        self.joint = psi
        T = self.n_steps
        self.obs[:, T + self.t] = outcome
        self.obs[:, 2 * T + self.t] = photon
        self.obs[:, self.t] = 0.0
        self.t += 1
        rewards = np.zeros(B)
        if self.t < T:
            self.obs[:, self.t] = 1.0
        else:
            rewards = self.terminal_reward(rng)
        return self.obs.copy(), rewards

    def qubit_states(self) -> np.ndarray:
        """Qubit factor of the joint state (the ancilla is |0> after every reset)."""
        return self.joint[:, [0, 2]]

    def fidelity(self) -> np.ndarray:
        return np.abs(self.qubit_states() @ self.target.conj()) ** 2

    def terminal_reward(self, rng: np.random.Generator) -> np.ndarray:
        self.final_fidelity = self.fidelity()
        out = measure_target_with_ancilla(self.joint, self.target, rng)
        return out

    def final_metric(self, rewards: np.ndarray) -> np.ndarray:
        return 0.5 * (rewards[:, -1] + 1.0)


def _emit(psi: np.ndarray) -> np.ndarray:
    """Project the qubit onto |1>; states with no |1> weight decay through the lowering operator."""
    out = np.zeros_like(psi)
    out[:, 2:] = psi[:, 2:]
    norm = np.linalg.norm(out, axis=1)
    dead = norm < 1e-7
    if np.any(dead):
        out[dead, 2:] = psi[dead, :2]
        norm[dead] = np.linalg.norm(out[dead], axis=1)
    return out / norm[:, None]


def _measure_and_reset_ancilla(psi: np.ndarray, rng: np.random.Generator):
    """z-measurement of the ancilla (+1 for |0>), then reset of the ancilla to |0>."""
    p1 = np.abs(psi[:, 1]) ** 2 + np.abs(psi[:, 3]) ** 2
    one = rng.random(len(psi)) < p1
    q = np.where(one[:, None], psi[:, [1, 3]], psi[:, [0, 2]])
    norm = np.linalg.norm(q, axis=1)
    if np.any(norm ** 2 < 1e-14):
        raise ImpossibleBranchError(float(np.min(norm ** 2)))
    q = q / norm[:, None]
    out = np.zeros_like(psi)
    out[:, 0] = q[:, 0]
    out[:, 2] = q[:, 1]
    return out, np.where(one, -1.0, 1.0)


def target_observable(target: np.ndarray) -> np.ndarray:
    """sigma_* = n_* . sigma with n_* the Bloch vector of the target."""
    n = bloch_vectors(target.reshape(1, 2))[0]
    return np.array([[n[2], n[0] - 1j * n[1]], [n[0] + 1j * n[1], -n[2]]], dtype=complex)


def measure_target_with_ancilla(joint: np.ndarray, target: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Hadamard, controlled sigma_*, Hadamard on the ancilla, then a z-measurement: +1 or -1 per episode."""
    had = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
    H_a = np.kron(np.eye(2), had)
    C = np.zeros((4, 4), dtype=complex)
    P0 = np.diag([1.0, 0.0])
    P1 = np.diag([0.0, 1.0])
    C = np.kron(np.eye(2), P0) + np.kron(target_observable(target), P1)
    circuit = H_a @ C @ H_a
    psi = np.atleast_2d(joint) @ circuit.T
    p1 = np.abs(psi[:, 1]) ** 2 + np.abs(psi[:, 3]) ** 2
    return np.where(rng.random(len(psi)) < p1, -1.0, 1.0)


# ---------------------------------------------------------------------------
# training and evaluation
# ---------------------------------------------------------------------------

def rollout(env, policy: Policy, batch_size: int, rng: np.random.Generator, greedy: bool = False, initial=None):
    if initial is not None:
        obs = env.reset(batch_size, rng, initial)
    else:
        obs = env.reset(batch_size, rng)
    O, A, L, R = [], [], [], []
    for _ in range(env.n_steps):
        if greedy:
            actions = greedy_actions(policy, obs)
            logp = np.zeros(batch_size)
        else:
            actions, logp = policy_sample(policy, obs, rng)
        O.append(obs)
        A.append(actions)
        L.append(logp)
        obs, rewards = env.step(actions, rng)
        R.append(rewards)
    return TrajectoryBatch(
        np.stack(O, axis=1), np.stack(A, axis=1), np.stack(L, axis=1), np.stack(R, axis=1)
    )


def greedy_actions(policy: Policy, obs: np.ndarray) -> np.ndarray:
    out = mlp_forward(policy.net, obs)
    if isinstance(policy.head, CategoricalHead):
        return np.argmax(out, axis=1)  # lowest index wins ties
    return policy.head.mean_scale * np.tanh(out)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    iterations: int = 500
    learning_rate: float = 0.01
    rng_seed: int = 0
    optimizer: str = "adam"
    baseline: bool = True

    def __post_init__(self):
        if self.batch_size < 1 or self.iterations < 0:
            raise ValueError("batch_size must be positive and iterations non-negative")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")


@dataclass
class TrainingCurve:
    mean: list[float] = field(default_factory=list)
    minimum: list[float] = field(default_factory=list)
    maximum: list[float] = field(default_factory=list)
    diagnostic: list[float] = field(default_factory=list)

    def append(self, values: np.ndarray, diagnostic: float | None = None):
        self.mean.append(float(np.mean(values)))
        self.minimum.append(float(np.min(values)))
        self.maximum.append(float(np.max(values)))
        if diagnostic is not None:
            self.diagnostic.append(float(diagnostic))


def make_rngs(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent generators for parameter initialization and rollouts."""
    init_ss, roll_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init_ss), np.random.default_rng(roll_ss)


def train(env, policy: Policy, config: TrainConfig, rng: np.random.Generator | None = None):
    """REINFORCE loop; the curve records the final-step metric of every batch."""
    if rng is None:
        rng = make_rngs(config.rng_seed)[1]
    opt = Adam(config.learning_rate) if config.optimizer == "adam" else None
    curve = TrainingCurve()
    for _ in range(config.iterations):
        batch = rollout(env, policy, config.batch_size, rng)
        diag = float(np.mean(env.final_fidelity)) if hasattr(env, "final_fidelity") else None
        curve.append(env.final_metric(batch.rewards), diag)
        policy = reinforce_update(policy, batch, config.learning_rate, config.baseline, opt)
    return policy, curve


@dataclass
class EvalStats:
    mean: float
    minimum: float
    maximum: float
    values: np.ndarray


def greedy_eval(policy: Policy, env, n_episodes: int = 1, rng_seed: int = 0, initial=None) -> EvalStats:
    """Deterministic-action rollouts; reports statistics of the final fidelity."""
    rng = np.random.default_rng(rng_seed)
    if initial is not None:
        n_episodes = len(np.atleast_2d(initial))
    rollout(env, policy, n_episodes, rng, greedy=True, initial=initial)
    F = env.final_fidelity if isinstance(env, FeedbackEnv) else env.fidelity()
    return EvalStats(float(np.mean(F)), float(np.min(F)), float(np.max(F)), np.asarray(F))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def policy_to_dict(policy: Policy) -> dict:
    head = policy.head
    if isinstance(head, CategoricalHead):
        head_spec = {"kind": "categorical", "n_actions": head.n_actions}
    else:
        head_spec = {"kind": "gaussian", "n_dims": head.n_dims, "log_std": head.log_std.tolist(), "mean_scale": head.mean_scale}
    return {
        "format_version": POLICY_FORMAT_VERSION,
        "layer_sizes": list(policy.net.layer_sizes),
        "weights": [W.tolist() for W in policy.net.weights],
        "biases": [b.tolist() for b in policy.net.biases],
        "head": head_spec,
    }


def policy_from_dict(data: dict) -> Policy:
    if data.get("format_version") != POLICY_FORMAT_VERSION:
        raise ValueError(f"unsupported policy format {data.get('format_version')!r}")
    net = Mlp(tuple(data["layer_sizes"]), [np.array(W, dtype=float) for W in data["weights"]], [np.array(b, dtype=float) for b in data["biases"]])
    h = data["head"]
    if h["kind"] == "categorical":
        head = CategoricalHead(int(h["n_actions"]))
    else:
        head = GaussianHead(int(h["n_dims"]), np.array(h["log_std"], dtype=float), float(h["mean_scale"]))
    return Policy(net, head)


def save_policy(policy: Policy, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(policy_to_dict(policy), fh, sort_keys=True)


def load_policy(path) -> Policy:
    with open(path, encoding="utf-8") as fh:
        return policy_from_dict(json.load(fh))
