"""Independent Q-learning agents.

Each agent owns a small fully-connected value network over the flattened
observation tensor, a bounded FIFO replay buffer that is continually
refreshed with recent transitions, and an epsilon-greedy policy with a
linearly decaying schedule.  Updates are plain SGD on the mean squared
one-step bootstrap residual, with the bootstrap target held constant.

Two agents sharing an environment never share mutable state: each sees
the other only through the transitions it experiences.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .engine import Action, N_ACTIONS, Observation, PALETTE, derive_rng


class ShapeMismatch(ValueError):
    pass


class EmptyBatch(ValueError):
    pass


class CorruptCheckpoint(Exception):
    pass


class VersionMismatch(Exception):
    def __init__(self, found: int, expected: int):
        super().__init__(f"checkpoint version {found}, this build reads {expected}")
        self.found = found
        self.expected = expected


@dataclass
class Transition:
    obs: Observation
    action: int
    reward: float
    next_obs: Observation
    terminal: bool


class ReplayBuffer:
    """Bounded FIFO transition store; eviction is strictly oldest-first."""

    def __init__(self, capacity: int = 100_000):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._write = 0

    def __len__(self) -> int:
        return len(self._items)

    def store(self, t: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(t)
        else:
            self._items[self._write] = t
            self._write = (self._write + 1) % self.capacity

    def sample(self, k: int, rng: np.random.Generator) -> list[Transition]:
        """Uniform sample with replacement."""
        if not self._items:
            raise EmptyBatch("cannot sample from an empty buffer")
        idx = rng.integers(len(self._items), size=k)
        return [self._items[i] for i in idx]

    def latest(self) -> Transition:
        if not self._items:
            raise EmptyBatch("buffer is empty")
        return self._items[self._write - 1] if len(self._items) == self.capacity else self._items[-1]

    def snapshot(self) -> list[Transition]:
        """Contents oldest to newest."""
        return self._items[self._write:] + self._items[:self._write]


@dataclass(frozen=True)
class EpsilonSchedule:
    """Linear decay from ``start`` to ``end`` over ``decay_steps`` steps."""

    start: float = 1.0
    end: float = 0.1
    decay_steps: int = 1

    def __post_init__(self):
        if not (0.0 <= self.end <= self.start <= 1.0):
            raise ValueError("need 0 <= end <= start <= 1")
        if self.decay_steps < 1:
            raise ValueError("decay_steps must be >= 1")


def epsilon_at(sched: EpsilonSchedule, step: int) -> float:
    if step >= sched.decay_steps:
        return sched.end
    return sched.start - (sched.start - sched.end) * step / sched.decay_steps


@dataclass
class LearnerConfig:
    gamma: float = 0.99
    learning_rate: float = 1e-4
    minibatch_size: int = 32
    updates_per_step: int = 1
    update_period: int = 1          # update on every k-th stored transition
    min_replay: int = 1000          # transitions stored before updates begin
    use_target_network: bool = False
    target_sync_interval: int = 1000

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0):
            raise ValueError("gamma must lie in [0, 1]")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.update_period < 1:
            raise ValueError("update_period must be >= 1")


class QNetwork:
    """Fully-connected action-value network, float64 throughout.

    Rectified-linear hidden layers, identity output.  ``layer_dims`` may
    name zero hidden layers, giving a purely linear value table; with a
    one-hot input and ``bias=False`` that reduces SGD on the squared
    residual to the classic tabular update with step size 2*lr.
    """

    def __init__(self, layer_dims, rng: np.random.Generator | None = None, *, bias: bool = True):
        dims = [int(d) for d in layer_dims]
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ValueError(f"bad layer dims {dims}")
        self.layer_dims = dims
        self.use_bias = bias
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            if rng is None:
                w = np.zeros((fan_in, fan_out))
            else:
                w = rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out))

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def n_actions(self) -> int:
        return self.layer_dims[-1]

    def copy(self) -> "QNetwork":
        clone = QNetwork(self.layer_dims, rng=None, bias=self.use_bias)
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Action values for one observation vector or a batch of them."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ShapeMismatch(f"expected inputs of width {self.input_dim}, got shape {x.shape}")
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                np.maximum(h, 0.0, out=h)
        return h[0] if single else h


def flatten_obs(obs) -> np.ndarray:
    """Observation -> network input vector (channel, row, column order)."""
    if isinstance(obs, Observation):
        return obs.tensor.reshape(-1).astype(np.float64)
    return np.asarray(obs, dtype=np.float64).reshape(-1)


def stack_obs(batch_obs) -> np.ndarray:
    """Batch of observations -> (B, d) float64 network inputs.

    Observation grids are decoded through the palette in one vectorized
    pass; anything else goes through :func:`flatten_obs` row by row.
    """
    if all(isinstance(o, Observation) for o in batch_obs):
        grids = np.stack([o.grid for o in batch_obs])
        colors = PALETTE[grids]                     # (B, rows, cols, 3)
        batch = colors.transpose(0, 3, 1, 2).reshape(len(batch_obs), -1)
        return batch.astype(np.float64)
    return np.stack([flatten_obs(o) for o in batch_obs])


def act(net: QNetwork, obs, epsilon: float, rng: np.random.Generator) -> Action:
    """Epsilon-greedy action: argmax with probability 1 - epsilon (ties
    to the lowest action index), otherwise uniform over all actions."""
    if rng.random() < epsilon:
        return Action(int(rng.integers(net.n_actions)))
    q = net.forward(flatten_obs(obs))
    return Action(int(np.argmax(q)))


def q_gradients(net: QNetwork, xs: np.ndarray, actions: np.ndarray, targets: np.ndarray):
    """Loss and parameter gradients of mean((Q(s,a) - target)^2).

    Targets are constants: no gradient flows through the bootstrap.
    Returns (loss, weight grads, bias grads) with grads ordered like the
    network's layers.
    """
    n = xs.shape[0]
    last = len(net.weights) - 1
    pre: list[np.ndarray] = []       # pre-activation per layer
    post: list[np.ndarray] = [xs]    # layer inputs
    h = xs
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i < last else z
        if i < last:
            post.append(h)
    out = h

    rows = np.arange(n)
    predicted = out[rows, actions]
    err = predicted - targets
    loss = float(np.mean(err * err))

    dout = np.zeros_like(out)
    dout[rows, actions] = 2.0 * err / n
    grads_w: list[np.ndarray] = [None] * len(net.weights)
    grads_b: list[np.ndarray] = [None] * len(net.weights)
    delta = dout
    for i in range(last, -1, -1):
        grads_w[i] = post[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ net.weights[i].T) * (pre[i - 1] > 0.0)
    return loss, grads_w, grads_b


def td_update(net: QNetwork, batch, cfg: LearnerConfig, target_net: QNetwork | None = None) -> float:
    """One SGD step on the batch's mean squared bootstrap residual.

    Target per transition: r for terminal transitions, else
    r + gamma * max_a' Q(s', a'), where the max comes from ``target_net``
    when supplied and from the live network otherwise.  Returns the loss
    before the step.
    """
    if len(batch) == 0:
        raise EmptyBatch("td_update needs a nonempty batch")
    xs = stack_obs([t.obs for t in batch])
    xns = stack_obs([t.next_obs for t in batch])
    actions = np.array([int(t.action) for t in batch])
    rewards = np.array([t.reward for t in batch], dtype=np.float64)
    nonterminal = np.array([0.0 if t.terminal else 1.0 for t in batch])

    bootstrap = (target_net if target_net is not None else net).forward(xns).max(axis=1)
    targets = rewards + cfg.gamma * bootstrap * nonterminal

    loss, grads_w, grads_b = q_gradients(net, xs, actions, targets)
    lr = cfg.learning_rate
    for w, gw in zip(net.weights, grads_w):
        w -= lr * gw
    if net.use_bias:
        for b, gb in zip(net.biases, grads_b):
            b -= lr * gb
    return loss


CHECKPOINT_MAGIC = b"SSDQNET\x00"
CHECKPOINT_VERSION = 1


def save_policy(net: QNetwork, path, step: int = 0) -> None:
    """Write a versioned checkpoint; the round-trip is bit-exact.

    Layout: magic, version, length-prefixed JSON header (layer dims,
    bias flag, training step), then each layer's weight and bias arrays
    as raw row-major float64 bytes in declared order.
    """
    header = json.dumps(
        {"layer_dims": net.layer_dims, "use_bias": net.use_bias, "step": int(step)},
        sort_keys=True,
    ).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
        fh.write(header)
        for w, b in zip(net.weights, net.biases):
            fh.write(np.ascontiguousarray(w, dtype=np.float64).tobytes())
            fh.write(np.ascontiguousarray(b, dtype=np.float64).tobytes())


def load_policy(path) -> tuple[QNetwork, int]:
    """Read a checkpoint back; returns (network, training step)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    fixed = len(CHECKPOINT_MAGIC) + 8
    if len(blob) < fixed or blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CorruptCheckpoint(f"{path}: not a policy checkpoint")
    version, header_len = struct.unpack_from("<II", blob, len(CHECKPOINT_MAGIC))
    if version != CHECKPOINT_VERSION:
        raise VersionMismatch(version, CHECKPOINT_VERSION)
    try:
        header = json.loads(blob[fixed : fixed + header_len].decode())
        dims = [int(d) for d in header["layer_dims"]]
        use_bias = bool(header["use_bias"])
        step = int(header["step"])
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise CorruptCheckpoint(f"{path}: bad header ({exc})") from exc

    net = QNetwork(dims, rng=None, bias=use_bias)
    offset = fixed + header_len
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        for shape in ((fan_in, fan_out), (fan_out,)):
            nbytes = 8 * int(np.prod(shape))
            if offset + nbytes > len(blob):
                raise CorruptCheckpoint(f"{path}: truncated at layer {i}")
            arr = np.frombuffer(blob[offset : offset + nbytes], dtype=np.float64).reshape(shape)
            offset += nbytes
            if len(shape) == 2:
                net.weights[i] = arr.copy()
            else:
                net.biases[i] = arr.copy()
    if offset != len(blob):
        raise CorruptCheckpoint(f"{path}: {len(blob) - offset} trailing bytes")
    return net, step


class QLearner:
    """One independent learner: network + buffer + schedule + own RNG.

    ``observe`` stores the transition and, once the buffer holds
    ``min_replay`` transitions, performs ``updates_per_step`` SGD steps
    on uniformly sampled minibatches.
    """

    needs_obs = True

    def __init__(
        self,
        input_dim: int,
        n_actions: int = N_ACTIONS,
        hidden=(32, 32),
        cfg: LearnerConfig | None = None,
        schedule: EpsilonSchedule | None = None,
        buffer_capacity: int = 100_000,
        rng: np.random.Generator | None = None,
        seed: int = 0,
    ):
        self.cfg = cfg or LearnerConfig()
        self.schedule = schedule or EpsilonSchedule(decay_steps=1)
        self.rng = rng if rng is not None else derive_rng(seed, "learner")
        self.net = QNetwork([input_dim, *hidden, n_actions], self.rng)
        self.target_net = self.net.copy() if self.cfg.use_target_network else None
        self.buffer = ReplayBuffer(buffer_capacity)
        self.update_count = 0
        self._observed = 0
        self._losses: list[float] = []

    def epsilon(self, step: int) -> float:
        return epsilon_at(self.schedule, step)

    def act(self, obs, epsilon: float) -> Action:
        return act(self.net, obs, epsilon, self.rng)

    def observe(self, transition: Transition) -> None:
        self.buffer.store(transition)
        self._observed += 1
        threshold = max(self.cfg.min_replay, self.cfg.minibatch_size)
        if len(self.buffer) < threshold:
            return
        if self._observed % self.cfg.update_period != 0:
            return
        for _ in range(self.cfg.updates_per_step):
            batch = self.buffer.sample(self.cfg.minibatch_size, self.rng)
            loss = td_update(self.net, batch, self.cfg, self.target_net)
            self._losses.append(loss)
            self.update_count += 1
            if self.target_net is not None and self.update_count % self.cfg.target_sync_interval == 0:
                self.target_net = self.net.copy()

    def take_losses(self) -> list[float]:
        """Training losses accumulated since the last call."""
        out = self._losses
        self._losses = []
        return out


class EvalPolicy:
    """Frozen network driven with a caller-chosen epsilon and own RNG,
    so evaluation never disturbs a learner's random stream."""

    needs_obs = True

    def __init__(self, net: QNetwork, rng: np.random.Generator | None = None, seed: int = 0):
        self.net = net
        self.rng = rng if rng is not None else derive_rng(seed, "eval-policy")

    def act(self, obs, epsilon: float) -> Action:
        return act(self.net, obs, epsilon, self.rng)
