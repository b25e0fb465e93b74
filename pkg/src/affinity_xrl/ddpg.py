"""DDPG with an affinity regularizer on the actor.

The actor maximizes ``mean Q(s, mu(s)) - lam * L`` where ``L`` is the mean
squared gap between the batch-mean action and a fixed prior allocation.
"""

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import atomic_write_bytes, check_2d, check_rng, check_simplex
from .env import N_ASSETS, N_FEATURES, EnvState
from .exceptions import EmptyBatch, NonFiniteLoss, ShapeMismatch, TauOutOfRange, ValidationError
from .nn import Mlp, make_optimizer

PROTOTYPES = ("openness", "conscientiousness", "extraversion", "agreeableness", "neuroticism")

# order: savings, property, stocks, mortgage, luxury
DEFAULT_PRIORS = {
    "conscientiousness": (0.15, 0.45, 0.05, 0.30, 0.05),
    "openness": (0.05, 0.10, 0.40, 0.05, 0.40),
    "extraversion": (0.0, 0.0, 0.9, 0.0, 0.1),
    "agreeableness": (0.30, 0.25, 0.15, 0.25, 0.05),
    "neuroticism": (0.50, 0.20, 0.05, 0.20, 0.05),
}


@dataclass(frozen=True)
class AffinityPrior:
    label: str
    weights: tuple

    def __post_init__(self):
        w = check_simplex(self.weights, name=f"prior {self.label!r}")
        if w.shape != (N_ASSETS,):
            raise ValidationError("a prior needs exactly 5 weights")
        object.__setattr__(self, "weights", tuple(float(x) for x in w))

    @classmethod
    def default(cls, label):
        return cls(label, DEFAULT_PRIORS[label])

    @property
    def vector(self):
        return np.array(self.weights)


@dataclass
class TrainConfig:
    lam: float = 1.0
    gamma: float = 0.99
    tau: float = 0.005
    lr_actor: float = 3e-3
    lr_critic: float = 1e-3
    batch_size: int = 64
    buffer_size: int = 50_000
    sigma: float = 0.1
    sigma_final: float = 0.0
    episodes: int = 30
    seed: int = 0
    hidden: tuple = (64, 64)
    optimizer: str = "sgd"
    grad_clip: float = 1.0
    dtype: str = "float32"

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.lam < 0:
            raise ValidationError("lam must be >= 0")
        if not 0 <= self.gamma < 1:
            raise ValidationError("gamma must lie in [0, 1)")
        if not 0 <= self.tau <= 1:
            raise TauOutOfRange(f"tau={self.tau} outside [0, 1]")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.buffer_size < 1:
            raise ValidationError("buffer_size must be >= 1")
        if self.sigma < 0 or self.sigma_final < 0:
            raise ValidationError("exploration noise must be >= 0")
        if self.episodes < 0:
            raise ValidationError("episodes must be >= 0")


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(a, da):
    return a * (da - (da * a).sum(axis=-1, keepdims=True))


class ReplayBuffer:
    """Fixed-capacity ring of transitions; the oldest entry is overwritten first."""

    def __init__(self, capacity, state_dim=N_FEATURES, action_dim=N_ASSETS, dtype=np.float64):
        if capacity < 1:
            raise ValidationError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.s = np.zeros((capacity, state_dim), dtype=dtype)
        self.a = np.zeros((capacity, action_dim), dtype=dtype)
        self.r = np.zeros(capacity, dtype=dtype)
        self.s2 = np.zeros((capacity, state_dim), dtype=dtype)
        self.done = np.zeros(capacity, dtype=dtype)
        self._next = 0
        self._size = 0

    def __len__(self):
        return self._size

    def add(self, s, a, r, s2, done):
        i = self._next
        self.s[i], self.a[i], self.r[i], self.s2[i], self.done[i] = s, a, r, s2, float(done)
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size, rng):
        if self._size == 0:
            raise EmptyBatch("replay buffer is empty")
        idx = rng.integers(0, self._size, size=batch_size)
        return self.s[idx], self.a[idx], self.r[idx], self.s2[idx], self.done[idx]


@dataclass
class AgentBundle:
    actor: Mlp
    critic: Mlp
    target_actor: Mlp
    target_critic: Mlp
    tau: float
    state_mean: np.ndarray = field(default_factory=lambda: np.zeros(N_FEATURES))
    state_scale: np.ndarray = field(default_factory=lambda: np.ones(N_FEATURES))

    @classmethod
    def create(cls, state_dim=N_FEATURES, action_dim=N_ASSETS, hidden=(64, 64), tau=0.005,
               seed=None, state_mean=None, state_scale=None, dtype=np.float64):
        rng = check_rng(seed)
        actor = Mlp((state_dim, *hidden, action_dim), rng, dtype=dtype)
        critic = Mlp((state_dim + action_dim, *hidden, 1), rng, dtype=dtype)
        return cls(
            actor, critic, actor.copy(), critic.copy(), tau,
            np.zeros(state_dim) if state_mean is None else np.asarray(state_mean, float),
            np.ones(state_dim) if state_scale is None else np.asarray(state_scale, float),
        )

    @property
    def state_dim(self):
        return self.actor.sizes[0]

    @property
    def dtype(self):
        return self.actor.dtype

    def normalize(self, S):
        return ((S - self.state_mean) / self.state_scale).astype(self.dtype, copy=False)


def _states(state, dim):
    if isinstance(state, EnvState):
        state = state.features
    S = np.asarray(state, dtype=float)
    single = S.ndim == 1
    S = np.atleast_2d(S)
    if S.shape[1] != dim:
        raise ShapeMismatch(f"state has {S.shape[1]} features, actor expects {dim}")
    return S, single


def actor_forward(bundle, state):
    """Deterministic policy output (softmax over 5 asset classes)."""
    S, single = _states(state, bundle.state_dim)
    a = softmax(bundle.actor(bundle.normalize(S)).astype(np.float64))
    return a[0] if single else a


def affinity_loss(batch_actions, prior):
    A = np.atleast_2d(np.asarray(batch_actions, dtype=float))
    if A.shape[0] == 0 or A.size == 0:
        raise EmptyBatch("affinity loss of an empty batch")
    pi0 = prior.vector if isinstance(prior, AffinityPrior) else np.asarray(prior, dtype=float)
    gap = A.mean(axis=0) - pi0
    return float(np.mean(gap * gap))


def critic_loss_and_grads(bundle, batch, gamma):
    """Mean squared TD error and its gradient w.r.t. the critic parameters."""
    s, a, r, s2, done = batch
    if len(r) == 0:
        raise EmptyBatch("critic update on an empty batch")
    s_n, s2_n = bundle.normalize(s), bundle.normalize(s2)
    a2 = softmax(bundle.target_actor(s2_n))
    q2 = bundle.target_critic(np.hstack([s2_n, a2]))[:, 0]
    y = r + gamma * (1.0 - done) * q2
    q, cache = bundle.critic.forward(np.hstack([s_n, a]))
    err = q[:, 0] - y
    loss = float(np.mean(err * err))
    grads, _ = bundle.critic.backward(cache, (2.0 / len(r)) * err[:, None], need_input=False)
    return loss, grads


def actor_objective_and_grads(bundle, states, prior, lam):
    """``J = mean Q(s, mu(s)) - lam * L`` and its gradient w.r.t. the actor parameters."""
    if len(states) == 0:
        raise EmptyBatch("actor update on an empty batch")
    pi0 = prior.vector if isinstance(prior, AffinityPrior) else np.asarray(prior, dtype=float)
    pi0 = pi0.astype(bundle.dtype)
    n = len(states)
    s_n = bundle.normalize(states)
    z, a_cache = bundle.actor.forward(s_n)
    a = softmax(z)
    q, c_cache = bundle.critic.forward(np.hstack([s_n, a]))
    gap = a.mean(axis=0) - pi0
    L = float(np.mean(gap * gap))
    J = float(q.mean()) - lam * L
    _, dx = bundle.critic.backward(c_cache, np.full((n, 1), 1.0 / n), need_params=False)
    da = dx[:, s_n.shape[1]:] - lam * (2.0 / (gap.size * n)) * gap
    grads, _ = bundle.actor.backward(a_cache, softmax_backward(a, da), need_input=False)
    return J, L, grads


def critic_update(bundle, batch, gamma, optimizer):
    loss, grads = critic_loss_and_grads(bundle, batch, gamma)
    optimizer.step(bundle.critic.flat, grads)
    return loss


def actor_update(bundle, batch, prior, lam, optimizer):
    states = batch[0] if isinstance(batch, tuple) else batch
    J, L, grads = actor_objective_and_grads(bundle, states, prior, lam)
    optimizer.step(bundle.actor.flat, grads, ascend=True)
    return J, L


def soft_update(bundle, tau=None):
    tau = bundle.tau if tau is None else tau
    if not 0.0 <= tau <= 1.0:
        raise TauOutOfRange(f"tau={tau} outside [0, 1]")
    for main, target in ((bundle.actor, bundle.target_actor), (bundle.critic, bundle.target_critic)):
        if tau == 1.0:
            target.flat[...] = main.flat
        elif tau != 0.0:
            target.flat *= 1.0 - tau
            target.flat += tau * main.flat


def select_action(bundle, state, sigma, rng):
    """Policy output plus clipped Gaussian noise, renormalized onto the simplex."""
    a = actor_forward(bundle, state)
    if sigma <= 0:
        return a
    noisy = np.clip(a + sigma * rng.standard_normal(a.shape), 0.0, None)
    total = noisy.sum(axis=-1, keepdims=True)
    if np.any(total <= 0):
        return a
    return noisy / total


def policy_affinity_loss(bundle, features, prior):
    """Affinity loss of the deterministic policy over a set of states."""
    return affinity_loss(actor_forward(bundle, features), prior)


def train(env, prior, config, agent="agent", bundle=None):
    """Run ``config.episodes`` full-horizon episodes; return ``(bundle, log)``.

    Each log row is ``{"episode", "return", "affinity_loss"}``, the loss being
    measured for the deterministic policy over every state of the horizon.
    """
    rng = check_rng(config.seed)
    features = env.features
    if bundle is None:
        scale = features.std(axis=0)
        scale[scale == 0] = 1.0
        bundle = AgentBundle.create(
            hidden=config.hidden, tau=config.tau, seed=rng,
            state_mean=features.mean(axis=0), state_scale=scale, dtype=config.dtype,
        )
    opt_actor = make_optimizer(config.optimizer, config.lr_actor, config.grad_clip)
    opt_critic = make_optimizer(config.optimizer, config.lr_critic, config.grad_clip)
    buffer = ReplayBuffer(config.buffer_size, bundle.state_dim, dtype=bundle.dtype)
    log = []
    for ep in range(config.episodes):
        frac = ep / max(config.episodes - 1, 1)
        sigma = config.sigma + (config.sigma_final - config.sigma) * frac
        state = env.reset()
        total = 0.0
        done = False
        while not done:
            action = select_action(bundle, state.features, sigma, rng)
            next_state, reward, done = env.step(action)
            buffer.add(state.features, action, reward, next_state.features, done)
            total += reward
            state = next_state
            if len(buffer) >= config.batch_size:
                batch = buffer.sample(config.batch_size, rng)
                loss = critic_update(bundle, batch, config.gamma, opt_critic)
                if not np.isfinite(loss):
                    raise NonFiniteLoss(agent, ep)
                J, _ = actor_update(bundle, batch, prior, config.lam, opt_actor)
                if not np.isfinite(J):
                    raise NonFiniteLoss(agent, ep)
                soft_update(bundle, config.tau)
        log.append({
            "episode": ep,
            "return": total,
            "affinity_loss": policy_affinity_loss(bundle, features, prior),
        })
    return bundle, log


def training_log_csv(log):
    lines = ["episode,return,affinity_loss"]
    lines += [f"{row['episode']},{float(row['return'])!r},{float(row['affinity_loss'])!r}" for row in log]
    return "\n".join(lines) + "\n"


class AffinityDDPG(BaseEstimator):
    """Estimator wrapper around :func:`train`.

    ``fit`` takes an :class:`~affinity_xrl.env.InvestmentEnv`; ``predict`` maps a
    feature matrix (n, 7) to allocations (n, 5).
    """

    def __init__(self, prior="conscientiousness", lam=1.0, gamma=0.99, tau=0.005,
                 lr_actor=3e-3, lr_critic=1e-3, batch_size=64, buffer_size=50_000,
                 sigma=0.1, sigma_final=0.0, episodes=30, hidden=(64, 64),
                 optimizer="sgd", grad_clip=1.0, dtype="float32", random_state=0):
        self.prior = prior
        self.lam = lam
        self.gamma = gamma
        self.tau = tau
        self.lr_actor = lr_actor
        self.lr_critic = lr_critic
        self.batch_size = batch_size
        self.buffer_size = buffer_size
        self.sigma = sigma
        self.sigma_final = sigma_final
        self.episodes = episodes
        self.hidden = hidden
        self.optimizer = optimizer
        self.grad_clip = grad_clip
        self.dtype = dtype
        self.random_state = random_state

    def _prior(self):
        if isinstance(self.prior, AffinityPrior):
            return self.prior
        if isinstance(self.prior, str):
            return AffinityPrior.default(self.prior)
        return AffinityPrior("custom", tuple(self.prior))

    def train_config(self):
        return TrainConfig(
            lam=self.lam, gamma=self.gamma, tau=self.tau, lr_actor=self.lr_actor,
            lr_critic=self.lr_critic, batch_size=self.batch_size, buffer_size=self.buffer_size,
            sigma=self.sigma, sigma_final=self.sigma_final, episodes=self.episodes,
            seed=self.random_state, hidden=self.hidden, optimizer=self.optimizer,
            grad_clip=self.grad_clip, dtype=self.dtype,
        )

    def fit(self, env, y=None):
        self.prior_ = self._prior()
        self.bundle_, self.log_ = train(env, self.prior_, self.train_config(), agent=self.prior_.label)
        return self

    def predict(self, X):
        if not hasattr(self, "bundle_"):
            from sklearn.exceptions import NotFittedError
            raise NotFittedError("AffinityDDPG is not fitted yet")
        return actor_forward(self.bundle_, check_2d(X, self.bundle_.state_dim))


# checkpoint format: magic, u32 version, u32 header length, JSON header, raw float64 LE
_MAGIC = b"AXRLCKPT"
CHECKPOINT_VERSION = 1
_NETS = ("actor", "critic", "target_actor", "target_critic")


def checkpoint_bytes(bundle, config=None, prior=None, seed=None):
    arrays, entries = [], []
    for name in _NETS:
        net = getattr(bundle, name)
        for k, p in enumerate(net.params):
            entries.append({"name": f"{name}.{k}", "shape": list(p.shape)})
            arrays.append(p)
    for name in ("state_mean", "state_scale"):
        p = getattr(bundle, name)
        entries.append({"name": name, "shape": list(p.shape)})
        arrays.append(p)
    header = {
        "version": CHECKPOINT_VERSION,
        "sizes": {name: list(getattr(bundle, name).sizes) for name in _NETS},
        "activation": bundle.actor.activation,
        "dtype": bundle.dtype.name,
        "tau": bundle.tau,
        "arrays": entries,
        "config": None if config is None else asdict(config),
        "prior": None if prior is None else {"label": prior.label, "weights": list(prior.weights)},
        "seed": seed,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
    return _MAGIC + struct.pack("<II", CHECKPOINT_VERSION, len(head)) + head + body


def save_checkpoint(path, bundle, config=None, prior=None, seed=None):
    atomic_write_bytes(path, checkpoint_bytes(bundle, config, prior, seed))


def load_checkpoint(path):
    """Return ``(bundle, config, prior, seed)`` from a checkpoint file."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != _MAGIC:
        raise ValidationError(f"{path} is not a checkpoint file")
    version, head_len = struct.unpack("<II", data[8:16])
    if version != CHECKPOINT_VERSION:
        raise ValidationError(f"unsupported checkpoint version {version}")
    header = json.loads(data[16:16 + head_len].decode("utf-8"))
    offset = 16 + head_len
    arrays = {}
    for entry in header["arrays"]:
        n = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arrays[entry["name"]] = np.frombuffer(data, dtype="<f8", count=n, offset=offset).reshape(entry["shape"]).astype(float)
        offset += 8 * n
    nets = {}
    for name in _NETS:
        sizes = header["sizes"][name]
        params = [arrays[f"{name}.{k}"] for k in range(2 * (len(sizes) - 1))]
        nets[name] = Mlp(sizes, activation=header["activation"], params=params, dtype=header["dtype"])
    bundle = AgentBundle(nets["actor"], nets["critic"], nets["target_actor"], nets["target_critic"],
                         header["tau"], arrays["state_mean"], arrays["state_scale"])
    config = None if header["config"] is None else TrainConfig(**header["config"])
    prior = None if header["prior"] is None else AffinityPrior(header["prior"]["label"], tuple(header["prior"]["weights"]))
    return bundle, config, prior, header["seed"]
