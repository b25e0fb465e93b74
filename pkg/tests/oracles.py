"""Independent reference computations used by several test modules."""

import itertools

import numpy as np

from affinity_xrl.ddpg import AgentBundle, affinity_loss, softmax


def central_difference(f, x, h=1e-5):
    g = np.zeros_like(x)
    for i in range(x.size):
        old = x[i]
        x[i] = old + h
        up = f()
        x[i] = old - h
        down = f()
        x[i] = old
        g[i] = (up - down) / (2 * h)
    return g


def rel_error(a, b):
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def random_bundle(rng, hidden=(16, 16)):
    """float64 bundle with non-trivial output layers, so gradients are not tiny."""
    b = AgentBundle.create(hidden=hidden, seed=rng, dtype=np.float64)
    for net in (b.actor, b.critic):
        net.flat[:] = rng.uniform(-0.6, 0.6, net.flat.size)
    b.target_actor.flat[:] = rng.uniform(-0.6, 0.6, b.actor.flat.size)
    b.target_critic.flat[:] = rng.uniform(-0.6, 0.6, b.critic.flat.size)
    b.state_mean = rng.standard_normal(7)
    b.state_scale = rng.uniform(0.5, 2.0, 7)
    return b


def actor_objective(bundle, states, prior, lam):
    """Direct evaluation of mean Q(s, mu(s)) - lam * L with no gradient code."""
    s_n = (states - bundle.state_mean) / bundle.state_scale
    a = softmax(bundle.actor(s_n))
    q = bundle.critic(np.hstack([s_n, a]))[:, 0]
    return float(q.mean()) - lam * affinity_loss(a, prior)


def critic_loss(bundle, batch, gamma):
    s, a, r, s2, done = batch
    s_n = (s - bundle.state_mean) / bundle.state_scale
    s2_n = (s2 - bundle.state_mean) / bundle.state_scale
    y = r + gamma * (1 - done) * bundle.target_critic(np.hstack([s2_n, softmax(bundle.target_actor(s2_n))]))[:, 0]
    q = bundle.critic(np.hstack([s_n, a]))[:, 0]
    return float(np.mean((q - y) ** 2))


def random_batch(rng, n=8):
    return (rng.standard_normal((n, 7)), rng.dirichlet(np.ones(5), n), rng.standard_normal(n),
            rng.standard_normal((n, 7)), (rng.random(n) < 0.3).astype(float))


def brute_force_likelihood(initial, transition, emission, obs):
    """Sum over every hidden path of the joint probability."""
    n = len(initial)
    total = 0.0
    for path in itertools.product(range(n), repeat=len(obs)):
        p = initial[path[0]] * emission[path[0], obs[0]]
        for t in range(1, len(obs)):
            p *= transition[path[t - 1], path[t]] * emission[path[t], obs[t]]
        total += p
    return total
