"""Discrete hidden Markov model: scaled forward-backward and Baum-Welch."""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._validation import check_rng, check_row_stochastic
from .exceptions import UnknownSymbol, ValidationError, ZeroProbabilityObservation


@dataclass
class HmmModel:
    initial: np.ndarray
    transition: np.ndarray
    emission: np.ndarray

    def __post_init__(self):
        self.initial = np.asarray(self.initial, dtype=float)
        self.transition = check_row_stochastic(self.transition, name="transition")
        self.emission = check_row_stochastic(self.emission, name="emission")
        check_row_stochastic(self.initial[None, :], name="initial")
        n = len(self.initial)
        if self.transition.shape != (n, n) or self.emission.shape[0] != n:
            raise ValidationError("initial, transition and emission sizes disagree")

    @property
    def n_states(self):
        return len(self.initial)

    @property
    def n_symbols(self):
        return self.emission.shape[1]

    @classmethod
    def random(cls, n_states, n_symbols, seed=None):
        rng = check_rng(seed)
        return cls(
            rng.dirichlet(np.ones(n_states)),
            rng.dirichlet(np.ones(n_states), size=n_states),
            rng.dirichlet(np.ones(n_symbols), size=n_states),
        )

    def sample(self, length, seed=None):
        """Draw ``(hidden_states, observations)`` of the given length."""
        rng = check_rng(seed)
        x = np.empty(length, dtype=int)
        y = np.empty(length, dtype=int)
        state = rng.choice(self.n_states, p=self.initial)
        for t in range(length):
            x[t] = state
            y[t] = rng.choice(self.n_symbols, p=self.emission[state])
            state = rng.choice(self.n_states, p=self.transition[state])
        return x, y


def _check_obs(model, obs):
    obs = np.asarray(obs)
    if obs.ndim != 1 or obs.size == 0:
        raise ValidationError("observations must be a non-empty 1-d sequence")
    if not np.issubdtype(obs.dtype, np.integer) or obs.min() < 0 or obs.max() >= model.n_symbols:
        raise UnknownSymbol(f"observations must be integers in 0..{model.n_symbols - 1}")
    return obs.astype(int)


def forward_backward(model, obs):
    """Posterior state marginals, pairwise posteriors and the log-likelihood.

    Returns ``(gamma (T, n), xi (T-1, n, n), log_likelihood)``. Forward
    messages are renormalized every step; the log-likelihood is the sum of
    the log normalizers.
    """
    obs = _check_obs(model, obs)
    T, n = len(obs), model.n_states
    A, B = model.transition, model.emission
    Bo = np.ascontiguousarray(B[:, obs].T)
    alpha = np.empty((T, n))
    scale = np.empty(T)
    a = model.initial * Bo[0]
    for t in range(T):
        if t:
            a = (a @ A) * Bo[t]
        c = a.sum()
        if c <= 0:
            raise ZeroProbabilityObservation(f"observation {obs[t]} at step {t} has probability 0")
        scale[t] = c
        a = a / c
        alpha[t] = a
    beta = np.empty((T, n))
    beta[-1] = 1.0
    b = beta[-1]
    for t in range(T - 2, -1, -1):
        b = A @ (Bo[t + 1] * b) / scale[t + 1]
        beta[t] = b
    gamma = alpha * beta
    gamma /= gamma.sum(axis=1, keepdims=True)
    xi = (alpha[:-1, :, None] * A[None] * (Bo[1:] * beta[1:])[:, None, :]) / scale[1:, None, None]
    return gamma, xi, float(np.log(scale).sum())


def log_likelihood(model, obs):
    return forward_backward(model, obs)[2]


def _reestimate(model, obs, gamma, xi):
    initial = gamma[0] / gamma[0].sum()
    trans = model.transition.copy()
    num = xi.sum(axis=0)
    den = num.sum(axis=1)
    ok = den > 0
    trans[ok] = num[ok] / den[ok, None]
    emit = model.emission.copy()
    counts = np.zeros_like(emit)
    np.add.at(counts.T, obs, gamma)
    occ = counts.sum(axis=1)
    ok = occ > 0
    emit[ok] = counts[ok] / occ[ok, None]
    return HmmModel(initial, trans, emit)


def baum_welch(model, obs, max_iters=100, tol=1e-6):
    """EM re-estimation; returns ``(model, log_likelihood_history)``.

    ``history[k]`` is the log-likelihood before the ``k``-th update, and the
    last entry belongs to the returned model. Iteration stops after
    ``max_iters`` updates or once an update gains less than ``tol``.
    """
    if max_iters < 1:
        raise ValidationError("max_iters must be >= 1")
    if tol <= 0:
        raise ValidationError("tol must be > 0")
    obs = _check_obs(model, obs)
    history = []
    for _ in range(max_iters):
        gamma, xi, ll = forward_backward(model, obs)
        if history and ll - history[-1] < tol:
            history.append(ll)
            return model, history
        history.append(ll)
        model = _reestimate(model, obs, gamma, xi)
    history.append(log_likelihood(model, obs))
    return model, history


class HiddenMarkovModel(BaseEstimator):
    """Estimator front-end for :func:`baum_welch` with random restarts."""

    def __init__(self, n_states=2, n_symbols=None, max_iters=200, tol=1e-6, n_init=3, random_state=0):
        self.n_states = n_states
        self.n_symbols = n_symbols
        self.max_iters = max_iters
        self.tol = tol
        self.n_init = n_init
        self.random_state = random_state

    def fit(self, X, y=None):
        obs = np.asarray(X, dtype=int).ravel()
        m = self.n_symbols if self.n_symbols is not None else int(obs.max()) + 1
        rng = check_rng(self.random_state)
        best = None
        for _ in range(self.n_init):
            model, history = baum_welch(HmmModel.random(self.n_states, m, rng), obs, self.max_iters, self.tol)
            if best is None or history[-1] > best[1][-1]:
                best = (model, history)
        self.model_, self.history_ = best
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("HiddenMarkovModel is not fitted yet")

    def score(self, X, y=None):
        self._check_fitted()
        return log_likelihood(self.model_, np.asarray(X, dtype=int).ravel())

    def predict_proba(self, X):
        self._check_fitted()
        return forward_backward(self.model_, np.asarray(X, dtype=int).ravel())[0]

    @property
    def transition_matrix_(self):
        self._check_fitted()
        return self.model_.transition

    @property
    def emission_matrix_(self):
        self._check_fitted()
        return self.model_.emission
