"""Binning of continuous states and allocations into Markov-model symbols.

State codes are mixed-radix over ``(macd_bin, rsi_bin, maturity_bin)`` with the
MACD bin varying fastest; action symbols are base-``action_bins`` numbers over
the five per-class weight bins, class 0 being the least significant digit.
"""

import io
import itertools
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import atomic_write_text, check_2d
from .env import FEATURE_NAMES, N_ASSETS
from .exceptions import InvalidSymbol, ParseError, ValidationError

STATE_FEATURES = ("macd", "rsi", "maturity")


def bin_value(x, edges, domain=(-np.inf, np.inf)):
    """Index of the half-open bin ``[e_k, e_k+1)`` holding ``x`` after clamping to ``domain``.

    The top bin is closed, so ``x == domain[1]`` lands in the last bin. Works on
    scalars and arrays.
    """
    lo, hi = domain
    if lo > hi:
        raise ValidationError("domain lower bound exceeds upper bound")
    x = np.clip(np.asarray(x, dtype=float), lo, hi)
    idx = np.searchsorted(np.asarray(edges, dtype=float), x, side="right")
    return int(idx) if idx.ndim == 0 else idx


def equal_edges(n_bins):
    """Interior edges of ``n_bins`` equal-width bins on [0, 1] (exactly ``k / n_bins``)."""
    return tuple(k / n_bins for k in range(1, n_bins))


@dataclass(frozen=True)
class BinSpec:
    rsi_edges: tuple = (0.3, 0.7)
    macd_edges: tuple = (0.0,)
    maturity_bins: int = 28
    action_bins: int = 5
    macd_feature: str = "macd_p"
    rsi_feature: str = "rsi_s"

    def __post_init__(self):
        object.__setattr__(self, "rsi_edges", tuple(float(e) for e in self.rsi_edges))
        object.__setattr__(self, "macd_edges", tuple(float(e) for e in self.macd_edges))
        for name, edges in (("rsi_edges", self.rsi_edges), ("macd_edges", self.macd_edges)):
            if any(b <= a for a, b in zip(edges, edges[1:])):
                raise ValidationError(f"{name} must be strictly increasing")
        if any(not 0 < e < 1 for e in self.rsi_edges):
            raise ValidationError("rsi_edges must lie inside (0, 1)")
        if self.maturity_bins < 1 or self.action_bins < 1:
            raise ValidationError("bin counts must be >= 1")
        for name in (self.macd_feature, self.rsi_feature):
            if name not in FEATURE_NAMES:
                raise ValidationError(f"unknown state feature {name!r}")

    @property
    def n_macd(self):
        return len(self.macd_edges) + 1

    @property
    def n_rsi(self):
        return len(self.rsi_edges) + 1

    @property
    def n_states(self):
        return self.n_macd * self.n_rsi * self.maturity_bins

    @property
    def n_symbols(self):
        return self.action_bins ** N_ASSETS

    @property
    def maturity_edges(self):
        return equal_edges(self.maturity_bins)

    @property
    def action_edges(self):
        return equal_edges(self.action_bins)

    def collapse(self, feature):
        """The same spec with ``feature`` reduced to a single bin."""
        if feature == "macd":
            return replace(self, macd_edges=())
        if feature == "rsi":
            return replace(self, rsi_edges=())
        if feature == "maturity":
            return replace(self, maturity_bins=1)
        raise ValidationError(f"unknown state feature {feature!r}")

    def with_bins(self, feature, n_bins):
        """The same spec with ``feature`` split into ``n_bins`` equal-width bins.

        MACD has no bounded range, so only 1 (collapsed) or 2 (sign) bins are allowed.
        """
        if feature == "maturity":
            return replace(self, maturity_bins=n_bins)
        if feature == "rsi":
            return replace(self, rsi_edges=equal_edges(n_bins))
        if feature == "macd":
            if n_bins not in (1, 2):
                raise ValidationError("macd supports 1 or 2 bins")
            return replace(self, macd_edges=() if n_bins == 1 else (0.0,))
        raise ValidationError(f"unknown state feature {feature!r}")


@dataclass(frozen=True)
class DiscreteState:
    macd_bin: int
    rsi_bin: int
    maturity_bin: int
    code: int


@dataclass(frozen=True)
class ActionSymbol:
    bins: tuple
    id: int


def state_code(macd_bin, rsi_bin, maturity_bin, spec):
    return (maturity_bin * spec.n_rsi + rsi_bin) * spec.n_macd + macd_bin


def decode_state(code, spec):
    if not 0 <= code < spec.n_states:
        raise InvalidSymbol(f"state code {code} outside 0..{spec.n_states - 1}")
    code = int(code)
    macd_bin = code % spec.n_macd
    rsi_bin = (code // spec.n_macd) % spec.n_rsi
    maturity_bin = code // (spec.n_macd * spec.n_rsi)
    return DiscreteState(macd_bin, rsi_bin, maturity_bin, code)


def enumerate_states(spec=BinSpec()):
    """Every potential state of ``spec``, in code order."""
    out = []
    for m, r, d in itertools.product(range(spec.maturity_bins), range(spec.n_rsi), range(spec.n_macd)):
        out.append(DiscreteState(d, r, m, state_code(d, r, m, spec)))
    return out


def state_bins(features, spec):
    """``(n, 3)`` integer array of (macd, rsi, maturity) bins for a feature matrix."""
    X = check_2d(features, len(FEATURE_NAMES), "features")
    macd = bin_value(X[:, FEATURE_NAMES.index(spec.macd_feature)], spec.macd_edges)
    rsi = bin_value(X[:, FEATURE_NAMES.index(spec.rsi_feature)], spec.rsi_edges, (0.0, 1.0))
    maturity = bin_value(X[:, FEATURE_NAMES.index("maturity")], spec.maturity_edges, (0.0, 1.0))
    return np.column_stack([macd, rsi, maturity]).astype(int)


def encode_state(features, spec=BinSpec()):
    b = state_bins(features, spec)[0]
    return DiscreteState(int(b[0]), int(b[1]), int(b[2]), int(state_code(b[0], b[1], b[2], spec)))


def maturity_bin_at(t, horizon, spec):
    """Maturity bin of month ``t`` in an episode of ``horizon`` months."""
    maturity = 1.0 if t >= horizon - 1 else t / (horizon - 1)
    return bin_value(maturity, spec.maturity_edges, (0.0, 1.0))


def action_symbol_id(bins, spec):
    return int(sum(int(b) * spec.action_bins ** j for j, b in enumerate(bins)))


def symbol_bins(symbol_id, spec):
    if not 0 <= symbol_id < spec.n_symbols:
        raise InvalidSymbol(f"action symbol {symbol_id} outside 0..{spec.n_symbols - 1}")
    out, rest = [], int(symbol_id)
    for _ in range(N_ASSETS):
        out.append(rest % spec.action_bins)
        rest //= spec.action_bins
    return tuple(out)


def encode_action(action, spec=BinSpec()):
    a = np.asarray(action, dtype=float)
    if a.shape != (N_ASSETS,):
        raise ValidationError(f"an action has {N_ASSETS} weights, got shape {a.shape}")
    bins = tuple(int(b) for b in bin_value(a, spec.action_edges, (0.0, 1.0)))
    return ActionSymbol(bins, action_symbol_id(bins, spec))


def encode_actions(actions, spec=BinSpec()):
    """Vectorized :func:`encode_action`; returns ``(bins (n, 5), ids (n,))``."""
    A = check_2d(actions, N_ASSETS, "actions")
    bins = bin_value(A, spec.action_edges, (0.0, 1.0)).astype(int)
    ids = (bins * spec.action_bins ** np.arange(N_ASSETS)).sum(axis=1)
    return bins, ids


def decode_action(symbol, spec=BinSpec()):
    """Bin midpoints of ``symbol`` renormalized onto the simplex."""
    if isinstance(symbol, ActionSymbol):
        bins = symbol.bins
        if action_symbol_id(bins, spec) != symbol.id:
            raise InvalidSymbol(f"symbol id {symbol.id} disagrees with bins {bins}")
    else:
        bins = symbol_bins(int(symbol), spec)
    if any(not 0 <= b < spec.action_bins for b in bins):
        raise InvalidSymbol(f"bins {bins} outside 0..{spec.action_bins - 1}")
    # midpoints are (2b + 1) / (2n); dividing the odd integers once keeps 3/15 == 0.2 exact
    odd = 2 * np.asarray(bins, dtype=float) + 1
    return odd / odd.sum()


@dataclass
class DiscreteTrace:
    """Per-month state codes and action symbols of one agent."""

    state_codes: np.ndarray
    action_ids: np.ndarray
    spec: BinSpec = field(default_factory=BinSpec)
    agent: str = "agent"

    def __post_init__(self):
        self.state_codes = np.asarray(self.state_codes, dtype=int)
        self.action_ids = np.asarray(self.action_ids, dtype=int)
        if self.state_codes.shape != self.action_ids.shape or self.state_codes.ndim != 1:
            raise ValidationError("state and action sequences must be 1-d and equally long")
        if len(self) and (self.state_codes.min() < 0 or self.state_codes.max() >= self.spec.n_states):
            raise InvalidSymbol("state code outside the spec's range")
        if len(self) and (self.action_ids.min() < 0 or self.action_ids.max() >= self.spec.n_symbols):
            raise InvalidSymbol("action symbol outside the spec's range")

    def __len__(self):
        return len(self.state_codes)

    def state_bins(self):
        """``(n, 3)`` array of (macd, rsi, maturity) bins."""
        s = self.spec
        c = self.state_codes
        return np.column_stack([c % s.n_macd, (c // s.n_macd) % s.n_rsi, c // (s.n_macd * s.n_rsi)])

    def action_bins(self):
        return np.array([symbol_bins(i, self.spec) for i in self.action_ids], dtype=int).reshape(-1, N_ASSETS)

    def visited_states(self):
        return np.unique(self.state_codes)

    def decoded_actions(self):
        return np.array([decode_action(i, self.spec) for i in self.action_ids]).reshape(-1, N_ASSETS)

    def to_csv(self):
        buf = io.StringIO()
        buf.write("t,state_code,macd_bin,rsi_bin,maturity_bin,action_id,b0,b1,b2,b3,b4\n")
        for t, (code, sb, aid, ab) in enumerate(zip(self.state_codes, self.state_bins(),
                                                     self.action_ids, self.action_bins())):
            row = [t, code, *sb, aid, *ab]
            buf.write(",".join(str(int(x)) for x in row) + "\n")
        return buf.getvalue()

    def save_csv(self, path):
        atomic_write_text(path, self.to_csv())

    @classmethod
    def from_csv(cls, text, spec=BinSpec(), agent="agent"):
        lines = text.strip().splitlines()
        if not lines or lines[0] != "t,state_code,macd_bin,rsi_bin,maturity_bin,action_id,b0,b1,b2,b3,b4":
            raise ParseError(1, "unexpected trace header")
        codes, ids = [], []
        for lineno, line in enumerate(lines[1:], start=2):
            cells = line.split(",")
            if len(cells) != 11:
                raise ParseError(lineno, "expected 11 columns")
            codes.append(int(cells[1]))
            ids.append(int(cells[5]))
        return cls(np.array(codes), np.array(ids), spec, agent)

    @classmethod
    def load_csv(cls, path, spec=BinSpec(), agent="agent"):
        with open(path) as fh:
            return cls.from_csv(fh.read(), spec, agent)


def discretize(features, actions, spec=BinSpec(), agent="agent"):
    """Trace from aligned continuous features ``(n, 7)`` and allocations ``(n, 5)``."""
    b = state_bins(features, spec)
    codes = state_code(b[:, 0], b[:, 1], b[:, 2], spec)
    _, ids = encode_actions(actions, spec)
    if len(ids) != len(codes):
        raise ValidationError("features and actions differ in length")
    return DiscreteTrace(codes, ids, spec, agent)


def agent_rollout(policy, env):
    """Run ``policy`` deterministically over a full episode.

    Returns ``(features (T, 7), actions (T, 5), rewards (T-1,))``; the final
    month's action is the policy's output there even though no step follows it.
    """
    state = env.reset()
    feats, acts, rewards = [], [], []
    done = False
    while True:
        a = np.asarray(policy(state.features), dtype=float)
        feats.append(state.features)
        acts.append(a)
        if done:
            break
        state, r, done = env.step(a)
        rewards.append(r)
    return np.array(feats), np.array(acts), np.array(rewards)


def discretize_trace(policy, env, spec=BinSpec(), agent="agent"):
    """Deterministic rollout of ``policy`` binned into a :class:`DiscreteTrace`."""
    feats, acts, _ = agent_rollout(policy, env)
    return discretize(feats, acts, spec, agent)


class StateDiscretizer(TransformerMixin, BaseEstimator):
    """Transformer from continuous state features to state codes.

    ``fit`` only validates the bin configuration and records which codes occur
    in the data; ``transform`` maps ``(n, 7)`` features to an ``(n,)`` code array.
    """

    def __init__(self, rsi_edges=(0.3, 0.7), macd_edges=(0.0,), maturity_bins=28,
                 action_bins=5, macd_feature="macd_p", rsi_feature="rsi_s"):
        self.rsi_edges = rsi_edges
        self.macd_edges = macd_edges
        self.maturity_bins = maturity_bins
        self.action_bins = action_bins
        self.macd_feature = macd_feature
        self.rsi_feature = rsi_feature

    @classmethod
    def from_spec(cls, spec):
        return cls(spec.rsi_edges, spec.macd_edges, spec.maturity_bins, spec.action_bins,
                   spec.macd_feature, spec.rsi_feature)

    def fit(self, X, y=None):
        self.spec_ = BinSpec(self.rsi_edges, self.macd_edges, self.maturity_bins,
                             self.action_bins, self.macd_feature, self.rsi_feature)
        X = check_2d(X, len(FEATURE_NAMES))
        self.n_features_in_ = X.shape[1]
        self.visited_codes_ = np.unique(self._codes(X))
        return self

    def _codes(self, X):
        b = state_bins(X, self.spec_)
        return state_code(b[:, 0], b[:, 1], b[:, 2], self.spec_)

    def transform(self, X):
        if not hasattr(self, "spec_"):
            from sklearn.exceptions import NotFittedError
            raise NotFittedError("StateDiscretizer is not fitted yet")
        return self._codes(check_2d(X, self.n_features_in_))

    def inverse_transform(self, codes):
        return np.array([[s.macd_bin, s.rsi_bin, s.maturity_bin]
                         for s in (decode_state(int(c), self.spec_) for c in codes)], dtype=int)
