"""Count-fitted Markov surrogate of a discretized policy.

The surrogate holds a transition matrix ``F`` over the visited state codes and
an emission matrix ``E`` from states to observed action symbols. Dense indices
follow order of first visit, so the initial state is always index 0.
"""

import json

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._validation import atomic_write_text, check_rng
from .discretize import BinSpec, DiscreteTrace, maturity_bin_at
from .exceptions import HorizonMismatch, TraceTooShort, ValidationError

FILE_FORMAT = "affinity-xrl-surrogate"
FILE_VERSION = 1


def _as_traces(traces):
    if isinstance(traces, DiscreteTrace):
        return [traces]
    traces = list(traces)
    if not traces:
        raise TraceTooShort("no traces given")
    return traces


def _registry(sequences):
    """Map values to dense indices by earliest month of appearance, then value.

    For a single sequence this is plain order of first visit; for several it
    does not depend on the order the sequences are given in.
    """
    first = {}
    for seq in sequences:
        for t, v in enumerate(seq):
            v = int(v)
            if v not in first or t < first[v]:
                first[v] = t
    ordered = sorted(first, key=lambda v: (first[v], v))
    return {v: i for i, v in enumerate(ordered)}


def _normalize_rows(counts, smoothing, self_loop):
    n_cols = counts.shape[1]
    totals = counts.sum(axis=1)
    out = (counts + smoothing) / (totals + n_cols * smoothing)[:, None] if smoothing else np.zeros_like(counts)
    if not smoothing:
        nz = totals > 0
        out[nz] = counts[nz] / totals[nz, None]
    empty = totals == 0
    if self_loop and np.any(empty):
        out[empty] = 0.0
        out[empty, np.flatnonzero(empty)] = 1.0
    return out


class MarkovSurrogate(BaseEstimator):
    """Global surrogate fitted by counting state transitions and state-action pairs.

    Parameters
    ----------
    smoothing : float
        Additive pseudo-count ``eps`` for every row entry of ``F`` and ``E``.
    spec : BinSpec
        Discretization the traces were produced with.
    respect_maturity : bool
        During rollout, only move to states whose maturity bin matches the
        month being predicted. Maturity is a deterministic clock, so this keeps
        an open-loop rollout from stalling in a state's self-loop.
    """

    def __init__(self, smoothing=0.0, spec=BinSpec(), respect_maturity=True):
        self.smoothing = smoothing
        self.spec = spec
        self.respect_maturity = respect_maturity

    def fit(self, traces, y=None):
        traces = _as_traces(traces)
        if self.smoothing < 0:
            raise ValidationError("smoothing must be >= 0")
        for tr in traces:
            if len(tr) < 2:
                raise TraceTooShort(f"trace of length {len(tr)} cannot be fitted")
        states = _registry(tr.state_codes for tr in traces)
        symbols = _registry(tr.action_ids for tr in traces)
        n, m = len(states), len(symbols)
        trans = np.zeros((n, n))
        emit = np.zeros((n, m))
        visits = np.zeros(n, dtype=int)
        for tr in traces:
            s = np.array([states[int(c)] for c in tr.state_codes])
            a = np.array([symbols[int(c)] for c in tr.action_ids])
            np.add.at(trans, (s[:-1], s[1:]), 1.0)
            np.add.at(emit, (s, a), 1.0)
            np.add.at(visits, s, 1)
        self.state_codes_ = np.array(list(states), dtype=int)
        self.symbols_ = np.array(list(symbols), dtype=int)
        self.visit_counts_ = visits
        self.transition_counts_ = trans
        self.emission_counts_ = emit
        self.transition_matrix_ = _normalize_rows(trans, self.smoothing, self_loop=True)
        self.emission_matrix_ = _normalize_rows(emit, self.smoothing, self_loop=False)
        starts, counts = np.unique([tr.state_codes[0] for tr in traces], return_counts=True)
        self.initial_state_ = int(starts[np.argmax(counts)])
        lengths = {len(tr) for tr in traces}
        if len(lengths) != 1:
            raise HorizonMismatch(f"pooled traces differ in length: {sorted(lengths)}")
        self.horizon_ = lengths.pop()
        return self

    def _check_fitted(self):
        if not hasattr(self, "transition_matrix_"):
            raise NotFittedError("MarkovSurrogate is not fitted yet")

    @property
    def n_states_(self):
        return len(self.state_codes_)

    def state_index(self, code):
        hits = np.flatnonzero(self.state_codes_ == code)
        if not hits.size:
            raise ValidationError(f"state code {code} was never visited")
        return int(hits[0])

    def _state_bins(self):
        s, c = self.spec, self.state_codes_
        return np.column_stack([c % s.n_macd, (c // s.n_macd) % s.n_rsi, c // (s.n_macd * s.n_rsi)])

    def _next_state(self, i, t_next, horizon, bins, greedy, rng):
        row = self.transition_matrix_[i]
        cand = np.arange(self.n_states_)
        if self.respect_maturity:
            m = maturity_bin_at(t_next, horizon, self.spec)
            on_clock = np.flatnonzero(bins[:, 2] == m)
            if on_clock.size:
                cand = on_clock
        p = row[cand]
        total = p.sum()
        if total <= 0:
            # no observed move into this month's bin: nearest (macd, rsi) neighbour
            dist = np.abs(bins[cand, :2] - bins[i, :2]).sum(axis=1)
            return int(cand[np.argmin(dist)])
        if greedy:
            return int(cand[np.argmax(p)])
        return int(cand[rng.choice(cand.size, p=p / total)])

    def rollout(self, mode="greedy", seed=None, horizon=None, initial_state=None):
        """Open-loop rollout from the initial state; returns a :class:`DiscreteTrace`.

        Greedy mode takes the most likely successor and symbol at every month
        (ties go to the lowest dense index); ``"sample"`` draws both from the
        fitted rows with a generator seeded by ``seed``.
        """
        self._check_fitted()
        if mode not in ("greedy", "sample"):
            raise ValidationError(f"unknown rollout mode {mode!r}")
        greedy = mode == "greedy"
        rng = check_rng(seed)
        horizon = self.horizon_ if horizon is None else int(horizon)
        i = self.state_index(self.initial_state_ if initial_state is None else initial_state)
        bins = self._state_bins()
        states = np.empty(horizon, dtype=int)
        actions = np.empty(horizon, dtype=int)
        E = self.emission_matrix_
        for t in range(horizon):
            states[t] = i
            actions[t] = np.argmax(E[i]) if greedy else rng.choice(E.shape[1], p=E[i])
            if t + 1 < horizon:
                i = self._next_state(i, t + 1, horizon, bins, greedy, rng)
        return DiscreteTrace(self.state_codes_[states], self.symbols_[actions], self.spec, "surrogate")

    def predict(self, horizon=None, mode="greedy", seed=None):
        """Action symbols of a rollout (the sklearn-style view of :meth:`rollout`)."""
        return self.rollout(mode, seed, horizon).action_ids

    def score(self, trace, y=None):
        """Greedy exact-match fidelity against ``trace``."""
        if len(trace) != self.horizon_:
            raise HorizonMismatch(f"trace has {len(trace)} months, surrogate horizon is {self.horizon_}")
        return float(np.mean(self.predict(len(trace)) == trace.action_ids))

    # serialization
    def to_text(self):
        self._check_fitted()

        def rows(M):
            return [[float(f"{x:.12g}") for x in row] for row in M]

        doc = {
            "format": FILE_FORMAT,
            "version": FILE_VERSION,
            "spec": {
                "rsi_edges": list(self.spec.rsi_edges),
                "macd_edges": list(self.spec.macd_edges),
                "maturity_bins": self.spec.maturity_bins,
                "action_bins": self.spec.action_bins,
                "macd_feature": self.spec.macd_feature,
                "rsi_feature": self.spec.rsi_feature,
            },
            "smoothing": self.smoothing,
            "respect_maturity": self.respect_maturity,
            "initial_state": self.initial_state_,
            "horizon": self.horizon_,
            "state_codes": self.state_codes_.tolist(),
            "visit_counts": self.visit_counts_.tolist(),
            "symbols": self.symbols_.tolist(),
            "transition_matrix": rows(self.transition_matrix_),
            "emission_matrix": rows(self.emission_matrix_),
        }
        return json.dumps(doc, indent=1) + "\n"

    @classmethod
    def from_text(cls, text):
        doc = json.loads(text)
        if doc.get("format") != FILE_FORMAT or doc.get("version") != FILE_VERSION:
            raise ValidationError("not a surrogate file of a supported version")
        sur = cls(doc["smoothing"], BinSpec(**doc["spec"]), doc["respect_maturity"])
        sur.state_codes_ = np.array(doc["state_codes"], dtype=int)
        sur.visit_counts_ = np.array(doc["visit_counts"], dtype=int)
        sur.symbols_ = np.array(doc["symbols"], dtype=int)
        n, m = len(sur.state_codes_), len(sur.symbols_)
        sur.transition_matrix_ = np.array(doc["transition_matrix"], dtype=float).reshape(n, n)
        sur.emission_matrix_ = np.array(doc["emission_matrix"], dtype=float).reshape(n, m)
        sur.initial_state_ = int(doc["initial_state"])
        sur.horizon_ = int(doc["horizon"])
        sur.state_index(sur.initial_state_)
        return sur

    def save(self, path):
        atomic_write_text(path, self.to_text())

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_text(fh.read())


def fit_counts(traces, smoothing=0.0, respect_maturity=True):
    traces = _as_traces(traces)
    return MarkovSurrogate(smoothing, traces[0].spec, respect_maturity).fit(traces)
