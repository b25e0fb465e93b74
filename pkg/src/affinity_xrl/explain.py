"""Fidelity, bin-perturbation saliency and graph/matrix exports for surrogates."""

import io
from dataclasses import dataclass, field

import numpy as np

from .discretize import STATE_FEATURES, BinSpec, DiscreteTrace, decode_state, discretize
from .env import ASSET_CLASSES
from .exceptions import HorizonMismatch, ValidationError
from .surrogate import MarkovSurrogate

SAMPLE_SEEDS = tuple(range(20))


@dataclass
class FidelityReport:
    exact_match: float
    component_match: np.ndarray
    mask: np.ndarray
    mode: str = "greedy"
    seed: int = None
    exact_match_std: float = 0.0

    def csv_row(self, agent="agent"):
        cells = [agent, self.mode, "" if self.seed is None else str(self.seed),
                 f"{self.exact_match:.6f}", f"{self.exact_match_std:.6f}"]
        cells += [f"{x:.6f}" for x in self.component_match]
        return ",".join(cells)


FIDELITY_HEADER = "agent,mode,seed,exact_match,exact_match_std," + ",".join(f"match_{c}" for c in ASSET_CLASSES)


def _compare(rollout, trace):
    mask = rollout.action_ids == trace.action_ids
    comp = (rollout.action_bins() == trace.action_bins()).mean(axis=0)
    return mask, comp


def fidelity(surrogate, agent_trace, mode="greedy", seed=None):
    """Open-loop agreement between a surrogate rollout and the agent's trace."""
    if surrogate.horizon_ != len(agent_trace):
        raise HorizonMismatch(f"surrogate horizon {surrogate.horizon_} != trace length {len(agent_trace)}")
    rollout = surrogate.rollout(mode, seed)
    mask, comp = _compare(rollout, agent_trace)
    return FidelityReport(float(mask.mean()), comp, mask, mode, seed if mode == "sample" else None)


def sampled_fidelity(surrogate, agent_trace, seeds=SAMPLE_SEEDS):
    """Sample-mode fidelity averaged over ``seeds``; ``mask`` is the per-month match rate."""
    reports = [fidelity(surrogate, agent_trace, "sample", s) for s in seeds]
    rates = np.array([r.exact_match for r in reports])
    return FidelityReport(
        float(rates.mean()),
        np.mean([r.component_match for r in reports], axis=0),
        np.mean([r.mask for r in reports], axis=0),
        "sample", None, float(rates.std()),
    )


def _mean_fidelity(surrogate, traces, mode, seeds):
    if mode == "greedy":
        return float(np.mean([fidelity(surrogate, tr).exact_match for tr in traces]))
    return float(np.mean([sampled_fidelity(surrogate, tr, seeds).exact_match for tr in traces]))


def _fit_and_score(rollouts, spec, mode, seeds, smoothing, agent):
    traces = [discretize(f, a, spec, agent) for f, a in rollouts]
    sur = MarkovSurrogate(smoothing, spec).fit(traces)
    return _mean_fidelity(sur, traces, mode, seeds), sur


@dataclass
class SaliencyReport:
    baseline: float
    collapsed: dict
    drops: dict
    ranking: list
    mode: str = "greedy"
    sweep: dict = field(default_factory=dict)

    @property
    def top_feature(self):
        """First-ranked feature, or None when no collapse lowers fidelity."""
        return self.ranking[0] if self.drops[self.ranking[0]] > 0 else None

    def to_csv(self):
        lines = ["feature,baseline,collapsed,drop,rank"]
        for rank, f in enumerate(self.ranking, start=1):
            lines.append(f"{f},{self.baseline:.6f},{self.collapsed[f]:.6f},{self.drops[f]:.6f},{rank}")
        return "\n".join(lines) + "\n"


def saliency_by_perturbation(rollouts, base_spec=BinSpec(), mode="greedy", seeds=SAMPLE_SEEDS,
                             smoothing=0.0, agent="agent", sweep=None):
    """Fidelity drop when each state feature is collapsed to a single bin.

    ``rollouts`` is a list of ``(features (T, 7), actions (T, 5))`` pairs from
    one agent; all are pooled into one surrogate per discretization. Ties in the
    ranking keep the order macd, rsi, maturity. ``sweep`` optionally maps a
    feature to a list of bin counts to evaluate as well.
    """
    if not rollouts:
        raise ValidationError("saliency needs at least one rollout")
    base, _ = _fit_and_score(rollouts, base_spec, mode, seeds, smoothing, agent)
    collapsed, drops = {}, {}
    for f in STATE_FEATURES:
        collapsed[f], _ = _fit_and_score(rollouts, base_spec.collapse(f), mode, seeds, smoothing, agent)
        drops[f] = base - collapsed[f]
    ranking = sorted(STATE_FEATURES, key=lambda f: -drops[f])
    results = {}
    for f, counts in (sweep or {}).items():
        results[f] = {n: _fit_and_score(rollouts, base_spec.with_bins(f, n), mode, seeds, smoothing, agent)[0]
                      for n in counts}
    return SaliencyReport(base, collapsed, drops, ranking, mode, results)


def _state_label(code, spec):
    s = decode_state(int(code), spec)
    return f"({s.macd_bin},{s.rsi_bin},{s.maturity_bin})"


def export_dot(surrogate, max_states=16, min_prob=0.0, name="surrogate"):
    """Graphviz text for the first ``max_states`` visited states and the moves among them.

    Nodes are labelled ``(macd_bin,rsi_bin,maturity_bin)``; edges below
    ``min_prob`` or leaving the subset are left out. Edge labels show two
    decimals and the ``prob`` attribute keeps the unrounded value.
    """
    if max_states < 1:
        raise ValidationError("max_states must be >= 1")
    if not 0.0 <= min_prob < 1.0:
        raise ValidationError("min_prob must lie in [0, 1)")
    k = min(max_states, surrogate.n_states_)
    F = surrogate.transition_matrix_
    lines = [f'digraph "{name}" {{', "  rankdir=LR;", '  node [shape=circle, style=filled, fillcolor="lightblue"];']
    for i in range(k):
        code = surrogate.state_codes_[i]
        lines.append(f'  s{code} [label="{_state_label(code, surrogate.spec)}"];')
    for i in range(k):
        for j in range(k):
            p = F[i, j]
            if p > 0 and p >= min_prob:
                lines.append(f'  s{surrogate.state_codes_[i]} -> s{surrogate.state_codes_[j]} '
                             f'[label="{p:.2f}", prob="{p:.12g}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_action_matrix(trace):
    """CSV of decoded allocations, one row per month, one column per asset class."""
    if not isinstance(trace, DiscreteTrace):
        raise ValidationError("export_action_matrix expects a DiscreteTrace")
    buf = io.StringIO()
    buf.write(",".join(ASSET_CLASSES) + "\n")
    for row in trace.decoded_actions():
        buf.write(",".join(f"{x:.6f}" for x in row) + "\n")
    return buf.getvalue()
