"""Command line pipeline: ingest, train, explain, run-all.

Output layout under ``--out``::

    data/<index>_prices.csv          price series used by every later stage
    indicators/<index>.csv           MACD and RSI after warm-up (stocks, property, interest)
    checkpoints/<agent>.ckpt         actor and critic weights
    logs/<agent>_train.csv           episode,return,affinity_loss
    trajectories/<agent>.csv         deterministic rollout of the trained policy
    traces/<agent>.csv               discretized rollout
    surrogates/<agent>.json          fitted Markov surrogate
    reports/<agent>_fidelity.csv     greedy and 20-seed sampled fidelity
    reports/<agent>_saliency.csv     fidelity drop per collapsed feature
    reports/summary.csv              one row per agent
    dot/<agent>.dot                  transition graph of the first visited states
    matrices/<agent>_agent.csv       decoded agent actions
    matrices/<agent>_surrogate.csv   decoded greedy surrogate actions

Exit codes: 0 success, 1 validation error, 2 runtime or training error,
3 invariant check failure.
"""

import argparse
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from ._validation import atomic_write_bytes, atomic_write_text
from .config import load_config
from .ddpg import actor_forward, checkpoint_bytes, load_checkpoint, train, training_log_csv
from .discretize import agent_rollout, discretize
from .env import EnvState, InvestmentEnv, MarketData, trajectory_csv
from .exceptions import AffinityXRLError, ValidationError
from .explain import (
    FIDELITY_HEADER, SAMPLE_SEEDS, export_action_matrix, export_dot, fidelity, sampled_fidelity,
    saliency_by_perturbation,
)
from .market_data import (
    compute_indicators, load_price_csv, save_indicator_csv, save_price_csv, synthetic_market,
)
from .surrogate import MarkovSurrogate

PRICE_INDICES = ("stocks", "property", "interest", "luxury")
INDICATOR_INDICES = ("stocks", "property", "interest")
SUMMARY_HEADER = "agent,lambda,visited_states,n_symbols,greedy_fidelity,sampled_mean,sampled_std,top_feature"

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_INVARIANT = 0, 1, 2, 3


class InvariantFailure(AffinityXRLError):
    pass


def _path(cfg, *parts):
    return os.path.join(cfg.out, *parts)


def _all_exist(paths):
    return all(os.path.isfile(p) for p in paths)


# ingest

def ingest_outputs(cfg):
    return ([_path(cfg, "data", f"{k}_prices.csv") for k in PRICE_INDICES]
            + [_path(cfg, "indicators", f"{k}.csv") for k in INDICATOR_INDICES])


def _source_prices(cfg):
    d = cfg.data
    if d["source"].strip() == "synth":
        return synthetic_market(int(d["synth_seed"]), int(d["months"]), d["start"].strip())
    prices = {k: load_price_csv(d[f"{k}_csv"], k) for k in INDICATOR_INDICES}
    if d["luxury_csv"].strip():
        prices["luxury"] = load_price_csv(d["luxury_csv"], "luxury")
    return prices


def cmd_ingest(cfg, force=False):
    if not force and _all_exist(ingest_outputs(cfg)):
        print("ingest: outputs exist, skipping (use --force to rebuild)")
        return
    d = cfg.data
    fast, slow, period = int(d["macd_fast"]), int(d["macd_slow"]), int(d["rsi_period"])
    prices = _source_prices(cfg)
    lux_seed, lux_drift, lux_vol = cfg.luxury
    market = MarketData.from_prices(prices, fast=fast, slow=slow, period=period,
                                    luxury_seed=lux_seed, luxury_drift=lux_drift, luxury_vol=lux_vol)
    for k in PRICE_INDICES:
        series = prices.get(k, market.prices[k])
        save_price_csv(series, _path(cfg, "data", f"{k}_prices.csv"))
    for k in INDICATOR_INDICES:
        ind = compute_indicators(prices[k], fast, slow, period)
        save_indicator_csv(ind, _path(cfg, "indicators", f"{k}.csv"))
        print(f"ingest: {k}: {len(prices[k])} months, dropped first {slow} for warm-up, "
              f"{len(ind)} remain ({ind.dates[0]}..{ind.dates[-1]})")
    first, last = market.indicators["stocks"].dates[[0, -1]]
    print(f"ingest: common window {first}..{last} ({len(market)} months)")


def load_market(cfg):
    paths = [_path(cfg, "data", f"{k}_prices.csv") for k in PRICE_INDICES]
    if not _all_exist(paths):
        raise ValidationError(f"ingested data missing under {cfg.out}/data; run 'ingest' first")
    prices = {k: load_price_csv(p, k) for k, p in zip(PRICE_INDICES, paths)}
    d = cfg.data
    return MarketData.from_prices(prices, fast=int(d["macd_fast"]), slow=int(d["macd_slow"]),
                                  period=int(d["rsi_period"]))


# train

def train_outputs(cfg, label):
    return [_path(cfg, "checkpoints", f"{label}.ckpt"), _path(cfg, "logs", f"{label}_train.csv"),
            _path(cfg, "trajectories", f"{label}.csv")]


def _train_one(cfg, proto):
    env = InvestmentEnv(cfg.env, load_market(cfg))
    bundle, log = train(env, proto.prior, proto.train, agent=proto.label)
    ckpt, log_path, traj = train_outputs(cfg, proto.label)
    atomic_write_bytes(ckpt, checkpoint_bytes(bundle, proto.train, proto.prior, proto.train.seed))
    atomic_write_text(log_path, training_log_csv(log))
    feats, acts, rewards = agent_rollout(lambda x: actor_forward(bundle, x), env)
    states = [EnvState(f, t) for t, f in enumerate(feats)]
    atomic_write_text(traj, trajectory_csv(states, acts, rewards))
    return proto.label, log[-1]["affinity_loss"] if log else float("nan")


def _map(cfg, fn, items):
    if cfg.workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(min(cfg.workers, len(items))) as pool:
            return list(pool.map(fn, [cfg] * len(items), items))
    return [fn(cfg, item) for item in items]


def cmd_train(cfg, force=False):
    load_market(cfg)
    todo = []
    for p in cfg.prototypes:
        print(f"train: {p.label}: lambda={p.train.lam:g} episodes={p.train.episodes} seed={p.train.seed}")
        if force or not _all_exist(train_outputs(cfg, p.label)):
            todo.append(p)
        else:
            print(f"train: {p.label}: checkpoint exists, skipping")
    for label, loss in _map(cfg, _train_one, todo):
        print(f"train: {label}: final affinity loss {loss:.6g}")


# explain

def explain_outputs(cfg, label):
    return [
        _path(cfg, "traces", f"{label}.csv"), _path(cfg, "surrogates", f"{label}.json"),
        _path(cfg, "reports", f"{label}_fidelity.csv"), _path(cfg, "reports", f"{label}_saliency.csv"),
        _path(cfg, "dot", f"{label}.dot"), _path(cfg, "matrices", f"{label}_agent.csv"),
        _path(cfg, "matrices", f"{label}_surrogate.csv"),
    ]


def _explain_one(cfg, proto):
    label = proto.label
    ckpt = train_outputs(cfg, label)[0]
    if not os.path.isfile(ckpt):
        raise ValidationError(f"checkpoint missing for {label}: {ckpt}; run 'train' first")
    bundle = load_checkpoint(ckpt)[0]
    env = InvestmentEnv(cfg.env, load_market(cfg))
    feats, acts, _ = agent_rollout(lambda x: actor_forward(bundle, x), env)
    trace = discretize(feats, acts, cfg.bins, label)
    sur = MarkovSurrogate(cfg.smoothing, cfg.bins).fit(trace)
    greedy = fidelity(sur, trace)
    sampled = sampled_fidelity(sur, trace, tuple(range(cfg.sample_seeds)) if cfg.sample_seeds else SAMPLE_SEEDS)
    sal = saliency_by_perturbation([(feats, acts)], cfg.bins, smoothing=cfg.smoothing, agent=label)
    paths = explain_outputs(cfg, label)
    trace.save_csv(paths[0])
    sur.save(paths[1])
    atomic_write_text(paths[2], "\n".join([FIDELITY_HEADER, greedy.csv_row(label), sampled.csv_row(label)]) + "\n")
    atomic_write_text(paths[3], sal.to_csv())
    atomic_write_text(paths[4], export_dot(sur, cfg.dot_states, cfg.min_prob, label))
    atomic_write_text(paths[5], export_action_matrix(trace))
    atomic_write_text(paths[6], export_action_matrix(sur.rollout("greedy")))
    return (f"{label},{proto.train.lam:g},{len(sur.state_codes_)},{len(sur.symbols_)},"
            f"{greedy.exact_match:.6f},{sampled.exact_match:.6f},{sampled.exact_match_std:.6f},{sal.top_feature or 'none'}")


def cmd_explain(cfg, force=False):
    todo = [p for p in cfg.prototypes if force or not _all_exist(explain_outputs(cfg, p.label))]
    for p in cfg.prototypes:
        if p not in todo:
            print(f"explain: {p.label}: outputs exist, skipping")
    rows = dict(zip([p.label for p in todo], _map(cfg, _explain_one, todo)))
    summary_path = _path(cfg, "reports", "summary.csv")
    if os.path.isfile(summary_path):
        with open(summary_path) as fh:
            for line in fh.read().splitlines()[1:]:
                rows.setdefault(line.split(",", 1)[0], line)
    missing = [label for label in cfg.labels if label not in rows]
    if missing:
        raise ValidationError(f"summary rows missing for {missing}; rerun explain with --force")
    atomic_write_text(summary_path, "\n".join([SUMMARY_HEADER] + [rows[label] for label in cfg.labels]) + "\n")
    for label in cfg.labels:
        cells = rows[label].split(",")
        print(f"explain: {label}: visited {cells[2]}/{cfg.bins.n_states} states, {cells[3]} symbols, "
              f"greedy fidelity {float(cells[4]):.3f}, sampled {float(cells[5]):.3f} +/- {float(cells[6]):.3f}, "
              f"most salient {cells[7]}")
    check_invariants(cfg)


_EDGE = re.compile(r'^\s*s(\d+) -> s(\d+) \[label="[0-9.]+", prob="([0-9.e-]+)"\];$')
_NODE = re.compile(r'^\s*s(\d+) \[label=')


def check_invariants(cfg):
    """Re-read the explain outputs and check the structural guarantees."""
    problems = []
    for label in cfg.labels:
        sur = MarkovSurrogate.load(_path(cfg, "surrogates", f"{label}.json"))
        for name, M in (("F", sur.transition_matrix_), ("E", sur.emission_matrix_)):
            if np.any(M < 0) or np.max(np.abs(M.sum(axis=1) - 1.0)) > 1e-9:
                problems.append(f"{label}: {name} is not row-stochastic")
        if len(sur.state_codes_) > cfg.bins.n_states:
            problems.append(f"{label}: more visited states than the state space holds")
        with open(_path(cfg, "dot", f"{label}.dot")) as fh:
            lines = fh.read().splitlines()
        if not lines or not lines[0].startswith("digraph") or lines[-1] != "}":
            problems.append(f"{label}: DOT file is malformed")
        nodes = {m.group(1) for m in map(_NODE.match, lines) if m}
        if len(nodes) > cfg.dot_states:
            problems.append(f"{label}: DOT has {len(nodes)} nodes")
        out = {}
        for m in filter(None, map(_EDGE.match, lines)):
            if m.group(1) not in nodes or m.group(2) not in nodes:
                problems.append(f"{label}: DOT edge to an undeclared node")
            out[m.group(1)] = out.get(m.group(1), 0.0) + float(m.group(3))
        if out and max(out.values()) > 1.0 + 1e-6:
            problems.append(f"{label}: DOT out-edge probabilities exceed 1")
        with open(_path(cfg, "reports", f"{label}_fidelity.csv")) as fh:
            rows = [r.split(",") for r in fh.read().splitlines()[1:]]
        for r in rows:
            exact, comps = float(r[3]), [float(x) for x in r[5:]]
            if not 0.0 <= exact <= min(comps) + 1e-12:
                problems.append(f"{label}: exact match above a component match")
    if problems:
        raise InvariantFailure("; ".join(problems))
    print(f"invariants: all checks passed for {len(cfg.labels)} agents")


def cmd_run_all(cfg, force=False):
    cmd_ingest(cfg, force)
    cmd_train(cfg, force)
    cmd_explain(cfg, force)


COMMANDS = {"ingest": cmd_ingest, "train": cmd_train, "explain": cmd_explain, "run-all": cmd_run_all}


def build_parser():
    parser = argparse.ArgumentParser(prog="affinity-xrl", description=__doc__.split("\n")[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file (defaults apply when omitted)")
    common.add_argument("--force", action="store_true", help="rebuild outputs that already exist")
    common.add_argument("--workers", type=int, help="agents processed in parallel")
    common.add_argument("--seed", type=int, help="global seed, overrides run.seed")
    common.add_argument("--out", help="output directory, overrides run.out")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed=args.seed, out=args.out, workers=args.workers)
    except (AffinityXRLError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        COMMANDS[args.command](cfg, args.force)
    except InvariantFailure as exc:
        print(f"invariant check failed: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (AffinityXRLError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
