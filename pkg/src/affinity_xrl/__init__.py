"""Affinity-regularized DDPG investment agents and Markov-surrogate explanations."""

from .ddpg import DEFAULT_PRIORS, PROTOTYPES, AffinityDDPG, AffinityPrior, TrainConfig, train
from .discretize import BinSpec, DiscreteTrace, StateDiscretizer, discretize, enumerate_states
from .env import EnvConfig, InvestmentEnv, MarketData
from .explain import export_action_matrix, export_dot, fidelity, sampled_fidelity, saliency_by_perturbation
from .hmm import HiddenMarkovModel, HmmModel, baum_welch, forward_backward
from .market_data import compute_indicators, load_price_csv, macd, rsi, synthetic_market
from .surrogate import MarkovSurrogate

__version__ = "0.1.0"

__all__ = [
    "AffinityDDPG", "AffinityPrior", "BinSpec", "DEFAULT_PRIORS", "DiscreteTrace", "EnvConfig",
    "HiddenMarkovModel", "HmmModel", "InvestmentEnv", "MarketData", "MarkovSurrogate", "PROTOTYPES",
    "StateDiscretizer", "TrainConfig", "baum_welch", "compute_indicators", "discretize",
    "enumerate_states", "export_action_matrix", "export_dot", "fidelity", "forward_backward",
    "load_price_csv", "macd", "rsi", "saliency_by_perturbation", "sampled_fidelity",
    "synthetic_market", "train",
]
