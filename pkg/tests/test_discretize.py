import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affinity_xrl.discretize import (
    BinSpec, DiscreteTrace, StateDiscretizer, agent_rollout, bin_value, decode_action,
    decode_state, discretize, discretize_trace, encode_action, encode_actions, encode_state,
    enumerate_states, equal_edges, maturity_bin_at, state_code, symbol_bins,
)
from affinity_xrl.env import EnvConfig, InvestmentEnv, MarketData
from affinity_xrl.exceptions import InvalidSymbol, ParseError, ValidationError
from affinity_xrl.market_data import synthetic_market

SPEC = BinSpec()


@pytest.fixture(scope="module")
def env():
    return InvestmentEnv(EnvConfig(), MarketData.from_prices(synthetic_market(0)))


def _features(macd=0.0, rsi=0.5, maturity=0.0):
    f = np.zeros(7)
    f[2], f[1], f[6] = macd, rsi, maturity
    return f


def test_bin_value_examples():
    assert bin_value(0.5, (0.3, 0.7), (0, 1)) == 1
    assert bin_value(-0.2, (0.0,)) == 0
    assert bin_value(1.0, equal_edges(5), (0, 1)) == 4
    assert bin_value(0.2, equal_edges(5), (0, 1)) == 1
    assert bin_value(1.7, equal_edges(5), (0, 1)) == 4
    np.testing.assert_array_equal(bin_value([0.0, 0.3, 0.69, 0.7], (0.3, 0.7), (0, 1)), [0, 1, 1, 2])


def test_equal_edges_are_exact():
    assert equal_edges(5) == (0.2, 0.4, 0.6, 0.8)
    assert equal_edges(1) == ()


def test_state_space_size():
    states = enumerate_states(SPEC)
    assert len(states) == SPEC.n_states == 168
    assert [s.code for s in states] == list(range(168))


def test_state_code_examples():
    assert state_code(0, 0, 0, SPEC) == 0
    assert state_code(1, 2, 27, SPEC) == 167


def test_state_bijection_exhaustive():
    for s in enumerate_states(SPEC):
        assert decode_state(s.code, SPEC) == s


def test_encode_state_reads_configured_features():
    s = encode_state(_features(macd=-0.2, rsi=0.8, maturity=1.0))
    assert (s.macd_bin, s.rsi_bin, s.maturity_bin) == (0, 2, 27)
    s = encode_state(_features(macd=0.1, rsi=0.1, maturity=0.0))
    assert (s.macd_bin, s.rsi_bin, s.maturity_bin) == (1, 0, 0)


def test_decode_state_range():
    with pytest.raises(InvalidSymbol):
        decode_state(168, SPEC)


def test_encode_action_examples():
    assert encode_action((1, 0, 0, 0, 0)).bins == (4, 0, 0, 0, 0)
    assert encode_action((0.2,) * 5).bins == (1, 1, 1, 1, 1)
    assert encode_action((1, 0, 0, 0, 0)).id == 4


def test_action_id_roundtrip_random():
    rng = np.random.default_rng(0)
    for a in rng.dirichlet(np.ones(5), 100):
        sym = encode_action(a)
        assert symbol_bins(sym.id, SPEC) == sym.bins
    # raw bin midpoints (before renormalization) land back in their own bins
    bins = np.array([symbol_bins(i, SPEC) for i in range(SPEC.n_symbols)])
    np.testing.assert_array_equal(encode_actions((bins + 0.5) / 5)[1], np.arange(SPEC.n_symbols))


def test_decode_action_examples():
    np.testing.assert_allclose(decode_action(4), [0.9 / 1.3, 0.1 / 1.3, 0.1 / 1.3, 0.1 / 1.3, 0.1 / 1.3])
    assert decode_action(4)[0] == pytest.approx(0.6923076923, abs=1e-9)
    np.testing.assert_allclose(decode_action(encode_action((0.2,) * 5)), [0.2] * 5)
    with pytest.raises(InvalidSymbol):
        decode_action(5 ** 5)


def test_decode_renormalization_can_move_bins():
    # midpoints (0.9, 0.1, ...) renormalize to 0.692, which sits in bin 3, not 4
    assert encode_action(decode_action(4)).bins == (3, 0, 0, 0, 0)
    uniform = encode_action((0.2,) * 5).id
    assert encode_action(decode_action(uniform)).id == uniform


def test_maturity_bin_formula():
    for t in range(336):
        assert maturity_bin_at(t, 336, SPEC) == min(28 * t // 336, 27)


def test_collapse_never_adds_states(env):
    X = env.features
    base = len(np.unique(StateDiscretizer.from_spec(SPEC).fit_transform(X)))
    for f in ("macd", "rsi", "maturity"):
        spec = SPEC.collapse(f)
        assert len(np.unique(StateDiscretizer.from_spec(spec).fit_transform(X))) <= base
    assert SPEC.collapse("maturity").n_states == 6


def test_with_bins():
    assert SPEC.with_bins("rsi", 4).rsi_edges == (0.25, 0.5, 0.75)
    assert SPEC.with_bins("maturity", 8).n_states == 2 * 3 * 8
    with pytest.raises(ValidationError):
        SPEC.with_bins("macd", 4)
    with pytest.raises(ValidationError):
        SPEC.collapse("volume")


def test_spec_validation():
    with pytest.raises(ValidationError):
        BinSpec(rsi_edges=(0.7, 0.3))
    with pytest.raises(ValidationError):
        BinSpec(macd_feature="price")


def test_trace_from_rollout(env):
    trace = discretize_trace(lambda s: np.full(5, 0.2), env, SPEC, "flat")
    assert len(trace) == 336
    np.testing.assert_array_equal(trace.state_bins()[:, 2], np.minimum(28 * np.arange(336) // 336, 27))
    assert len(trace.visited_states()) < 168
    assert set(trace.action_ids.tolist()) == {encode_action((0.2,) * 5).id}


def test_agent_rollout_lengths(env):
    feats, acts, rewards = agent_rollout(lambda s: np.full(5, 0.2), env)
    assert feats.shape == (336, 7) and acts.shape == (336, 5) and rewards.shape == (335,)


def test_trace_csv_roundtrip(env, tmp_path):
    rng = np.random.default_rng(1)
    trace = discretize(env.features, rng.dirichlet(np.ones(5), 336), SPEC, "x")
    path = tmp_path / "trace.csv"
    trace.save_csv(path)
    back = DiscreteTrace.load_csv(path, SPEC, "x")
    np.testing.assert_array_equal(back.state_codes, trace.state_codes)
    np.testing.assert_array_equal(back.action_ids, trace.action_ids)
    assert path.read_text().splitlines()[0] == "t,state_code,macd_bin,rsi_bin,maturity_bin,action_id,b0,b1,b2,b3,b4"
    with pytest.raises(ParseError):
        DiscreteTrace.from_csv("bad header\n")


def test_trace_validation():
    with pytest.raises(ValidationError):
        DiscreteTrace([0, 1], [0])
    with pytest.raises(InvalidSymbol):
        DiscreteTrace([168], [0])


def test_discretizer_estimator(env):
    est = StateDiscretizer(maturity_bins=14)
    assert est.get_params()["maturity_bins"] == 14
    codes = est.fit(env.features).transform(env.features)
    assert codes.max() < est.spec_.n_states
    back = est.inverse_transform(codes[:3])
    assert back.shape == (3, 3)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=5, max_size=5).filter(lambda v: sum(v) > 0))
def test_encode_action_bins_in_range(v):
    a = np.array(v) / sum(v)
    sym = encode_action(a)
    assert all(0 <= b < 5 for b in sym.bins)
    assert sym.id == encode_actions(a[None])[1][0]
