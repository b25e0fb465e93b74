import pytest

from affinity_xrl.config import load_config
from affinity_xrl.ddpg import DEFAULT_PRIORS, PROTOTYPES
from affinity_xrl.exceptions import ConfigError


def write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_defaults_without_a_file():
    cfg = load_config(environ={})
    assert cfg.labels == list(PROTOTYPES)
    assert cfg.bins.n_states == 168
    assert [p.train.seed for p in cfg.prototypes] == [0, 1, 2, 3, 4]
    assert cfg.prototypes[1].prior.vector.tolist() == pytest.approx(DEFAULT_PRIORS["conscientiousness"])


def test_seed_scheme():
    cfg = load_config(environ={}, seed=3)
    assert [p.train.seed for p in cfg.prototypes] == [3000, 3001, 3002, 3003, 3004]


def test_environment_overrides_file(tmp_path):
    path = write(tmp_path, "[train]\nepisodes = 7\n[explain]\ndot_states = 4\n")
    cfg = load_config(path, environ={"AXRL_TRAIN_EPISODES": "2", "AXRL_RUN_SEED": "5"})
    assert all(p.train.episodes == 2 for p in cfg.prototypes)
    assert cfg.seed == 5 and cfg.dot_states == 4
    assert load_config(path, environ={}).prototypes[0].train.episodes == 7


def test_prototype_sections(tmp_path):
    extra = {2: "lam = 4\n"}
    path = write(tmp_path, "".join(f"[prototype.p{k}]\nprior = 0.2,0.2,0.2,0.2,0.2\n{extra.get(k, '')}"
                                   for k in range(5)))
    cfg = load_config(path, environ={"AXRL_PROTOTYPE_P3_LAM": "0.5"})
    assert cfg.labels == ["p0", "p1", "p2", "p3", "p4"]
    assert [p.train.lam for p in cfg.prototypes] == [1.0, 1.0, 4.0, 0.5, 1.0]


def test_exactly_five_prototypes(tmp_path):
    path = write(tmp_path, "[prototype.a]\nprior = 1,0,0,0,0\n")
    with pytest.raises(ConfigError, match="five"):
        load_config(path, environ={})


def test_unknown_label_needs_prior(tmp_path):
    text = "".join(f"[prototype.{p}]\n" for p in PROTOTYPES[:4]) + "[prototype.other]\n"
    with pytest.raises(ConfigError, match="prototype.other.prior"):
        load_config(write(tmp_path, text), environ={})


def test_missing_csv_names_the_key(tmp_path):
    (tmp_path / "s.csv").write_text("date,price\n")
    text = "[data]\nsource = csv\nstocks_csv = s.csv\nproperty_csv = nowhere.csv\ninterest_csv = s.csv\n"
    with pytest.raises(ConfigError, match="data.property_csv"):
        load_config(write(tmp_path, text), environ={})


def test_bad_values(tmp_path):
    with pytest.raises(ConfigError, match="train.episodes"):
        load_config(write(tmp_path, "[train]\nepisodes = many\n"), environ={})
    with pytest.raises(ConfigError, match="unknown training key"):
        load_config(write(tmp_path, "[train]\nepochs = 3\n"), environ={})
    with pytest.raises(ConfigError, match="data.source"):
        load_config(write(tmp_path, "[data]\nsource = web\n"), environ={})
    with pytest.raises(ConfigError, match="not found"):
        load_config(str(tmp_path / "absent.ini"), environ={})
    with pytest.raises(ConfigError):
        load_config(environ={}, workers=0)


def test_malformed_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot parse"):
        load_config(write(tmp_path, "[train]\n[train]\n"), environ={})
